//! M-matrix certificates for the moment-decay pair `(M, gamma)`.
//!
//! If every mode satisfies the pointwise bound
//! `LV_i(x, t) <= -alpha_i` on the stability form below, and the matrix
//! `A = diag(alpha) - Gamma` is a nonsingular M-matrix, then the
//! non-delay closed loop obeys `E|x(t)|^p <= M E|x(0)|^p e^{-gamma t}` with
//! `theta = A^{-1} 1`, `M = max(theta) / min(theta)` and
//! `gamma = 1 / max(theta)`.
//!
//! The pointwise bound itself is a modelling obligation. [`falsify_alpha`]
//! can only look for counterexamples by sampling; passing it is not a proof.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::markov::GeneratorMatrix;
use crate::model::{log_uniform, norm, random_direction, HybridModel, ModeIndex};
use crate::rng::{substream, Purpose};

/// Residual allowed in `A theta = 1` before a certificate is refused.
pub const ROUND_TRIP_TOL: f64 = 1e-10;

/// Excess over `-alpha_i` tolerated before a sample counts as a violation.
pub const FALSIFY_TOL: f64 = 1e-9;

const FALSIFY_BLOCK: usize = 1024;

/// Per-mode stability margins.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("alpha vector is empty"));
        }
        if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("alpha entry {a} is not finite")));
        }
        Ok(Self(alphas))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrixCertificate {
    pub a: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub moment_bound: f64,
    pub gamma: f64,
    /// `max_i |(A theta)_i - 1|`.
    pub residual: f64,
}

/// `diag(alpha) - Gamma`.
pub fn build_a(alpha: &AlphaVector, generator: &GeneratorMatrix) -> Result<DMatrix<f64>> {
    let n = generator.modes();
    if alpha.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} margins for a {n}-mode generator",
            alpha.len()
        )));
    }
    let mut a = -generator.to_matrix();
    for (i, &ai) in alpha.as_slice().iter().enumerate() {
        a[(i, i)] += ai;
    }
    Ok(a)
}

/// Decides whether `a` is a nonsingular M-matrix by solving `a theta = 1`
/// and checking `theta > 0`, which characterises nonsingular M-matrices
/// among Z-matrices.
pub fn certify_m_matrix(a: &DMatrix<f64>) -> Result<MMatrixCertificate> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(invalid(format!("entry ({i}, {j}) = {v} is not finite")));
            }
            if i != j && v > 0.0 {
                return Err(Error::NotZMatrix { row: i, col: j, value: v });
            }
        }
    }

    let ones = DVector::from_element(n, 1.0);
    let lu = a.clone().lu();
    let mut theta = lu.solve(&ones).ok_or(Error::Singular)?;
    // One step of iterative refinement.
    if let Some(correction) = lu.solve(&(&ones - a * &theta)) {
        theta += correction;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    if let Some((index, &value)) = theta.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NotMMatrix { index, value });
    }
    let residual = (a * &theta - &ones).amax();
    if residual > ROUND_TRIP_TOL {
        return Err(Error::Singular);
    }

    let beta1 = theta.min();
    let beta2 = theta.max();
    Ok(MMatrixCertificate {
        a: a.clone(),
        theta: theta.iter().copied().collect(),
        beta1,
        beta2,
        moment_bound: beta2 / beta1,
        gamma: 1.0 / beta2,
        residual,
    })
}

/// Convenience wrapper: `certify_m_matrix(build_a(alpha, generator))`.
pub fn certify(alpha: &AlphaVector, generator: &GeneratorMatrix) -> Result<MMatrixCertificate> {
    certify_m_matrix(&build_a(alpha, generator)?)
}

/// The generator of `V(x, i) = |x|^p` applied to the non-delay closed loop,
/// divided by `|x|^p`:
///
/// `(p/|x|^2)(x'(f + u) + |g|_F^2 / 2) - p(2-p)/(2|x|^4) |x'g|^2`.
pub fn stability_form(model: &HybridModel, x: &[f64], mode: ModeIndex, t: f64, p: f64) -> Result<f64> {
    if x.len() != model.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for a {}-dimensional model",
            x.len(),
            model.dimension()
        )));
    }
    if mode.index() >= model.modes() {
        return Err(invalid(format!("mode {mode} out of range")));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if !(r2 > 0.0) {
        return Err(invalid("stability form is undefined at the origin"));
    }
    let i = mode.index();
    let f = model.eval_drift(x, i, t)?;
    let u = model.eval_control(x, i, t)?;
    let g = model.eval_diffusion(x, i, t)?;
    let m = model.brownian_dim();

    let inner: f64 = x.iter().zip(f.iter().zip(&u)).map(|(xi, (fi, ui))| xi * (fi + ui)).sum();
    let frob: f64 = g.iter().map(|v| v * v).sum();
    let xg: f64 = (0..m)
        .map(|c| {
            let col: f64 = x.iter().enumerate().map(|(r, xr)| xr * g[r * m + c]).sum();
            col * col
        })
        .sum();
    Ok(p / r2 * (inner + 0.5 * frob) - p * (2.0 - p) / (2.0 * r2 * r2) * xg)
}

/// Largest sampled excess `stability_form + alpha_i` in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeExcess {
    pub mode: ModeIndex,
    pub max_excess: f64,
    pub witness_state: Vec<f64>,
    pub witness_time: f64,
}

impl ModeExcess {
    pub fn is_violation(&self) -> bool {
        self.max_excess > FALSIFY_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationReport {
    pub samples_per_mode: usize,
    pub modes: Vec<ModeExcess>,
}

impl FalsificationReport {
    pub fn falsified(&self) -> bool {
        self.modes.iter().any(ModeExcess::is_violation)
    }

    /// The worst violating sample, if any.
    pub fn witness(&self) -> Option<&ModeExcess> {
        self.modes
            .iter()
            .filter(|m| m.is_violation())
            .max_by(|a, b| a.max_excess.total_cmp(&b.max_excess))
    }
}

/// Searches for states where `stability_form(x, i, t) > -alpha_i`.
///
/// Each mode receives `samples_per_mode` draws: an isotropic direction at a
/// log-uniform radius in `[1e-6, 1e6]` and a log-uniform time in
/// `[1e-6, 1e3]`. Samples are split into fixed blocks with their own
/// substreams, so the report does not depend on the thread count.
pub fn falsify_alpha(
    model: &HybridModel,
    alpha: &AlphaVector,
    p: f64,
    samples_per_mode: usize,
    seed: u64,
) -> Result<FalsificationReport> {
    if samples_per_mode == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if alpha.len() != model.modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} margins for a {}-mode model",
            alpha.len(),
            model.modes()
        )));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("moment order p = {p} must be positive")));
    }
    let n = model.dimension();
    let blocks_per_mode = samples_per_mode.div_ceil(FALSIFY_BLOCK);

    let mut modes = Vec::with_capacity(model.modes());
    for i in 0..model.modes() {
        let mode = ModeIndex::new(i);
        let alpha_i = alpha.as_slice()[i];
        let per_block: Vec<Result<ModeExcess>> = (0..blocks_per_mode)
            .into_par_iter()
            .map(|b| {
                let stream = (i * blocks_per_mode + b) as u64;
                let mut rng = substream(seed, stream, Purpose::Falsify);
                let count = FALSIFY_BLOCK.min(samples_per_mode - b * FALSIFY_BLOCK);
                let mut best = ModeExcess {
                    mode,
                    max_excess: f64::NEG_INFINITY,
                    witness_state: Vec::new(),
                    witness_time: 0.0,
                };
                for _ in 0..count {
                    let radius = log_uniform(&mut rng, 1e-6, 1e6);
                    let x = random_direction(&mut rng, n, radius);
                    let t = log_uniform(&mut rng, 1e-6, 1e3);
                    let excess = stability_form(model, &x, mode, t, p)? + alpha_i;
                    if excess > best.max_excess || best.witness_state.is_empty() {
                        best = ModeExcess {
                            mode,
                            max_excess: excess,
                            witness_state: x,
                            witness_time: t,
                        };
                    }
                }
                Ok(best)
            })
            .collect();
        let mut best: Option<ModeExcess> = None;
        for block in per_block {
            let block = block?;
            if best.as_ref().is_none_or(|b| block.max_excess > b.max_excess) {
                best = Some(block);
            }
        }
        modes.push(best.expect("at least one block"));
    }
    debug_assert!(modes.iter().all(|m| norm(&m.witness_state) > 0.0));
    Ok(FalsificationReport {
        samples_per_mode,
        modes,
    })
}

/// A random Z-matrix with a positive dominant diagonal, which is always a
/// nonsingular M-matrix. Used by property tests here and downstream.
#[doc(hidden)]
pub fn random_m_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let v: f64 = rng.random_range(0.0..2.0);
                a[(i, j)] = -v;
                off += v;
            }
        }
        a[(i, i)] = off + rng.random_range(0.05..3.0);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficients, LipschitzBounds};
    use std::sync::Arc;

    fn reference_generator() -> GeneratorMatrix {
        GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }

    fn sig(a: f64, b: f64, digits: i32) -> bool {
        let scale = 10f64.powi(b.abs().log10().floor() as i32 - digits + 1);
        (a - b).abs() <= 0.5 * scale
    }

    #[test]
    fn build_a_examples() {
        let alpha = AlphaVector::new(vec![0.3848, 0.0012]).unwrap();
        let a = build_a(&alpha, &reference_generator()).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.3848, -1.0, -2.0, 2.0012]));

        let zero = GeneratorMatrix::new(&[vec![0.0]]).unwrap();
        assert_eq!(build_a(&AlphaVector::new(vec![0.0]).unwrap(), &zero).unwrap()[(0, 0)], 0.0);

        let zero2 = GeneratorMatrix::new(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let id = build_a(&AlphaVector::new(vec![1.0, 1.0]).unwrap(), &zero2).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));

        assert!(matches!(
            build_a(&AlphaVector::new(vec![1.0]).unwrap(), &reference_generator()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn oscillator_certificate() {
        let alpha = AlphaVector::new(vec![0.3848, 0.0012]).unwrap();
        let cert = certify(&alpha, &reference_generator()).unwrap();
        assert!(sig(cert.theta[0], 3.891286, 7));
        assert!(sig(cert.theta[1], 4.388653, 7));
        assert!(sig(cert.moment_bound, 1.127816, 7));
        assert!(sig(cert.gamma, 0.2278604, 7));
        assert!(cert.residual <= ROUND_TRIP_TOL);
        assert_eq!(cert.beta1, cert.theta[0]);
        assert_eq!(cert.beta2, cert.theta[1]);
    }

    #[test]
    fn identity_and_rejections() {
        let cert = certify_m_matrix(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(cert.theta, vec![1.0; 3]);
        assert_eq!((cert.moment_bound, cert.gamma), (1.0, 1.0));

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(matches!(certify_m_matrix(&bad), Err(Error::NotMMatrix { .. })));

        let not_z = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(certify_m_matrix(&not_z), Err(Error::NotZMatrix { row: 0, col: 1, .. })));

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(certify_m_matrix(&singular).is_err());

        let negative = AlphaVector::new(vec![-5.0, -5.0]).unwrap();
        assert!(certify(&negative, &reference_generator()).is_err());
    }

    /// f = A x, u = -D x, g = G x, single Brownian motion.
    struct Linear {
        a: [[f64; 2]; 2],
        d: [[f64; 2]; 2],
        g: [[f64; 2]; 2],
    }

    fn apply(m: &[[f64; 2]; 2], x: &[f64], out: &mut [f64], sign: f64) {
        for r in 0..2 {
            out[r] = sign * (m[r][0] * x[0] + m[r][1] * x[1]);
        }
    }

    impl Coefficients for Linear {
        fn dimension(&self) -> usize {
            2
        }
        fn brownian_dim(&self) -> usize {
            1
        }
        fn modes(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
            apply(&self.a, x, out, 1.0)
        }
        fn control(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
            apply(&self.d, x, out, -1.0)
        }
        fn diffusion(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
            apply(&self.g, x, out, 1.0)
        }
        fn is_autonomous(&self) -> bool {
            true
        }
    }

    fn linear(a: [[f64; 2]; 2], d: [[f64; 2]; 2], g: [[f64; 2]; 2]) -> HybridModel {
        HybridModel::new("linear", Arc::new(Linear { a, d, g }), LipschitzBounds::new(5.0, 5.0, 5.0).unwrap()).unwrap()
    }

    const ZERO: [[f64; 2]; 2] = [[0.0; 2]; 2];

    #[test]
    fn stability_form_trivial_cases() {
        let zero = linear(ZERO, ZERO, ZERO);
        assert_eq!(stability_form(&zero, &[0.3, -2.0], ModeIndex::new(0), 1.0, 0.7).unwrap(), 0.0);
        let contracting = linear([[-1.0, 0.0], [0.0, -1.0]], ZERO, ZERO);
        for p in [0.5, 1.0, 3.0] {
            let v = stability_form(&contracting, &[1.5, -0.2], ModeIndex::new(0), 0.0, p).unwrap();
            assert!((v + p).abs() < 1e-15);
        }
        assert!(stability_form(&zero, &[0.0, 0.0], ModeIndex::new(0), 0.0, 1.0).is_err());
    }

    #[test]
    fn stability_form_scalar_diffusion_closed_form() {
        // g = b I (one Brownian column of the identity is not square, so use
        // G = [[b, 0], [0, 0]] acting on x): for x = (1, 0), xᵀg = b, |g|² = b².
        let b = 0.7;
        let m = linear(ZERO, ZERO, [[b, 0.0], [0.0, 0.0]]);
        let p = 0.99;
        let v = stability_form(&m, &[1.0, 0.0], ModeIndex::new(0), 0.0, p).unwrap();
        let expected = p * 0.5 * b * b - p * (2.0 - p) / 2.0 * b * b;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_model_never_falsified() {
        let zero = linear(ZERO, ZERO, ZERO);
        let report = falsify_alpha(&zero, &AlphaVector::new(vec![0.0]).unwrap(), 0.9, 2000, 4).unwrap();
        assert!(!report.falsified());
        assert_eq!(report.modes[0].max_excess, 0.0);
    }

    #[test]
    fn falsification_finds_violations_and_is_deterministic() {
        let m = linear([[-1.0, 0.0], [0.0, 0.5]], ZERO, ZERO);
        let alpha = AlphaVector::new(vec![0.0]).unwrap();
        let report = falsify_alpha(&m, &alpha, 1.0, 3000, 11).unwrap();
        assert!(report.falsified());
        let w = report.witness().unwrap();
        assert!(stability_form(&m, &w.witness_state, w.mode, w.witness_time, 1.0).unwrap() > 0.0);
        assert!(report.modes[0].max_excess <= 0.5 + 1e-12);

        let again = falsify_alpha(&m, &alpha, 1.0, 3000, 11).unwrap();
        assert_eq!(report, again);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        assert_eq!(pool.install(|| falsify_alpha(&m, &alpha, 1.0, 3000, 11).unwrap()), report);
        assert!(falsify_alpha(&m, &alpha, 1.0, 0, 11).is_err());
    }
}
