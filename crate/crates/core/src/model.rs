//! Shared vocabulary: states, modes, Lipschitz bounds, hybrid models and
//! initial data.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Purpose};

/// A finite state in R^n, n >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("state vector must have dimension >= 1"));
        }
        if let Some(bad) = coords.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("state vector entry {bad} is not finite")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A regime of the switching chain. Stored zero-based; the user-facing
/// numbering `1..=N` is available through [`ModeIndex::one_based`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub const fn new(zero_based: usize) -> Self {
        Self(zero_based)
    }

    pub fn from_one_based(value: usize, modes: usize) -> Result<Self> {
        if value == 0 || value > modes {
            return Err(invalid(format!("mode {value} outside 1..={modes}")));
        }
        Ok(Self(value - 1))
    }

    pub const fn index(self) -> usize {
        self.0
    }

    pub const fn one_based(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.one_based())
    }
}

/// Global Lipschitz constants of the drift, control and diffusion maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub drift: f64,
    pub control: f64,
    pub diffusion: f64,
}

impl LipschitzBounds {
    pub fn new(drift: f64, control: f64, diffusion: f64) -> Result<Self> {
        for (name, v) in [("drift", drift), ("control", control), ("diffusion", diffusion)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} Lipschitz constant {v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            drift,
            control,
            diffusion,
        })
    }
}

/// Coefficient maps of a hybrid SDE
/// `dx = [f(x,i,t) + u(., i, t)] dt + g(x,i,t) dB`, with `x` in R^n and an
/// m-dimensional Brownian motion.
///
/// Modes are zero-based here. `diffusion` writes the n-by-m matrix in
/// row-major order, so `out[r * m + c]` is row `r`, column `c`.
pub trait Coefficients: Send + Sync {
    fn dimension(&self) -> usize;
    fn brownian_dim(&self) -> usize;
    fn modes(&self) -> usize;
    fn drift(&self, x: &[f64], mode: usize, t: f64, out: &mut [f64]);
    fn diffusion(&self, x: &[f64], mode: usize, t: f64, out: &mut [f64]);
    fn control(&self, x: &[f64], mode: usize, t: f64, out: &mut [f64]);

    /// True when none of the maps depend on `t`.
    fn is_autonomous(&self) -> bool {
        false
    }

    /// One Euler step's worth of evaluations: writes `f(x) + u(feedback)`
    /// (or just `f(x)` when `feedback` is `None`) to `drift` and `g(x)` to
    /// `diffusion`. `scratch` has length n. Override to fuse the three maps.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn step_terms(
        &self,
        x: &[f64],
        feedback: Option<&[f64]>,
        mode: usize,
        t: f64,
        drift: &mut [f64],
        scratch: &mut [f64],
        diffusion: &mut [f64],
    ) {
        self.drift(x, mode, t, drift);
        if let Some(y) = feedback {
            self.control(y, mode, t, scratch);
            for (d, u) in drift.iter_mut().zip(scratch.iter()) {
                *d += *u;
            }
        }
        self.diffusion(x, mode, t, diffusion);
    }
}

/// A coefficient set together with its declared Lipschitz bounds.
#[derive(Clone)]
pub struct HybridModel {
    name: String,
    coefficients: Arc<dyn Coefficients>,
    lipschitz: LipschitzBounds,
    globally_lipschitz: bool,
}

impl fmt::Debug for HybridModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridModel")
            .field("name", &self.name)
            .field("dimension", &self.dimension())
            .field("brownian_dim", &self.brownian_dim())
            .field("modes", &self.modes())
            .field("lipschitz", &self.lipschitz)
            .field("globally_lipschitz", &self.globally_lipschitz)
            .finish()
    }
}

impl HybridModel {
    /// Builds a model, spot-checking that every map vanishes at the origin
    /// in each mode at t = 0 and t = 1.
    pub fn new(
        name: impl Into<String>,
        coefficients: Arc<dyn Coefficients>,
        lipschitz: LipschitzBounds,
    ) -> Result<Self> {
        let model = Self::new_unchecked(name, coefficients, lipschitz);
        model.check_shape()?;
        for mode in 0..model.modes() {
            for t in [0.0, 1.0] {
                let origin = model.origin_values(mode, t)?;
                for (what, magnitude) in origin {
                    if magnitude != 0.0 {
                        return Err(Error::NonzeroAtOrigin {
                            mode: mode + 1,
                            time: t,
                            what,
                            magnitude,
                        });
                    }
                }
            }
        }
        Ok(model)
    }

    /// Builds a model whose maps are known not to be globally Lipschitz.
    /// The declared bounds are kept for reference but are never checked,
    /// and threshold calculations refuse the model.
    pub fn non_lipschitz(name: impl Into<String>, coefficients: Arc<dyn Coefficients>) -> Result<Self> {
        let mut model = Self::new(name, coefficients, LipschitzBounds::new(0.0, 0.0, 0.0)?)?;
        model.globally_lipschitz = false;
        Ok(model)
    }

    /// Skips the origin check; meant for diagnosing faulty models with
    /// [`validate_model`].
    pub fn new_unchecked(
        name: impl Into<String>,
        coefficients: Arc<dyn Coefficients>,
        lipschitz: LipschitzBounds,
    ) -> Self {
        Self {
            name: name.into(),
            coefficients,
            lipschitz,
            globally_lipschitz: true,
        }
    }

    fn check_shape(&self) -> Result<()> {
        if self.dimension() == 0 || self.brownian_dim() == 0 || self.modes() == 0 {
            return Err(invalid(format!(
                "model '{}' needs n, m, N >= 1 (got n={}, m={}, N={})",
                self.name,
                self.dimension(),
                self.brownian_dim(),
                self.modes()
            )));
        }
        Ok(())
    }

    fn origin_values(&self, mode: usize, t: f64) -> Result<[(&'static str, f64); 3]> {
        let zero = vec![0.0; self.dimension()];
        Ok([
            ("drift", norm(&self.eval_drift(&zero, mode, t)?)),
            ("diffusion", norm(&self.eval_diffusion(&zero, mode, t)?)),
            ("control", norm(&self.eval_control(&zero, mode, t)?)),
        ])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.dimension()
    }

    pub fn brownian_dim(&self) -> usize {
        self.coefficients.brownian_dim()
    }

    pub fn modes(&self) -> usize {
        self.coefficients.modes()
    }

    pub fn lipschitz(&self) -> LipschitzBounds {
        self.lipschitz
    }

    pub fn is_globally_lipschitz(&self) -> bool {
        self.globally_lipschitz
    }

    pub fn with_lipschitz(mut self, lipschitz: LipschitzBounds) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn eval_drift(&self, x: &[f64], mode: usize, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        self.coefficients.drift(x, mode, t, &mut out);
        self.finite(out, x, mode, t, "drift")
    }

    /// Row-major n-by-m diffusion matrix.
    pub fn eval_diffusion(&self, x: &[f64], mode: usize, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension() * self.brownian_dim()];
        self.coefficients.diffusion(x, mode, t, &mut out);
        self.finite(out, x, mode, t, "diffusion")
    }

    pub fn eval_control(&self, x: &[f64], mode: usize, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        self.coefficients.control(x, mode, t, &mut out);
        self.finite(out, x, mode, t, "control")
    }

    fn finite(&self, out: Vec<f64>, x: &[f64], mode: usize, t: f64, what: &'static str) -> Result<Vec<f64>> {
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::ModelEvaluation {
                mode: mode + 1,
                input: x.to_vec(),
                time: t,
                what,
            })
        }
    }
}

/// History `x(s)` for `s` in `[-tau, 0]` sampled on the integration grid,
/// plus the initial mode. Sample `k` sits at `s = -tau + k * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSegment {
    step: f64,
    samples: Vec<Vec<f64>>,
    initial_mode: ModeIndex,
}

impl InitialSegment {
    /// The degenerate tau = 0 segment holding only x(0).
    pub fn point(x0: StateVector, initial_mode: ModeIndex) -> Self {
        Self {
            step: 0.0,
            samples: vec![x0.into_inner()],
            initial_mode,
        }
    }

    pub fn constant(x: StateVector, delay_steps: usize, step: f64, initial_mode: ModeIndex) -> Result<Self> {
        Self::from_fn(delay_steps, step, initial_mode, |_| x.as_slice().to_vec())
    }

    /// Samples `history(s)` at the `delay_steps + 1` grid points of `[-tau, 0]`.
    pub fn from_fn(
        delay_steps: usize,
        step: f64,
        initial_mode: ModeIndex,
        mut history: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("step {step} must be positive")));
        }
        let tau = delay_steps as f64 * step;
        let samples: Vec<Vec<f64>> = (0..=delay_steps)
            .map(|k| history(-tau + k as f64 * step))
            .collect();
        Self::from_samples(samples, step, initial_mode)
    }

    pub fn from_samples(samples: Vec<Vec<f64>>, step: f64, initial_mode: ModeIndex) -> Result<Self> {
        let n = samples.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(invalid("initial segment needs at least one non-empty sample"));
        }
        for s in &samples {
            if s.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial segment sample of length {} (expected {n})",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(invalid("initial segment contains a non-finite value"));
            }
        }
        Ok(Self {
            step,
            samples,
            initial_mode,
        })
    }

    pub fn delay_steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn delay(&self) -> f64 {
        self.delay_steps() as f64 * self.step
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dimension(&self) -> usize {
        self.samples[0].len()
    }

    pub fn initial_mode(&self) -> ModeIndex {
        self.initial_mode
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// x(0).
    pub fn current(&self) -> &[f64] {
        self.samples.last().expect("non-empty")
    }

    /// Linear interpolation between grid samples; exact at grid points.
    pub fn at(&self, s: f64) -> Result<Vec<f64>> {
        let tau = self.delay();
        let m = self.delay_steps();
        if m == 0 {
            if s == 0.0 {
                return Ok(self.current().to_vec());
            }
            return Err(invalid(format!("time {s} outside the degenerate segment {{0}}")));
        }
        if !(s >= -tau - 1e-12 * tau.max(1.0) && s <= 0.0) {
            return Err(invalid(format!("time {s} outside [{}, 0]", -tau)));
        }
        let pos = ((s + tau) / self.step).clamp(0.0, m as f64);
        let k = (pos.floor() as usize).min(m);
        let frac = pos - k as f64;
        if frac == 0.0 || k == m {
            return Ok(self.samples[k].clone());
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        Ok(a.iter().zip(b).map(|(u, v)| u + frac * (v - u)).collect())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Which declared bound a spot check concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Drift,
    Control,
    Diffusion,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFlag {
    /// `|f(0,i,t)|`, `|g(0,i,t)|` or `|u(0,i,t)|` is nonzero.
    ZeroCondition {
        mode: ModeIndex,
        kind: CoefficientKind,
        magnitude: f64,
    },
    /// An empirical difference quotient exceeded the declared constant.
    Lipschitz {
        mode: ModeIndex,
        kind: CoefficientKind,
        ratio: f64,
        declared: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeValidation {
    pub mode: ModeIndex,
    pub origin_drift: f64,
    pub origin_diffusion: f64,
    pub origin_control: f64,
    pub drift_ratio: f64,
    pub control_ratio: f64,
    pub diffusion_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub modes: Vec<ModeValidation>,
    pub flags: Vec<ValidationFlag>,
    /// False for models flagged non-Lipschitz, whose ratios are reported
    /// but never compared with the declared bounds.
    pub lipschitz_checked: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

const LIPSCHITZ_REL_TOL: f64 = 1e-9;

/// Spot-checks the origin condition and the declared Lipschitz bounds.
///
/// Origin values are probed at t = 0, t = 1 and `probe_count` log-uniform
/// times in `[1e-6, 1e3]`. Difference quotients use `probe_count` random
/// pairs per mode: a base point with log-uniform radius in `[1e-3, 1e3]`
/// and an offset of log-uniform relative size in `[1e-6, 2]`.
pub fn validate_model(model: &HybridModel, probe_count: usize, rng_seed: u64) -> Result<ValidationReport> {
    if probe_count == 0 {
        return Err(invalid("probe_count must be >= 1"));
    }
    let n = model.dimension();
    let mut rng = substream(rng_seed, 0, Purpose::Probe);
    let mut times = vec![0.0, 1.0];
    times.extend((0..probe_count).map(|_| log_uniform(&mut rng, 1e-6, 1e3)));

    let zero = vec![0.0; n];
    let lip = model.lipschitz();
    let mut modes = Vec::with_capacity(model.modes());
    let mut flags = Vec::new();

    for mode in 0..model.modes() {
        let mi = ModeIndex::new(mode);
        let (mut of, mut og, mut ou) = (0.0_f64, 0.0_f64, 0.0_f64);
        for &t in &times {
            of = of.max(norm(&model.eval_drift(&zero, mode, t)?));
            og = og.max(norm(&model.eval_diffusion(&zero, mode, t)?));
            ou = ou.max(norm(&model.eval_control(&zero, mode, t)?));
        }
        for (kind, magnitude) in [
            (CoefficientKind::Drift, of),
            (CoefficientKind::Diffusion, og),
            (CoefficientKind::Control, ou),
        ] {
            if magnitude > 0.0 {
                flags.push(ValidationFlag::ZeroCondition { mode: mi, kind, magnitude });
            }
        }

        let (mut rf, mut rg, mut ru) = (0.0_f64, 0.0_f64, 0.0_f64);
        for _ in 0..probe_count {
            let r = log_uniform(&mut rng, 1e-3, 1e3);
            let x = random_direction(&mut rng, n, r);
            let s = log_uniform(&mut rng, 1e-6, 2.0) * r;
            let dx = random_direction(&mut rng, n, s);
            let y: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let dist = distance(&x, &y);
            if dist == 0.0 {
                continue;
            }
            let t = log_uniform(&mut rng, 1e-6, 1e3);
            rf = rf.max(distance(&model.eval_drift(&x, mode, t)?, &model.eval_drift(&y, mode, t)?) / dist);
            rg = rg.max(distance(&model.eval_diffusion(&x, mode, t)?, &model.eval_diffusion(&y, mode, t)?) / dist);
            ru = ru.max(distance(&model.eval_control(&x, mode, t)?, &model.eval_control(&y, mode, t)?) / dist);
        }
        if model.is_globally_lipschitz() {
            for (kind, ratio, declared) in [
                (CoefficientKind::Drift, rf, lip.drift),
                (CoefficientKind::Control, ru, lip.control),
                (CoefficientKind::Diffusion, rg, lip.diffusion),
            ] {
                if ratio > declared * (1.0 + LIPSCHITZ_REL_TOL) {
                    flags.push(ValidationFlag::Lipschitz {
                        mode: mi,
                        kind,
                        ratio,
                        declared,
                    });
                }
            }
        }
        modes.push(ModeValidation {
            mode: mi,
            origin_drift: of,
            origin_diffusion: og,
            origin_control: ou,
            drift_ratio: rf,
            control_ratio: ru,
            diffusion_ratio: rg,
        });
    }
    Ok(ValidationReport {
        modes,
        flags,
        lipschitz_checked: model.is_globally_lipschitz(),
    })
}

pub(crate) fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Uniform direction on the sphere scaled to `radius`.
pub(crate) fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = norm(&v);
        if len > 1e-300 {
            return v.into_iter().map(|a| a * radius / len).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = A_i x with a fixed matrix per mode; no control, no noise.
    struct Linear {
        a: Vec<[[f64; 2]; 2]>,
        offset: f64,
    }

    impl Coefficients for Linear {
        fn dimension(&self) -> usize {
            2
        }
        fn brownian_dim(&self) -> usize {
            1
        }
        fn modes(&self) -> usize {
            self.a.len()
        }
        fn drift(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
            let a = &self.a[mode];
            out[0] = a[0][0] * x[0] + a[0][1] * x[1] + self.offset;
            out[1] = a[1][0] * x[0] + a[1][1] * x[1];
        }
        fn diffusion(&self, _x: &[f64], _mode: usize, _t: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn control(&self, _x: &[f64], _mode: usize, _t: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    fn spectral_norm_2x2(a: [[f64; 2]; 2]) -> f64 {
        // Largest eigenvalue of AᵀA in closed form.
        let p = a[0][0] * a[0][0] + a[1][0] * a[1][0];
        let q = a[0][0] * a[0][1] + a[1][0] * a[1][1];
        let r = a[0][1] * a[0][1] + a[1][1] * a[1][1];
        let half_tr = 0.5 * (p + r);
        (half_tr + (0.25 * (p - r) * (p - r) + q * q).sqrt()).sqrt()
    }

    #[test]
    fn nonzero_origin_is_rejected_by_constructor_and_flagged_by_validation() {
        let coeffs = Arc::new(Linear {
            a: vec![[[0.0, 0.0], [0.0, 0.0]]],
            offset: 1.0,
        });
        let lip = LipschitzBounds::new(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            HybridModel::new("bad", coeffs.clone(), lip),
            Err(Error::NonzeroAtOrigin { what: "drift", .. })
        ));
        let model = HybridModel::new_unchecked("bad", coeffs, lip);
        let report = validate_model(&model, 16, 1).unwrap();
        assert!(report.flags.iter().any(|f| matches!(
            f,
            ValidationFlag::ZeroCondition { kind: CoefficientKind::Drift, magnitude, .. } if (*magnitude - 1.0).abs() < 1e-15
        )));
    }

    #[test]
    fn lipschitz_flag_when_declared_below_operator_norm() {
        let a = [[0.3, -1.2], [0.7, 0.4]];
        let op = spectral_norm_2x2(a);
        let coeffs = Arc::new(Linear { a: vec![a], offset: 0.0 });

        let honest = HybridModel::new("lin", coeffs.clone(), LipschitzBounds::new(op, 0.0, 0.0).unwrap()).unwrap();
        assert!(validate_model(&honest, 500, 3).unwrap().is_clean());

        let low = HybridModel::new("lin", coeffs, LipschitzBounds::new(0.9 * op, 0.0, 0.0).unwrap()).unwrap();
        let report = validate_model(&low, 500, 3).unwrap();
        assert!(report
            .flags
            .iter()
            .any(|f| matches!(f, ValidationFlag::Lipschitz { kind: CoefficientKind::Drift, .. })));
    }

    #[test]
    fn validation_needs_probes() {
        let coeffs = Arc::new(Linear {
            a: vec![[[0.0; 2]; 2]],
            offset: 0.0,
        });
        let model = HybridModel::new("zero", coeffs, LipschitzBounds::new(0.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(validate_model(&model, 0, 0).is_err());
    }

    #[test]
    fn segment_interpolation_is_exact_on_grid() {
        let seg = InitialSegment::from_fn(4, 0.25, ModeIndex::new(0), |s| vec![s * s, 1.0 + s]).unwrap();
        assert_eq!(seg.delay(), 1.0);
        for (k, sample) in seg.samples().iter().enumerate() {
            assert_eq!(&seg.at(-1.0 + k as f64 * 0.25).unwrap(), sample);
        }
        let mid = seg.at(-0.125).unwrap();
        assert!((mid[0] - 0.5 * (0.0625 + 0.0)).abs() < 1e-15);
        assert!(seg.at(0.1).is_err());
        assert!(seg.at(-1.5).is_err());
    }

    #[test]
    fn zero_delay_segment_is_a_point() {
        let seg = InitialSegment::point(StateVector::new(vec![1.0, 2.0]).unwrap(), ModeIndex::new(0));
        assert_eq!(seg.delay_steps(), 0);
        assert_eq!(seg.at(0.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn mode_index_numbering() {
        assert_eq!(ModeIndex::from_one_based(2, 2).unwrap().index(), 1);
        assert!(ModeIndex::from_one_based(0, 2).is_err());
        assert!(ModeIndex::from_one_based(3, 2).is_err());
        assert!(StateVector::new(vec![]).is_err());
        assert!(StateVector::new(vec![f64::NAN]).is_err());
        assert!(LipschitzBounds::new(-1.0, 0.0, 0.0).is_err());
    }
}
