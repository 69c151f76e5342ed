//! Built-in systems.
//!
//! * A two-dimensional switched stochastic oscillator with a velocity-only
//!   linear feedback `u(x, i) = (-d_i x_1, 0)`, together with the quadratic
//!   forms `Q_i` that bound its stability form on the positive quadrant of
//!   `(x_1^2, x_2^2)`.
//! * Linear hybrid systems `dx = (A_i x - D_i x) dt + sum_k G_ik x dB_k`.
//! * The scalar system `dx = (-x - 2 x^3) dt + x^2 dB`, which is stable
//!   without delay but blows up under an arbitrarily small feedback delay.
//!   It is not globally Lipschitz.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};

use crate::certify::AlphaVector;
use crate::error::{invalid, Error, Result};
use crate::markov::GeneratorMatrix;
use crate::model::{Coefficients, HybridModel, InitialSegment, LipschitzBounds, ModeIndex};
use crate::simulate::{monte_carlo_moment, simulate_paths, ControlMode, MomentEstimate, SimulationConfig};

/// Drift Lipschitz constant declared for the reference oscillator design.
///
/// The supremum of the drift Jacobian norm for the reference coefficients is
/// about 1.334 (mode 1, where `cos x_1 = 1`), so this value is smaller than
/// the bound [`oscillator_lipschitz`] derives when no constant is declared.
pub const REFERENCE_DRIFT_LIPSCHITZ: f64 = 1.118034;

/// Moment order of the reference design.
pub const REFERENCE_DESIGN_ORDER: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorParams {
    /// Damping per mode.
    pub a: Vec<f64>,
    /// Velocity noise intensity per mode.
    pub b: Vec<f64>,
    /// Amplitude of the `sin x_1` restoring term per mode.
    pub c: Vec<f64>,
    /// Feedback gains per mode.
    pub d: Vec<f64>,
    /// Overrides the computed drift Lipschitz constant.
    pub declared_drift_lipschitz: Option<f64>,
}

impl OscillatorParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let params = Self {
            a,
            b,
            c,
            d,
            declared_drift_lipschitz: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// The two-mode reference oscillator with gains designed for order
    /// `design_p`, declaring [`REFERENCE_DRIFT_LIPSCHITZ`].
    pub fn reference(design_p: f64) -> Result<Self> {
        let (d1, d2) = design_oscillator_gains(design_p)?;
        let mut params = Self::new(vec![0.5, 0.1], vec![0.4, 0.5], vec![0.1, -0.1], vec![d1, d2])?;
        params.declared_drift_lipschitz = Some(REFERENCE_DRIFT_LIPSCHITZ);
        Ok(params)
    }

    pub fn with_gains(mut self, d: Vec<f64>) -> Result<Self> {
        self.d = d;
        self.validate()?;
        Ok(self)
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if n == 0 {
            return Err(invalid("oscillator needs at least one mode"));
        }
        if self.b.len() != n || self.c.len() != n || self.d.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "parameter lengths a={}, b={}, c={}, d={} differ",
                n,
                self.b.len(),
                self.c.len(),
                self.d.len()
            )));
        }
        for v in self.a.iter().chain(&self.b).chain(&self.c).chain(&self.d) {
            if !v.is_finite() {
                return Err(invalid(format!("oscillator parameter {v} is not finite")));
            }
        }
        if let Some(d) = self.d.iter().find(|d| **d < 0.0) {
            return Err(invalid(format!("feedback gain {d} is negative")));
        }
        if let Some(l) = self.declared_drift_lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid(format!("declared drift constant {l} is invalid")));
            }
        }
        Ok(())
    }
}

struct Oscillator(OscillatorParams);

impl Coefficients for Oscillator {
    fn dimension(&self) -> usize {
        2
    }
    fn brownian_dim(&self) -> usize {
        1
    }
    fn modes(&self) -> usize {
        self.0.modes()
    }
    #[inline]
    fn drift(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        out[0] = x[1];
        out[1] = -x[0] - self.0.c[mode] * x[0].sin() - self.0.a[mode] * x[1];
    }
    #[inline]
    fn diffusion(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = -self.0.b[mode] * x[1];
    }
    #[inline]
    fn control(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        out[0] = -self.0.d[mode] * x[0];
        out[1] = 0.0;
    }
    #[inline]
    fn step_terms(
        &self,
        x: &[f64],
        feedback: Option<&[f64]>,
        mode: usize,
        _t: f64,
        drift: &mut [f64],
        _scratch: &mut [f64],
        diffusion: &mut [f64],
    ) {
        let p = &self.0;
        let (x0, x1) = (x[0], x[1]);
        let u = feedback.map_or(0.0, |y| -p.d[mode] * y[0]);
        drift[0] = x1 + u;
        drift[1] = -x0 - p.c[mode] * x0.sin() - p.a[mode] * x1;
        diffusion[0] = 0.0;
        diffusion[1] = -p.b[mode] * x1;
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

pub fn oscillator_model(params: &OscillatorParams) -> Result<HybridModel> {
    params.validate()?;
    HybridModel::new(
        "oscillator",
        Arc::new(Oscillator(params.clone())),
        oscillator_lipschitz(params)?,
    )
}

/// Gains that make the diagonal of `Q_1` constant and the off-diagonal of
/// `Q_2` vanish up to the order-dependent term, for `p` in `(0, 1)`.
pub fn design_oscillator_gains(p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("design order p = {p} must lie in (0, 1)")));
    }
    Ok((0.564 - 0.08 * p, 0.5625 + 0.25 * (1.0 - p)))
}

/// Quadratic form bounding the oscillator's stability form in mode `mode`:
///
/// ```text
/// [ |c| - d                 (-a + b^2/4 - d) / 2     ]
/// [ (-a + b^2/4 - d) / 2    |c| - a - (1 - p) b^2/2  ]
/// ```
pub fn oscillator_q(mode: ModeIndex, p: f64, params: &OscillatorParams) -> Result<Matrix2<f64>> {
    params.validate()?;
    let i = mode.index();
    if i >= params.modes() {
        return Err(invalid(format!("mode {mode} out of range")));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("moment order p = {p} must be positive")));
    }
    let (a, b, c, d) = (params.a[i], params.b[i], params.c[i], params.d[i]);
    let off = 0.5 * (-a + 0.25 * b * b - d);
    Ok(Matrix2::new(
        c.abs() - d,
        off,
        off,
        c.abs() - a - 0.5 * (1.0 - p) * b * b,
    ))
}

/// Absolute slack in [`quadrant_negativity`] for round-off in the entries.
pub const QUADRANT_TOL: f64 = 1e-12;

/// Whether `v' (Q + alpha J) v <= 0` for every `v >= 0`, `J` the all-ones
/// matrix.
pub fn quadrant_negativity(q: &Matrix2<f64>, alpha: f64) -> bool {
    let r11 = q[(0, 0)] + alpha;
    let r22 = q[(1, 1)] + alpha;
    let r12 = 0.5 * (q[(0, 1)] + q[(1, 0)]) + alpha;
    r11 <= QUADRANT_TOL
        && r22 <= QUADRANT_TOL
        && (r12 <= QUADRANT_TOL || r12 * r12 <= r11.min(0.0) * r22.min(0.0) + QUADRANT_TOL)
}

/// Supremum of the margins `alpha` accepted by [`quadrant_negativity`].
pub fn max_quadrant_margin(q: &Matrix2<f64>) -> f64 {
    let r12 = 0.5 * (q[(0, 1)] + q[(1, 0)]);
    let hi = (-q[(0, 0)]).min(-q[(1, 1)]);
    if quadrant_negativity(q, hi) {
        return hi;
    }
    // At this margin all three entries are nonpositive.
    let mut lo = hi.min(-r12);
    let mut hi = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if quadrant_negativity(q, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest multiple of `resolution` not exceeding `value`.
pub fn floor_to_resolution(value: f64, resolution: f64) -> f64 {
    let scale = 1.0 / resolution;
    let mut k = (value * scale).round();
    if k / scale > value + 1e-12 * value.abs().max(1.0) {
        k -= 1.0;
    }
    k / scale
}

/// Stability margins read off the `Q_i` matrices at order `p`, rounded down
/// to `resolution`.
pub fn oscillator_margins(p: f64, params: &OscillatorParams, resolution: f64) -> Result<AlphaVector> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(invalid(format!("resolution {resolution} must be positive")));
    }
    let alphas = (0..params.modes())
        .map(|i| oscillator_q(ModeIndex::new(i), p, params).map(|q| floor_to_resolution(max_quadrant_margin(&q), resolution)))
        .collect::<Result<Vec<_>>>()?;
    AlphaVector::new(alphas)
}

fn spectral_norm_2x2(m: Matrix2<f64>) -> f64 {
    m.svd(false, false).singular_values.max()
}

/// Lipschitz constants of drift, control and diffusion.
///
/// The drift constant is the declared value when present, otherwise the
/// supremum over modes of the drift Jacobian norm. The Jacobian is affine in
/// `cos x_1` so the supremum is attained at `cos x_1 = +-1`.
pub fn oscillator_lipschitz(params: &OscillatorParams) -> Result<LipschitzBounds> {
    params.validate()?;
    let drift = match params.declared_drift_lipschitz {
        Some(l) => l,
        None => (0..params.modes())
            .flat_map(|i| {
                [-1.0, 1.0].map(|s| spectral_norm_2x2(Matrix2::new(0.0, 1.0, -1.0 - params.c[i] * s, -params.a[i])))
            })
            .fold(0.0, f64::max),
    };
    let control = params.d.iter().copied().fold(0.0, f64::max);
    let diffusion = params.b.iter().map(|b| b.abs()).fold(0.0, f64::max);
    LipschitzBounds::new(drift, control, diffusion)
}

/// `dx = (A_i - D_i) x dt + sum_k G_ik x dB_k`; the feedback is `-D_i x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHybridModel {
    n: usize,
    m: usize,
    drift: Vec<DMatrix<f64>>,
    noise: Vec<Vec<DMatrix<f64>>>,
    gain: Vec<DMatrix<f64>>,
}

impl LinearHybridModel {
    pub fn new(drift: Vec<DMatrix<f64>>, noise: Vec<Vec<DMatrix<f64>>>, gain: Vec<DMatrix<f64>>) -> Result<Self> {
        let modes = drift.len();
        if modes == 0 {
            return Err(invalid("linear model needs at least one mode"));
        }
        if noise.len() != modes || gain.len() != modes {
            return Err(Error::DimensionMismatch(format!(
                "{} drift, {} noise and {} gain matrices",
                modes,
                noise.len(),
                gain.len()
            )));
        }
        let n = drift[0].nrows();
        let m = noise[0].len();
        if n == 0 || m == 0 {
            return Err(invalid("state and noise dimensions must be positive"));
        }
        let square = |mat: &DMatrix<f64>| mat.nrows() == n && mat.ncols() == n;
        for i in 0..modes {
            if !square(&drift[i]) || !square(&gain[i]) || noise[i].len() != m || !noise[i].iter().all(square) {
                return Err(Error::DimensionMismatch(format!("mode {} matrices are not all {n}x{n}", i + 1)));
            }
        }
        let all = drift.iter().chain(gain.iter()).chain(noise.iter().flatten());
        for mat in all {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(invalid("matrix entries must be finite"));
            }
        }
        Ok(Self {
            n,
            m,
            drift,
            noise,
            gain,
        })
    }

    /// Scalar model `dx = (a_i - d_i) x dt + b_i x dB`.
    pub fn scalar(a: &[f64], b: &[f64], d: &[f64]) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(
            a.iter().map(|&v| one(v)).collect(),
            b.iter().map(|&v| vec![one(v)]).collect(),
            d.iter().map(|&v| one(v)).collect(),
        )
    }

    pub fn modes(&self) -> usize {
        self.drift.len()
    }

    /// Operator-norm bounds: `max ||A_i||`, `max ||D_i||` and
    /// `max sqrt(sum_k ||G_ik||^2)`.
    pub fn lipschitz(&self) -> LipschitzBounds {
        let op = |m: &DMatrix<f64>| m.clone().svd(false, false).singular_values.max();
        let drift = self.drift.iter().map(op).fold(0.0, f64::max);
        let control = self.gain.iter().map(op).fold(0.0, f64::max);
        let diffusion = self
            .noise
            .iter()
            .map(|gs| gs.iter().map(|g| op(g).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        LipschitzBounds::new(drift, control, diffusion).expect("norms are finite and nonnegative")
    }

    pub fn into_model(self, name: impl Into<String>) -> HybridModel {
        let lipschitz = self.lipschitz();
        HybridModel::new(name, Arc::new(self), lipschitz).expect("linear maps vanish at the origin")
    }
}

fn mat_vec(mat: &DMatrix<f64>, x: &[f64], out: &mut [f64], sign: f64) {
    let n = x.len();
    for r in 0..n {
        let mut acc = 0.0;
        for c in 0..n {
            acc += mat[(r, c)] * x[c];
        }
        out[r] = sign * acc;
    }
}

impl Coefficients for LinearHybridModel {
    fn dimension(&self) -> usize {
        self.n
    }
    fn brownian_dim(&self) -> usize {
        self.m
    }
    fn modes(&self) -> usize {
        self.drift.len()
    }
    fn drift(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        mat_vec(&self.drift[mode], x, out, 1.0);
    }
    fn control(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        mat_vec(&self.gain[mode], x, out, -1.0);
    }
    fn diffusion(&self, x: &[f64], mode: usize, _t: f64, out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        for (k, g) in self.noise[mode].iter().enumerate() {
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += g[(r, c)] * x[c];
                }
                out[r * m + k] = acc;
            }
        }
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// Which form of the scalar cubic-feedback system to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CounterexampleVariant {
    /// `dx = -x dt + x^2 dB`.
    Uncontrolled,
    /// `dx = (-x - 2 x^3) dt + x^2 dB`.
    Controlled,
    /// `dx = (-x - 2 x(t - eps)^3) dt + x^2 dB`.
    Delayed,
}

impl CounterexampleVariant {
    pub fn control_mode(self) -> ControlMode {
        match self {
            Self::Uncontrolled => ControlMode::Uncontrolled,
            Self::Controlled => ControlMode::Controlled,
            Self::Delayed => ControlMode::Delayed,
        }
    }
}

struct Cubic {
    controlled: bool,
}

impl Coefficients for Cubic {
    fn dimension(&self) -> usize {
        1
    }
    fn brownian_dim(&self) -> usize {
        1
    }
    fn modes(&self) -> usize {
        1
    }
    #[inline]
    fn drift(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
        out[0] = -x[0];
    }
    #[inline]
    fn diffusion(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
        out[0] = x[0] * x[0];
    }
    #[inline]
    fn control(&self, x: &[f64], _: usize, _: f64, out: &mut [f64]) {
        out[0] = if self.controlled { -2.0 * x[0] * x[0] * x[0] } else { 0.0 };
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// The scalar cubic-feedback system, flagged as not globally Lipschitz.
/// The delay itself is a simulation parameter; run the
/// [`CounterexampleVariant::Delayed`] model with [`ControlMode::Delayed`].
pub fn counterexample_model(variant: CounterexampleVariant) -> HybridModel {
    let controlled = variant != CounterexampleVariant::Uncontrolled;
    let name = match variant {
        CounterexampleVariant::Uncontrolled => "cubic-uncontrolled",
        CounterexampleVariant::Controlled => "cubic-controlled",
        CounterexampleVariant::Delayed => "cubic-delayed",
    };
    HybridModel::non_lipschitz(name, Arc::new(Cubic { controlled })).expect("coefficients vanish at the origin")
}

/// Largest `|psi(z_bar)|` accepted from [`zbar`].
pub const ZBAR_RESIDUAL_TOL: f64 = 1e-10;

fn psi(z: f64, epsilon: f64) -> f64 {
    0.5 - 2.0 / (z * z) - (-epsilon * (2.0 + 0.5 * z * z)).exp()
}

/// Root in `z >= 2` of `1/2 - 2/z^2 = exp(-eps (2 + z^2/2))`. The initial
/// level above which the delayed system blows up before time `eps`.
pub fn zbar(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon = {epsilon} must be positive")));
    }
    let mut lo = 2.0;
    if psi(lo, epsilon) >= 0.0 {
        return Err(invalid("root lies at or below z = 2"));
    }
    let mut hi = 4.0;
    while psi(hi, epsilon) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Overflow { tau: epsilon });
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psi(mid, epsilon) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let z = if psi(hi, epsilon).abs() < psi(lo, epsilon).abs() { hi } else { lo };
    if psi(z, epsilon).abs() > ZBAR_RESIDUAL_TOL {
        return Err(invalid(format!("bisection residual {} too large", psi(z, epsilon))));
    }
    Ok(z)
}

/// Closed-form solution of `u' = -a u + u^2`, `u(0) = z_bar^2`,
/// `a = 2 + z_bar^2 / 2`. `None` once the solution has blown up.
pub fn riccati_u(t: f64, z_bar: f64) -> Option<f64> {
    let a = 2.0 + 0.5 * z_bar * z_bar;
    let bracket = (a * t).exp() * (1.0 / (z_bar * z_bar) + ((-a * t).exp() - 1.0) / a);
    (bracket > 0.0).then(|| 1.0 / bracket)
}

/// Time at which [`riccati_u`] blows up, `-ln(1 - a/z_bar^2)/a`; `None` when
/// `z_bar <= 2` and the solution stays finite.
pub fn riccati_blowup_time(z_bar: f64) -> Option<f64> {
    let a = 2.0 + 0.5 * z_bar * z_bar;
    let gap = 1.0 - a / (z_bar * z_bar);
    (gap > 0.0).then(|| -gap.ln() / a)
}

/// History for the delayed cubic system: `min(z_bar, (z_bar^2/8)^(1/3))` on
/// `[-eps, -eps/2]`, then linear up to `z_bar` at time 0.
pub fn counterexample_segment(epsilon: f64, z_bar: f64, step: f64) -> Result<InitialSegment> {
    let m = (epsilon / step).round();
    if !(m >= 1.0) || ((m * step - epsilon) / epsilon).abs() > crate::simulate::GRID_ROUNDING_TOL {
        return Err(invalid(format!("delay {epsilon} is not a multiple of the step {step}")));
    }
    let plateau = z_bar.min((z_bar * z_bar / 8.0).cbrt());
    InitialSegment::from_fn(m as usize, step, ModeIndex::new(0), |s| {
        let v = if s <= -0.5 * epsilon {
            plateau
        } else {
            plateau + (z_bar - plateau) * (s + 0.5 * epsilon) / (0.5 * epsilon)
        };
        vec![v]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityConfig {
    pub delayed_step: f64,
    pub delayed_paths: usize,
    pub moment_step: f64,
    pub moment_paths: usize,
    pub seed: u64,
    pub explosion_cap: f64,
}

impl Default for InstabilityConfig {
    fn default() -> Self {
        Self {
            delayed_step: 1e-5,
            delayed_paths: 10_000,
            moment_step: 1e-3,
            moment_paths: 10_000,
            seed: 0,
            explosion_cap: crate::simulate::DEFAULT_EXPLOSION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityReport {
    pub epsilon: f64,
    pub z_bar: f64,
    pub blowup_time: Option<f64>,
    /// Delayed paths that reached the explosion cap by time `epsilon`.
    pub cap_hits: usize,
    pub cap_hit_fraction: f64,
    /// Second moment of the delayed system on `[0, epsilon]`.
    pub delayed_second_moment: MomentEstimate,
    /// `riccati_u` at the record times of `delayed_second_moment`.
    pub riccati_lower_bound: Vec<Option<f64>>,
    /// Fourth moment of the undelayed controlled system from `x(0) = 1`.
    pub controlled_fourth_moment: MomentEstimate,
    /// Fourth moment of the uncontrolled system from `x(0) = 1`.
    pub uncontrolled_fourth_moment: MomentEstimate,
    pub controlled_at_one: f64,
    pub uncontrolled_slope: f64,
}

/// Monte Carlo evidence that the cubic feedback tolerates no delay:
/// delayed paths started at the critical history blow up before time
/// `epsilon`, while the undelayed loop decays in fourth moment like
/// `e^{-4t}` and the uncontrolled system does not.
pub fn demonstrate_instability(epsilon: f64, config: &InstabilityConfig) -> Result<InstabilityReport> {
    let z_bar = zbar(epsilon)?;
    let generator = GeneratorMatrix::new(&[vec![0.0]])?;

    let delayed = counterexample_model(CounterexampleVariant::Delayed);
    let segment = counterexample_segment(epsilon, z_bar, config.delayed_step)?;
    let cfg = SimulationConfig::new(config.delayed_step, epsilon, epsilon, config.delayed_paths.max(2), config.seed, 2.0)?
        .with_explosion_cap(config.explosion_cap)?
        .with_record_count(101)?;
    let paths = simulate_paths(&delayed, &generator, &segment, &cfg, ControlMode::Delayed)?;
    let cap_hits = paths.iter().filter(|p| p.exploded_at.is_some_and(|t| t <= epsilon)).count();
    let delayed_second_moment = monte_carlo_moment(&delayed, &generator, &segment, &cfg, ControlMode::Delayed)?;
    let riccati_lower_bound = delayed_second_moment.times.iter().map(|&t| riccati_u(t, z_bar)).collect();

    let start = InitialSegment::point(crate::model::StateVector::new(vec![1.0])?, ModeIndex::new(0));
    let moment_cfg = SimulationConfig::new(config.moment_step, 1.0, 0.0, config.moment_paths.max(2), config.seed, 4.0)?
        .with_explosion_cap(config.explosion_cap)?
        .with_record_count(101)?;
    let controlled = counterexample_model(CounterexampleVariant::Controlled);
    let controlled_fourth_moment =
        monte_carlo_moment(&controlled, &generator, &start, &moment_cfg, ControlMode::Controlled)?;
    let uncontrolled = counterexample_model(CounterexampleVariant::Uncontrolled);
    let uncontrolled_fourth_moment =
        monte_carlo_moment(&uncontrolled, &generator, &start, &moment_cfg, ControlMode::Uncontrolled)?;
    let uncontrolled_slope = crate::simulate::estimate_moment_exponent(&uncontrolled_fourth_moment, (0.0, 1.0))?;

    Ok(InstabilityReport {
        epsilon,
        z_bar,
        blowup_time: riccati_blowup_time(z_bar),
        cap_hits,
        cap_hit_fraction: cap_hits as f64 / paths.len() as f64,
        delayed_second_moment,
        riccati_lower_bound,
        controlled_at_one: *controlled_fourth_moment.mean_moment.last().expect("record at t = 1"),
        controlled_fourth_moment,
        uncontrolled_fourth_moment,
        uncontrolled_slope,
    })
}
