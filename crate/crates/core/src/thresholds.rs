//! Gronwall-type constants K1..K4, the horizon T, the maximal admissible
//! feedback delay tau* and the resulting decay rate.
//!
//! All constants are evaluated through their logarithms. With exponents of
//! the form `p (T + tau) L` the direct products overflow long before the
//! quantities themselves become meaningless, and the root search must be
//! able to step through such regions. A value is reported as `+inf` only
//! once its logarithm exceeds [`ThresholdOptions::log_cap`].
//!
//! The case split between the `p >= 2` and `p in (0, 2)` formulas puts
//! `p = 2` on the `p >= 2` side for every constant.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::LipschitzBounds;

/// Default cap on `ln K` before a constant is treated as infinite.
pub const DEFAULT_LOG_CAP: f64 = 700.0;

/// Default relative bisection tolerance on tau*.
pub const DEFAULT_TOL: f64 = 1e-9;

/// First bracket end tried by the tau* search.
const INITIAL_BRACKET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    /// Relative width of the final bisection bracket.
    pub tol: f64,
    pub log_cap: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            log_cap: DEFAULT_LOG_CAP,
        }
    }
}

impl ThresholdOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid(format!("tolerance {} must lie in (0, 1)", self.tol)));
        }
        if !(self.log_cap > 0.0 && self.log_cap <= 709.0) {
            return Err(invalid(format!("log cap {} must lie in (0, 709]", self.log_cap)));
        }
        Ok(())
    }
}

/// Everything the delay bound depends on: the moment order, the Lipschitz
/// constants and the `(M, gamma)` pair of the non-delay closed loop, plus
/// the design slack `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdInputs {
    pub p: f64,
    pub lipschitz: LipschitzBounds,
    pub moment_bound: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl ThresholdInputs {
    pub fn new(p: f64, lipschitz: LipschitzBounds, moment_bound: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let inputs = Self {
            p,
            lipschitz,
            moment_bound,
            gamma,
            epsilon,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.p)?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.moment_bound > 0.0 && self.moment_bound.is_finite()) {
            return Err(invalid(format!("M = {} must be positive", self.moment_bound)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon = {} must lie in (0, 1)", self.epsilon)));
        }
        LipschitzBounds::new(self.lipschitz.drift, self.lipschitz.control, self.lipschitz.diffusion)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    /// The horizon T.
    pub horizon: f64,
    pub tau_star: f64,
    /// pth-moment decay rate, evaluated just below tau*.
    pub lambda: f64,
    /// `phi(tau*)`, the root-equation residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    /// pth-moment rate `lambda`.
    pub moment: f64,
    /// Almost-sure Lyapunov exponent bound `lambda / (2p)`.
    pub almost_sure: f64,
}

fn check_order(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("moment order p = {p} must be positive")));
    }
    Ok(())
}

fn check_times(tau: f64, horizon: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau = {tau} must be >= 0")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("T = {horizon} must be >= 0")));
    }
    Ok(())
}

/// `max(0, p - 1)`.
pub fn p_zero(p: f64) -> Result<f64> {
    check_order(p)?;
    Ok((p - 1.0).max(0.0))
}

/// Burkholder-type constant `[p^(p+1) / (2 (p-1)^(p-1))]^(p/2)`, p >= 2.
pub fn c_p(p: f64) -> Result<f64> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid(format!("C_p needs p >= 2, got {p}")));
    }
    Ok(ln_c_p(p).exp())
}

fn ln_c_p(p: f64) -> f64 {
    0.5 * p * ((p + 1.0) * p.ln() - LN_2 - (p - 1.0) * (p - 1.0).ln())
}

/// `ln(e^a + e^b + ...)`, ignoring `-inf` terms.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(L1^q + L2^q)`.
fn ln_power_sum(l: &LipschitzBounds, q: f64) -> f64 {
    log_sum_exp(&[q * l.drift.ln(), q * l.control.ln()])
}

fn ln_k1_raw(p: f64, tau: f64, horizon: f64, l: &LipschitzBounds) -> f64 {
    let rate = l.drift + l.control + 0.5 * l.diffusion * l.diffusion * (p - 1.0).max(1.0);
    (0.5 * p).min(1.0) * tau.ln_1p() + p * (horizon + tau) * rate
}

fn ln_k2_raw(p: f64, tau: f64, horizon: f64, l: &LipschitzBounds) -> f64 {
    let s = horizon + tau;
    if p >= 2.0 {
        let bracket = log_sum_exp(&[
            0.0,
            ln_power_sum(l, p) + p * s.ln(),
            ln_c_p(p) + p * l.diffusion.ln() + 0.5 * p * s.ln(),
        ]);
        (p - 1.0) * 4f64.ln() + ln_k1_raw(p, tau, horizon, l) + bracket
    } else {
        let bracket = log_sum_exp(&[ln_power_sum(l, 2.0) + 2.0 * s.ln(), 2.0 * l.diffusion.ln() + s.ln()]);
        0.5 * p * (4f64.ln() + ln_k1_raw(2.0, tau, horizon, l) + bracket)
    }
}

fn ln_k3_raw(p: f64, tau: f64, horizon: f64, l: &LipschitzBounds) -> f64 {
    if p >= 2.0 {
        let bracket = log_sum_exp(&[
            ln_power_sum(l, p) + p * tau.ln(),
            ln_c_p(p) + p * l.diffusion.ln() + 0.5 * p * tau.ln(),
        ]);
        (p - 1.0) * 3f64.ln() + ln_k1_raw(p, tau, horizon, l) + bracket
    } else {
        let bracket = log_sum_exp(&[
            ln_power_sum(l, 2.0) + 2.0 * tau.ln(),
            4f64.ln() + 2.0 * l.diffusion.ln() + tau.ln(),
        ]);
        0.5 * p * (3f64.ln() + ln_k1_raw(2.0, tau, horizon, l) + bracket)
    }
}

fn ln_k4_raw(p: f64, tau: f64, horizon: f64, l: &LipschitzBounds) -> f64 {
    let s = horizon + tau;
    let (l1, l2, l3) = (l.drift, l.control, l.diffusion);
    if p >= 2.0 {
        let growth = p * l1 + (2.0 * p - 1.0) * l2 + 0.5 * p * (p - 1.0) * l3 * l3;
        l2.ln() + s.ln() + ln_k3_raw(p, tau, horizon, l) + growth * s
    } else {
        let growth = 2.0 * l1 + 3.0 * l2 + l3 * l3;
        0.5 * p * (l2.ln() + s.ln() + ln_k3_raw(2.0, tau, horizon, l) + growth * s)
    }
}

fn capped_exp(ln: f64, log_cap: f64) -> f64 {
    if ln > log_cap {
        f64::INFINITY
    } else {
        ln.exp()
    }
}

macro_rules! constant {
    ($(#[$doc:meta])* $name:ident, $ln_name:ident, $raw:ident) => {
        $(#[$doc])*
        pub fn $name(p: f64, tau: f64, horizon: f64, lipschitz: &LipschitzBounds) -> Result<f64> {
            Ok(capped_exp($ln_name(p, tau, horizon, lipschitz)?, DEFAULT_LOG_CAP))
        }

        /// Natural logarithm of the constant; `-inf` where it vanishes.
        pub fn $ln_name(p: f64, tau: f64, horizon: f64, lipschitz: &LipschitzBounds) -> Result<f64> {
            check_order(p)?;
            check_times(tau, horizon)?;
            Ok($raw(p, tau, horizon, lipschitz))
        }
    };
}

constant!(
    /// Bound on `sup E|x(t)|^p` over a window of length `T + tau`.
    k1, ln_k1, ln_k1_raw
);
constant!(
    /// Bound on `E sup |x(t)|^p` over a window of length `T + tau`.
    k2, ln_k2, ln_k2_raw
);
constant!(
    /// Bound on the pth moment of the increment over a delay interval.
    /// Vanishes exactly at tau = 0.
    k3, ln_k3, ln_k3_raw
);
constant!(
    /// Bound on the pth-moment gap between the delayed and non-delayed
    /// solutions. Vanishes exactly at tau = 0.
    k4, ln_k4, ln_k4_raw
);

/// `T = ln(2^(2 p0) M / epsilon) / gamma`.
pub fn horizon_t(p: f64, moment_bound: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    let p0 = p_zero(p)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma = {gamma} must be positive")));
    }
    if !(moment_bound > 0.0 && moment_bound.is_finite()) {
        return Err(invalid(format!("M = {moment_bound} must be positive")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let t = (2.0 * p0 * LN_2 + moment_bound.ln() - epsilon.ln()) / gamma;
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::NonPositiveHorizon(t))
    }
}

/// `ln(2^p0 [2^p0 K4 + K3])`.
fn ln_bound(inputs: &ThresholdInputs, tau: f64, horizon: f64) -> f64 {
    let p = inputs.p;
    let l = &inputs.lipschitz;
    let p0 = (p - 1.0).max(0.0);
    p0 * LN_2 + log_sum_exp(&[p0 * LN_2 + ln_k4_raw(p, tau, horizon, l), ln_k3_raw(p, tau, horizon, l)])
}

/// The root function `phi(tau) = 2^p0 [2^p0 K4 + K3] - (1 - epsilon)` at
/// the horizon T belonging to `inputs`. Strictly increasing in tau.
pub fn root_function(inputs: &ThresholdInputs, tau: f64, opts: &ThresholdOptions) -> Result<f64> {
    inputs.validate()?;
    let horizon = horizon_t(inputs.p, inputs.moment_bound, inputs.gamma, inputs.epsilon)?;
    check_times(tau, horizon)?;
    phi(inputs, tau, horizon, opts.log_cap)
}

fn phi(inputs: &ThresholdInputs, tau: f64, horizon: f64, log_cap: f64) -> Result<f64> {
    let ln = ln_bound(inputs, tau, horizon);
    if ln.is_nan() {
        return Err(Error::Overflow { tau });
    }
    Ok(capped_exp(ln, log_cap) - (1.0 - inputs.epsilon))
}

/// Maximal admissible delay: the unique positive root of `phi`.
///
/// The bracket starts at `[0, 1e-8]` and doubles its upper end until
/// `phi > 0`; bisection then runs until the bracket width is at most
/// `tol * upper`. The returned tau* is the bracket midpoint, and lambda is
/// evaluated at `tau* (1 - tol)`, which lies below the lower bracket end.
pub fn tau_star(inputs: &ThresholdInputs, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    inputs.validate()?;
    opts.validate()?;
    let horizon = horizon_t(inputs.p, inputs.moment_bound, inputs.gamma, inputs.epsilon)?;
    let f = |tau: f64| phi(inputs, tau, horizon, opts.log_cap);

    let mut lo = 0.0;
    let mut hi = INITIAL_BRACKET;
    while f(hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Overflow { tau: hi });
        }
    }
    while hi - lo > opts.tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau_star = 0.5 * (lo + hi);
    if !(tau_star > 0.0 && tau_star.is_normal()) {
        return Err(Error::Underflow);
    }
    let residual = f(tau_star)?;
    let rate = decay_rate_at(inputs, tau_star * (1.0 - opts.tol), horizon, opts.log_cap)?;
    Ok(ThresholdResult {
        horizon,
        tau_star,
        lambda: rate.moment,
        residual,
    })
}

/// `lambda = -ln(epsilon + 2^p0 [2^p0 K4 + K3]) / (tau + T)` for a delay
/// below tau*.
pub fn decay_rate(inputs: &ThresholdInputs, tau: f64) -> Result<DecayRate> {
    inputs.validate()?;
    let horizon = horizon_t(inputs.p, inputs.moment_bound, inputs.gamma, inputs.epsilon)?;
    check_times(tau, horizon)?;
    decay_rate_at(inputs, tau, horizon, DEFAULT_LOG_CAP)
}

fn decay_rate_at(inputs: &ThresholdInputs, tau: f64, horizon: f64, log_cap: f64) -> Result<DecayRate> {
    let contraction = inputs.epsilon + capped_exp(ln_bound(inputs, tau, horizon), log_cap);
    if !(contraction < 1.0) {
        return Err(Error::DelayTooLarge { tau });
    }
    let moment = -contraction.ln() / (tau + horizon);
    Ok(DecayRate {
        moment,
        almost_sure: moment / (2.0 * inputs.p),
    })
}

/// One grid evaluation of [`optimize_tau_star`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub p: f64,
    pub epsilon: f64,
    /// `(M, gamma)` for this p, or the reason they are unavailable.
    pub moment: std::result::Result<(f64, f64), Error>,
    pub result: std::result::Result<ThresholdResult, Error>,
}

impl SweepPoint {
    pub fn tau_star(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.tau_star)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// Index of the best point in `table`.
    pub best: usize,
    /// p-major grid table.
    pub table: Vec<SweepPoint>,
}

impl Sweep {
    pub fn best(&self) -> &SweepPoint {
        &self.table[self.best]
    }
}

/// Exhaustive grid search for the `(p, epsilon)` pair maximising tau*.
///
/// `moment_pair(p)` supplies `(M, gamma)` for the non-delay closed loop
/// at order p. Ties go to the smaller epsilon, then the smaller p.
pub fn optimize_tau_star<F>(
    lipschitz: LipschitzBounds,
    moment_pair: F,
    p_grid: &[f64],
    epsilon_grid: &[f64],
    opts: &ThresholdOptions,
) -> Result<Sweep>
where
    F: Fn(f64) -> Result<(f64, f64)> + Sync,
{
    if p_grid.is_empty() || epsilon_grid.is_empty() {
        return Err(invalid("p and epsilon grids must be nonempty"));
    }
    for &v in p_grid.iter().chain(epsilon_grid) {
        if !(v > 0.0 && v < 1.0) {
            return Err(invalid(format!("grid value {v} outside (0, 1)")));
        }
    }
    opts.validate()?;

    let table: Vec<SweepPoint> = p_grid
        .par_iter()
        .flat_map_iter(|&p| {
            let moment = moment_pair(p);
            epsilon_grid.iter().map(move |&epsilon| {
                let result = match &moment {
                    Ok((m, gamma)) => ThresholdInputs::new(p, lipschitz, *m, *gamma, epsilon)
                        .and_then(|inputs| tau_star(&inputs, opts)),
                    Err(e) => Err(e.clone()),
                };
                SweepPoint {
                    p,
                    epsilon,
                    moment: moment.clone(),
                    result,
                }
            })
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, point) in table.iter().enumerate() {
        let Some(tau) = point.tau_star() else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let incumbent = &table[b];
                let bt = incumbent.tau_star().expect("best is feasible");
                tau > bt
                    || (tau == bt
                        && (point.epsilon < incumbent.epsilon
                            || (point.epsilon == incumbent.epsilon && point.p < incumbent.p)))
            }
        };
        if better {
            best = Some(k);
        }
    }
    let best = best.ok_or(Error::Infeasible)?;
    Ok(Sweep { best, table })
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
