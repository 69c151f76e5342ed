//! Euler-Maruyama integration of the uncontrolled, controlled and
//! delay-controlled systems, Monte Carlo moment estimation and exponent
//! fitting.
//!
//! The delay is an integer number of steps. Each path keeps a ring buffer of
//! the last `delay_steps + 1` states, seeded from the initial segment, so
//! the delayed control reads `x_{k - m}` without interpolation. The mode is
//! frozen at its value at the left end of each step.
//!
//! Every path owns two substreams addressed by its index: one for the
//! Brownian increments and one for the Markov chain. Monte Carlo results are
//! therefore reproducible and independent of the worker count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::markov::{simulate_mode_path, GeneratorMatrix, ModePath};
use crate::model::{norm, HybridModel, InitialSegment, ModeIndex};
use crate::rng::{PathStreams, StreamRng};

pub const DEFAULT_EXPLOSION_CAP: f64 = 1e12;
pub const DEFAULT_RECORD_COUNT: usize = 1000;

/// Largest relative error accepted when snapping the delay or the horizon
/// to the step grid.
pub const GRID_ROUNDING_TOL: f64 = 1e-6;

/// Paths per reduction chunk in [`monte_carlo_moment`]. Fixed so that the
/// floating-point summation order never depends on scheduling.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    step: f64,
    horizon: f64,
    total_steps: usize,
    delay: f64,
    delay_steps: usize,
    requested_delay: f64,
    path_count: usize,
    master_seed: u64,
    moment_order: f64,
    record_steps: Vec<usize>,
    explosion_cap: f64,
}

fn snap(value: f64, step: f64, what: &str) -> Result<usize> {
    let k = (value / step).round();
    let snapped = k * step;
    if value > 0.0 && ((snapped - value) / value).abs() > GRID_ROUNDING_TOL {
        return Err(invalid(format!(
            "{what} {value:e} is not a multiple of the step {step:e} (nearest {snapped:e})"
        )));
    }
    Ok(k as usize)
}

impl SimulationConfig {
    /// The delay and the horizon are snapped to the nearest multiple of
    /// `step`; a relative change above [`GRID_ROUNDING_TOL`] is an error.
    /// Records default to [`DEFAULT_RECORD_COUNT`] evenly spaced times.
    pub fn new(
        step: f64,
        horizon: f64,
        delay: f64,
        path_count: usize,
        master_seed: u64,
        moment_order: f64,
    ) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("step {step} must be positive")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon {horizon} must be positive")));
        }
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(invalid(format!("delay {delay} must be >= 0")));
        }
        if path_count == 0 {
            return Err(invalid("path count must be at least 1"));
        }
        if !(moment_order > 0.0 && moment_order.is_finite()) {
            return Err(invalid(format!("moment order {moment_order} must be positive")));
        }
        let total_steps = snap(horizon, step, "horizon")?;
        if total_steps == 0 {
            return Err(invalid("horizon is shorter than one step"));
        }
        let delay_steps = snap(delay, step, "delay")?;
        let mut cfg = Self {
            step,
            horizon: total_steps as f64 * step,
            total_steps,
            delay: delay_steps as f64 * step,
            delay_steps,
            requested_delay: delay,
            path_count,
            master_seed,
            moment_order,
            record_steps: Vec::new(),
            explosion_cap: DEFAULT_EXPLOSION_CAP,
        };
        cfg.record_steps = cfg.uniform_steps(DEFAULT_RECORD_COUNT);
        Ok(cfg)
    }

    fn uniform_steps(&self, count: usize) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..count.max(1))
            .map(|j| {
                if count <= 1 {
                    self.total_steps
                } else {
                    ((j as f64 * self.total_steps as f64) / (count - 1) as f64).round() as usize
                }
            })
            .collect();
        steps.dedup();
        steps
    }

    /// Records at `count` evenly spaced grid times including 0 and the
    /// horizon.
    pub fn with_record_count(mut self, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(invalid("at least two record times are needed"));
        }
        self.record_steps = self.uniform_steps(count);
        Ok(self)
    }

    /// Records at the grid points nearest to `times`, which must be
    /// increasing and lie in `[0, horizon]`.
    pub fn with_record_times(mut self, times: &[f64]) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("record times are empty"));
        }
        let mut steps = Vec::with_capacity(times.len());
        for (j, &t) in times.iter().enumerate() {
            if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
                return Err(invalid(format!("record time {t} outside [0, {}]", self.horizon)));
            }
            if j > 0 && t <= times[j - 1] {
                return Err(invalid("record times must be strictly increasing"));
            }
            steps.push(((t / self.step).round() as usize).min(self.total_steps));
        }
        steps.dedup();
        self.record_steps = steps;
        Ok(self)
    }

    /// Records every grid point.
    pub fn with_every_step_recorded(mut self) -> Self {
        self.record_steps = (0..=self.total_steps).collect();
        self
    }

    pub fn with_explosion_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(invalid(format!("explosion cap {cap} must be positive")));
        }
        self.explosion_cap = cap;
        Ok(self)
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_path_count(mut self, path_count: usize) -> Result<Self> {
        if path_count == 0 {
            return Err(invalid("path count must be at least 1"));
        }
        self.path_count = path_count;
        Ok(self)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Delay actually used, `delay_steps * step`.
    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// `|used - requested| / requested`, zero for a zero delay.
    pub fn delay_rounding(&self) -> f64 {
        if self.requested_delay == 0.0 {
            0.0
        } else {
            ((self.delay - self.requested_delay) / self.requested_delay).abs()
        }
    }

    pub fn path_count(&self) -> usize {
        self.path_count
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn explosion_cap(&self) -> f64 {
        self.explosion_cap
    }

    pub fn record_steps(&self) -> &[usize] {
        &self.record_steps
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|&k| k as f64 * self.step).collect()
    }
}

/// Which feedback term enters the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlMode {
    Uncontrolled,
    /// `u(x(t), r(t), t)`.
    Controlled,
    /// `u(x(t - tau), r(t), t)`.
    Delayed,
}

/// States sampled at the configured record times.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<ModeIndex>,
    /// First grid time at which the state left the finite ball of radius
    /// `explosion_cap`. Nothing is recorded from then on.
    pub exploded_at: Option<f64>,
}

impl Path {
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| norm(x)).collect()
    }
}

/// Everything needed to continue a path from grid step `step`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    step: usize,
    /// `x_{step - m}, ..., x_{step}`, flattened.
    history: Vec<f64>,
    dimension: usize,
    mode_path: ModePath,
    brownian: StreamRng,
}

impl Checkpoint {
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn state(&self) -> &[f64] {
        &self.history[self.history.len() - self.dimension..]
    }
}

/// Step-by-step Euler-Maruyama integrator for one path.
pub struct Integrator<'a> {
    model: &'a HybridModel,
    cfg: &'a SimulationConfig,
    control: ControlMode,
    mode_path: ModePath,
    next_jump: usize,
    brownian: StreamRng,
    n: usize,
    m_b: usize,
    slots: usize,
    ring: Vec<f64>,
    /// Slot holding the oldest state `x_{k - m}`.
    head: usize,
    k: usize,
    exploded_at: Option<f64>,
    cap_sq: f64,
    drift: Vec<f64>,
    feedback: Vec<f64>,
    diffusion: Vec<f64>,
    increment: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(
        model: &'a HybridModel,
        generator: &GeneratorMatrix,
        segment: &InitialSegment,
        cfg: &'a SimulationConfig,
        control: ControlMode,
        streams: PathStreams,
    ) -> Result<Self> {
        if generator.modes() != model.modes() {
            return Err(Error::DimensionMismatch(format!(
                "{}-mode generator for a {}-mode model",
                generator.modes(),
                model.modes()
            )));
        }
        if segment.dimension() != model.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "initial segment of dimension {} for a {}-dimensional model",
                segment.dimension(),
                model.dimension()
            )));
        }
        let n = model.dimension();
        let history: Vec<f64> = if control == ControlMode::Delayed && cfg.delay_steps > 0 {
            if segment.delay_steps() != cfg.delay_steps {
                return Err(invalid(format!(
                    "initial segment covers {} steps but the delay needs {}",
                    segment.delay_steps(),
                    cfg.delay_steps
                )));
            }
            if ((segment.step() - cfg.step) / cfg.step).abs() > 1e-12 {
                return Err(invalid(format!(
                    "initial segment step {} differs from the integration step {}",
                    segment.step(),
                    cfg.step
                )));
            }
            segment.samples().iter().flatten().copied().collect()
        } else {
            segment.current().to_vec()
        };
        let mut markov = streams.markov;
        let mode_path = simulate_mode_path(generator, segment.initial_mode(), cfg.horizon, &mut markov)?;
        Self::assemble(model, cfg, control, mode_path, streams.brownian, 0, history, n)
    }

    /// Continues from a checkpoint; the continuation is bit-identical to
    /// the uninterrupted run.
    pub fn resume(
        model: &'a HybridModel,
        cfg: &'a SimulationConfig,
        control: ControlMode,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        let n = model.dimension();
        if checkpoint.dimension != n {
            return Err(Error::DimensionMismatch("checkpoint does not match the model dimension".into()));
        }
        Self::assemble(
            model,
            cfg,
            control,
            checkpoint.mode_path,
            checkpoint.brownian,
            checkpoint.step,
            checkpoint.history,
            n,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: &'a HybridModel,
        cfg: &'a SimulationConfig,
        control: ControlMode,
        mode_path: ModePath,
        brownian: StreamRng,
        k: usize,
        history: Vec<f64>,
        n: usize,
    ) -> Result<Self> {
        let slots = history.len() / n;
        let expected = if control == ControlMode::Delayed { cfg.delay_steps + 1 } else { 1 };
        if slots != expected {
            return Err(invalid(format!("history holds {slots} states, expected {expected}")));
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial data must be finite"));
        }
        let m_b = model.brownian_dim();
        let mut integrator = Self {
            model,
            cfg,
            control,
            next_jump: 0,
            mode_path,
            brownian,
            n,
            m_b,
            slots,
            ring: history,
            head: 0,
            k,
            exploded_at: None,
            cap_sq: cfg.explosion_cap * cfg.explosion_cap,
            drift: vec![0.0; n],
            feedback: vec![0.0; n],
            diffusion: vec![0.0; n * m_b],
            increment: vec![0.0; m_b],
            next: vec![0.0; n],
        };
        integrator.sync_mode_cursor();
        Ok(integrator)
    }

    fn sync_mode_cursor(&mut self) {
        let t = self.time();
        self.next_jump = self.mode_path.jump_times().partition_point(|&s| s <= t);
    }

    /// Current grid index.
    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.cfg.step
    }

    pub fn state(&self) -> &[f64] {
        let slot = (self.head + self.slots - 1) % self.slots;
        &self.ring[slot * self.n..(slot + 1) * self.n]
    }

    pub fn mode(&self) -> ModeIndex {
        self.mode_path.modes()[self.next_jump]
    }

    pub fn mode_path(&self) -> &ModePath {
        &self.mode_path
    }

    pub fn exploded_at(&self) -> Option<f64> {
        self.exploded_at
    }

    /// Brownian increment used by the most recent step.
    pub fn last_increment(&self) -> &[f64] {
        &self.increment
    }

    pub fn is_finished(&self) -> bool {
        self.exploded_at.is_some() || self.k >= self.cfg.total_steps
    }

    /// Advances one step with an increment drawn from the path's Brownian
    /// stream.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        let sqrt_h = self.cfg.step.sqrt();
        for db in self.increment.iter_mut() {
            *db = sqrt_h * self.brownian.sample::<f64, _>(StandardNormal);
        }
        self.advance()
    }

    /// Advances one step with a caller-supplied Brownian increment.
    pub fn step_with_increment(&mut self, increment: &[f64]) -> Result<()> {
        if increment.len() != self.m_b {
            return Err(Error::DimensionMismatch(format!(
                "increment of length {} for {} Brownian motions",
                increment.len(),
                self.m_b
            )));
        }
        if self.is_finished() {
            return Ok(());
        }
        self.increment.copy_from_slice(increment);
        self.advance()
    }

    fn advance(&mut self) -> Result<()> {
        let n = self.n;
        let h = self.cfg.step;
        let t = self.time();
        let jumps = self.mode_path.jump_times();
        while self.next_jump < jumps.len() && jumps[self.next_jump] <= t {
            self.next_jump += 1;
        }
        let mode = self.mode_path.modes()[self.next_jump].index();

        let len = self.ring.len();
        let head = self.head * n;
        let current = if head == 0 { len - n } else { head - n };
        let coeffs = self.model.coefficients();
        let (x, feedback) = {
            let x = &self.ring[current..current + n];
            let feedback = match self.control {
                ControlMode::Uncontrolled => None,
                ControlMode::Controlled => Some(x),
                ControlMode::Delayed => Some(&self.ring[head..head + n]),
            };
            (x, feedback)
        };
        coeffs.step_terms(x, feedback, mode, t, &mut self.drift, &mut self.feedback, &mut self.diffusion);
        let mut size_sq = 0.0;
        let rows = self.diffusion.chunks_exact(self.m_b);
        for (((next, &xr), &fr), g) in self.next.iter_mut().zip(x).zip(&self.drift).zip(rows) {
            let noise: f64 = g.iter().zip(&self.increment).map(|(a, b)| a * b).sum();
            *next = xr + fr * h + noise;
            size_sq += *next * *next;
        }

        if !(size_sq <= self.cap_sq) {
            let input = x.to_vec();
            let delayed = feedback.map(<[f64]>::to_vec);
            return self.explode_or_fail(input, delayed, mode, t);
        }

        for (dst, src) in self.ring[head..head + n].iter_mut().zip(&self.next) {
            *dst = *src;
        }
        self.head += 1;
        if self.head == self.slots {
            self.head = 0;
        }
        self.k += 1;
        Ok(())
    }

    /// A non-finite or oversized step is an explosion unless one of the
    /// coefficient maps itself returned a non-finite value.
    fn explode_or_fail(&mut self, x: Vec<f64>, feedback: Option<Vec<f64>>, mode: usize, t: f64) -> Result<()> {
        self.model.eval_drift(&x, mode, t)?;
        self.model.eval_diffusion(&x, mode, t)?;
        if let Some(y) = feedback {
            self.model.eval_control(&y, mode, t)?;
        }
        self.exploded_at = Some(t + self.cfg.step);
        Ok(())
    }

    /// Steps until grid index `target` (or explosion).
    pub fn advance_to(&mut self, target: usize) -> Result<()> {
        let target = target.min(self.cfg.total_steps);
        while self.k < target && self.exploded_at.is_none() {
            self.step()?;
        }
        Ok(())
    }

    /// Snapshot from which [`Integrator::resume`] continues this path.
    pub fn checkpoint(&self) -> Checkpoint {
        let n = self.n;
        let mut history = Vec::with_capacity(self.ring.len());
        for j in 0..self.slots {
            let slot = (self.head + j) % self.slots;
            history.extend_from_slice(&self.ring[slot * n..(slot + 1) * n]);
        }
        Checkpoint {
            step: self.k,
            history,
            mode_path: self.mode_path.clone(),
            dimension: n,
            brownian: self.brownian.clone(),
        }
    }

    /// Integrates to the horizon, recording at the configured steps that
    /// are not before the current one.
    pub fn run(&mut self) -> Result<Path> {
        let mut path = Path {
            times: Vec::new(),
            states: Vec::new(),
            modes: Vec::new(),
            exploded_at: None,
        };
        let start = self.k;
        for &s in self.cfg.record_steps.iter().filter(|&&s| s >= start) {
            self.advance_to(s)?;
            if self.exploded_at.is_some() {
                break;
            }
            let t = self.time();
            path.times.push(t);
            path.states.push(self.state().to_vec());
            path.modes.push(self.mode_path.mode_at(t));
        }
        self.advance_to(self.cfg.total_steps)?;
        path.exploded_at = self.exploded_at;
        Ok(path)
    }
}

/// Simulates path `path_index` of the ensemble defined by `cfg`.
pub fn integrate_path(
    model: &HybridModel,
    generator: &GeneratorMatrix,
    segment: &InitialSegment,
    cfg: &SimulationConfig,
    control: ControlMode,
    path_index: u64,
) -> Result<Path> {
    let streams = PathStreams::new(cfg.master_seed, path_index);
    Integrator::new(model, generator, segment, cfg, control, streams)?.run()
}

/// All `cfg.path_count()` paths, in index order.
pub fn simulate_paths(
    model: &HybridModel,
    generator: &GeneratorMatrix,
    segment: &InitialSegment,
    cfg: &SimulationConfig,
    control: ControlMode,
) -> Result<Vec<Path>> {
    (0..cfg.path_count as u64)
        .into_par_iter()
        .map(|k| integrate_path(model, generator, segment, cfg, control, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub times: Vec<f64>,
    /// Sample mean of `|x(t)|^p`.
    pub mean_moment: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Paths already exploded at each time; they enter the mean at the
    /// explosion cap.
    pub exploded_count: Vec<usize>,
    pub path_count: usize,
    pub moment_order: f64,
}

/// Running mean and sum of squared deviations per record time.
struct Partial {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    exploded: Vec<usize>,
}

impl Partial {
    fn zeros(len: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            exploded: vec![0; len],
        }
    }

    fn merge(&mut self, other: &Partial) {
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        for j in 0..self.mean.len() {
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * other.count / n;
            self.m2[j] += other.m2[j] + delta * delta * self.count * other.count / n;
            self.exploded[j] += other.exploded[j];
        }
        self.count = n;
    }
}

/// Monte Carlo estimate of `E|x(t)|^p` at the record times.
pub fn monte_carlo_moment(
    model: &HybridModel,
    generator: &GeneratorMatrix,
    segment: &InitialSegment,
    cfg: &SimulationConfig,
    control: ControlMode,
) -> Result<MomentEstimate> {
    if cfg.path_count < 2 {
        return Err(invalid("moment estimation needs at least two paths"));
    }
    let p = cfg.moment_order;
    let steps = &cfg.record_steps;
    let len = steps.len();
    let capped = cfg.explosion_cap.powf(p);
    let chunks = cfg.path_count.div_ceil(CHUNK);

    let partials: Vec<Result<Partial>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Partial::zeros(len);
            for k in c * CHUNK..((c + 1) * CHUNK).min(cfg.path_count) {
                let path = integrate_path(model, generator, segment, cfg, control, k as u64)?;
                acc.count += 1.0;
                for j in 0..len {
                    let value = match path.states.get(j) {
                        Some(x) => norm(x).powf(p),
                        None => {
                            acc.exploded[j] += 1;
                            capped
                        }
                    };
                    let delta = value - acc.mean[j];
                    acc.mean[j] += delta / acc.count;
                    acc.m2[j] += delta * (value - acc.mean[j]);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = Partial::zeros(len);
    for partial in partials {
        total.merge(&partial?);
    }
    let count = total.count;
    let std_error = total.m2.iter().map(|m2| (m2 / (count - 1.0) / count).sqrt()).collect();
    Ok(MomentEstimate {
        times: cfg.record_times(),
        mean_moment: total.mean,
        std_error,
        exploded_count: total.exploded,
        path_count: cfg.path_count,
        moment_order: p,
    })
}

fn window_indices(times: &[f64], window: (f64, f64)) -> Result<Vec<usize>> {
    let (a, b) = window;
    if !(a < b) {
        return Err(invalid(format!("empty window [{a}, {b}]")));
    }
    let idx: Vec<usize> = (0..times.len()).filter(|&j| times[j] >= a && times[j] <= b).collect();
    if idx.len() < 3 {
        return Err(invalid(format!("window [{a}, {b}] contains {} record times, need 3", idx.len())));
    }
    Ok(idx)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `ln E|x(t)|^p` against `t` over `window`.
pub fn estimate_moment_exponent(est: &MomentEstimate, window: (f64, f64)) -> Result<f64> {
    let idx = window_indices(&est.times, window)?;
    let mut ts = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    for j in idx {
        if !(est.mean_moment[j] > 0.0) {
            return Err(Error::NonPositive(est.times[j]));
        }
        ts.push(est.times[j]);
        ys.push(est.mean_moment[j].ln());
    }
    Ok(least_squares_slope(&ts, &ys))
}

/// Slope of `ln |x(t)|` against `t` for a single path.
pub fn estimate_pathwise_exponent(path: &Path, window: (f64, f64)) -> Result<f64> {
    if let Some(te) = path.exploded_at {
        if te <= window.1 {
            return Err(Error::Exploded(te));
        }
    }
    let idx = window_indices(&path.times, window)?;
    let mut ts = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    for j in idx {
        let r = norm(&path.states[j]);
        if !(r > 0.0) {
            return Err(Error::NonPositive(path.times[j]));
        }
        ts.push(path.times[j]);
        ys.push(r.ln());
    }
    Ok(least_squares_slope(&ts, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateVector;
    use crate::models::LinearHybridModel;
    use crate::rng::{substream, Purpose};

    fn two_mode_linear() -> (HybridModel, GeneratorMatrix) {
        let model = LinearHybridModel::scalar(&[0.5, -0.2], &[0.4, 0.3], &[1.5, 0.8])
            .unwrap()
            .into_model("two-mode");
        let gen = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        (model, gen)
    }

    fn segment(value: f64, m: usize, h: f64) -> InitialSegment {
        InitialSegment::constant(StateVector::new(vec![value]).unwrap(), m, h, ModeIndex::new(0)).unwrap()
    }

    #[test]
    fn config_snaps_and_rejects_off_grid_delays() {
        let cfg = SimulationConfig::new(1e-3, 1.0, 0.005, 4, 0, 2.0).unwrap();
        assert_eq!(cfg.delay_steps(), 5);
        assert_eq!(cfg.total_steps(), 1000);
        assert!(cfg.delay_rounding() < 1e-12);
        assert_eq!(cfg.record_steps().len(), DEFAULT_RECORD_COUNT);
        assert_eq!(*cfg.record_steps().last().unwrap(), 1000);
        assert!(SimulationConfig::new(1e-4, 20.0, 1e-6, 100, 0, 0.99).is_err());
        assert!(SimulationConfig::new(1e-3, 1.0, 0.0055, 4, 0, 2.0).is_err());
        assert!(SimulationConfig::new(0.0, 1.0, 0.0, 4, 0, 2.0).is_err());
        assert!(SimulationConfig::new(1e-3, 1.0, 0.0, 0, 0, 2.0).is_err());
        assert!(cfg.clone().with_record_times(&[0.5, 0.2]).is_err());
        assert!(cfg.clone().with_record_times(&[0.5, 2.0]).is_err());
        assert_eq!(cfg.with_record_times(&[0.0, 0.25]).unwrap().record_steps(), &[0, 250]);
    }

    #[test]
    fn zero_initial_data_gives_zero_path() {
        let (model, gen) = two_mode_linear();
        let cfg = SimulationConfig::new(1e-3, 2.0, 0.01, 8, 5, 2.0).unwrap();
        for control in [ControlMode::Uncontrolled, ControlMode::Controlled, ControlMode::Delayed] {
            let path = integrate_path(&model, &gen, &segment(0.0, 10, 1e-3), &cfg, control, 3).unwrap();
            assert!(path.states.iter().all(|x| x[0] == 0.0));
            let est = monte_carlo_moment(&model, &gen, &segment(0.0, 10, 1e-3), &cfg, control).unwrap();
            assert!(est.mean_moment.iter().all(|&v| v == 0.0));
            assert!(est.std_error.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_delay_matches_controlled_bit_for_bit() {
        let (model, gen) = two_mode_linear();
        let cfg = SimulationConfig::new(1e-3, 3.0, 0.0, 4, 9, 2.0).unwrap();
        let seg = segment(1.3, 0, 1e-3);
        for k in 0..4 {
            let a = integrate_path(&model, &gen, &seg, &cfg, ControlMode::Controlled, k).unwrap();
            let b = integrate_path(&model, &gen, &seg, &cfg, ControlMode::Delayed, k).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn delayed_control_reads_the_initial_segment() {
        // Deterministic scalar: dx = -u(x(t - tau)) dt with u = -d x and no
        // drift or noise. While t < tau the control sees the history.
        let model = LinearHybridModel::scalar(&[0.0], &[0.0], &[2.0]).unwrap().into_model("d");
        let gen = GeneratorMatrix::new(&[vec![0.0]]).unwrap();
        let h = 0.01;
        let seg = InitialSegment::from_fn(10, h, ModeIndex::new(0), |s| vec![1.0 + s]).unwrap();
        let cfg = SimulationConfig::new(h, 0.2, 0.1, 1, 0, 2.0).unwrap().with_every_step_recorded();
        let path = integrate_path(&model, &gen, &seg, &cfg, ControlMode::Delayed, 0).unwrap();
        let mut x = 1.0;
        for k in 0..20 {
            assert!((path.states[k][0] - x).abs() < 1e-14, "step {k}");
            let delayed = if k < 10 { 1.0 + (k as f64 - 10.0) * h } else { path.states[k - 10][0] };
            x -= 2.0 * delayed * h;
        }
    }

    #[test]
    fn markov_stream_does_not_touch_brownian_increments() {
        let (model, gen) = two_mode_linear();
        let cfg = SimulationConfig::new(1e-3, 5.0, 0.0, 1, 1, 2.0).unwrap();
        let seg = segment(1.0, 0, 1e-3);
        let run = |markov_seed: u64| {
            let streams = PathStreams {
                brownian: substream(42, 0, Purpose::Brownian),
                markov: substream(markov_seed, 0, Purpose::Markov),
            };
            let mut it = Integrator::new(&model, &gen, &seg, &cfg, ControlMode::Controlled, streams).unwrap();
            let mut increments = Vec::new();
            let mut modes = Vec::new();
            while !it.is_finished() {
                modes.push(it.mode());
                it.step().unwrap();
                increments.push(it.last_increment()[0]);
            }
            (increments, modes)
        };
        let (inc_a, modes_a) = run(1);
        let (inc_b, modes_b) = run(2);
        assert_eq!(inc_a, inc_b);
        assert_ne!(modes_a, modes_b);
    }

    #[test]
    fn restart_from_checkpoint_reproduces_the_tail() {
        let (model, gen) = two_mode_linear();
        let h = 1e-3;
        let cfg = SimulationConfig::new(h, 2.0, 0.05, 1, 17, 2.0).unwrap().with_every_step_recorded();
        let seg = segment(0.7, 50, h);
        let full = integrate_path(&model, &gen, &seg, &cfg, ControlMode::Delayed, 0).unwrap();

        let streams = PathStreams::new(17, 0);
        let mut it = Integrator::new(&model, &gen, &seg, &cfg, ControlMode::Delayed, streams).unwrap();
        it.advance_to(731).unwrap();
        let checkpoint = it.checkpoint();
        assert_eq!(checkpoint.state(), full.states[731].as_slice());
        drop(it);
        let tail = Integrator::resume(&model, &cfg, ControlMode::Delayed, checkpoint).unwrap().run().unwrap();
        assert_eq!(tail.times, full.times[731..]);
        assert_eq!(tail.states, full.states[731..]);
        assert_eq!(tail.modes, full.modes[731..]);
    }

    #[test]
    fn explosion_is_recorded_not_propagated() {
        let model = LinearHybridModel::scalar(&[50.0], &[0.0], &[0.0]).unwrap().into_model("fast");
        let gen = GeneratorMatrix::new(&[vec![0.0]]).unwrap();
        let cfg = SimulationConfig::new(1e-2, 2.0, 0.0, 2, 0, 1.0).unwrap().with_every_step_recorded();
        let path = integrate_path(&model, &gen, &segment(1.0, 0, 1e-2), &cfg, ControlMode::Uncontrolled, 0).unwrap();
        // 1.5^k crosses 1e12 after 69 steps.
        let te = path.exploded_at.unwrap();
        assert!((te - 0.69).abs() < 1e-12);
        assert_eq!(path.states.len(), 69);
        assert!(path.states.iter().all(|x| x[0].is_finite() && x[0] <= 1e12));

        let est = monte_carlo_moment(&model, &gen, &segment(1.0, 0, 1e-2), &cfg, ControlMode::Uncontrolled).unwrap();
        assert_eq!(*est.exploded_count.last().unwrap(), 2);
        assert_eq!(*est.mean_moment.last().unwrap(), 1e12);
        assert!(matches!(estimate_pathwise_exponent(&path, (0.0, 1.0)), Err(Error::Exploded(_))));
    }

    #[test]
    fn moment_matches_two_pass_statistics() {
        let (model, gen) = two_mode_linear();
        // 150 paths span three chunks, the last one partial.
        let cfg = SimulationConfig::new(1e-3, 1.0, 0.0, 150, 4, 1.5)
            .unwrap()
            .with_record_count(11)
            .unwrap();
        let seg = segment(0.7, 0, 1e-3);
        let est = monte_carlo_moment(&model, &gen, &seg, &cfg, ControlMode::Controlled).unwrap();
        let paths = simulate_paths(&model, &gen, &seg, &cfg, ControlMode::Controlled).unwrap();
        for j in 0..11 {
            let values: Vec<f64> = paths.iter().map(|p| p.states[j][0].abs().powf(1.5)).collect();
            let mean = values.iter().sum::<f64>() / 150.0;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 149.0;
            assert!((est.mean_moment[j] - mean).abs() <= 1e-13 * mean);
            assert!((est.std_error[j] - (var / 150.0).sqrt()).abs() <= 1e-12 * mean);
        }
        assert_eq!(est.std_error[0], 0.0);
    }

    #[test]
    fn estimates_independent_of_thread_count() {
        let (model, gen) = two_mode_linear();
        let cfg = SimulationConfig::new(1e-3, 1.0, 0.01, 150, 23, 1.5)
            .unwrap()
            .with_record_count(50)
            .unwrap();
        let seg = segment(1.0, 10, 1e-3);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_moment(&model, &gen, &seg, &cfg, ControlMode::Delayed).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(4));
        assert_eq!(one.path_count, 150);
    }

    #[test]
    fn exponent_fits() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let est = MomentEstimate {
            mean_moment: times.iter().map(|t| (-2.0 * t).exp()).collect(),
            std_error: vec![0.0; 50],
            exploded_count: vec![0; 50],
            times: times.clone(),
            path_count: 2,
            moment_order: 2.0,
        };
        assert!((estimate_moment_exponent(&est, (0.0, 5.0)).unwrap() + 2.0).abs() < 1e-12);
        assert!(estimate_moment_exponent(&est, (0.0, 0.15)).is_err());

        let path = Path {
            states: times.iter().map(|t| vec![3.0 * (-t).exp(), -4.0 * (-t).exp()]).collect(),
            modes: vec![ModeIndex::new(0); 50],
            times,
            exploded_at: None,
        };
        assert!((estimate_pathwise_exponent(&path, (1.0, 4.0)).unwrap() + 1.0).abs() < 1e-12);

        let mut zero = est.clone();
        zero.mean_moment[20] = 0.0;
        assert!(matches!(estimate_moment_exponent(&zero, (1.0, 3.0)), Err(Error::NonPositive(_))));
    }
}
