//! TOML run configuration and the shipped presets.

use std::path::Path;

use anyhow::{bail, Context, Result};
use delaystab::certify::{certify, AlphaVector, MMatrixCertificate};
use delaystab::models::{
    counterexample_model, oscillator_margins, oscillator_model, CounterexampleVariant, InstabilityConfig,
    LinearHybridModel, OscillatorParams,
};
use delaystab::nalgebra::DMatrix;
use delaystab::simulate::{ControlMode, SimulationConfig, DEFAULT_EXPLOSION_CAP, DEFAULT_RECORD_COUNT};
use delaystab::thresholds::{ThresholdInputs, ThresholdOptions, DEFAULT_TOL};
use delaystab::{GeneratorMatrix, HybridModel, InitialSegment, LipschitzBounds, ModeIndex, StateVector};
use serde::Deserialize;

pub const PRESETS: [(&str, &str); 4] = [
    ("figure-5.1", include_str!("../presets/figure-5.1.toml")),
    ("figure-5.2", include_str!("../presets/figure-5.2.toml")),
    ("figure-5.3", include_str!("../presets/figure-5.3.toml")),
    ("appendix", include_str!("../presets/appendix.toml")),
];

/// Resolution used when reading margins off the oscillator Q matrices.
pub const MARGIN_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: Option<ModelSpec>,
    /// Generator rows.
    pub generator: Option<Vec<Vec<f64>>>,
    pub initial: Option<InitialSpec>,
    pub simulation: Option<SimulationSpec>,
    /// Overrides applied to `simulation` by `--full`.
    pub full: Option<SimulationOverrides>,
    pub thresholds: Option<ThresholdSpec>,
    pub certify: Option<CertifySpec>,
    pub counterexample: Option<CounterexampleSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// Missing coefficient lists default to the reference oscillator; missing
    /// gains are designed for `design_p`.
    Oscillator {
        a: Option<Vec<f64>>,
        b: Option<Vec<f64>>,
        c: Option<Vec<f64>>,
        d: Option<Vec<f64>>,
        design_p: Option<f64>,
        drift_lipschitz: Option<f64>,
    },
    /// Per-mode matrices: `drift[i]` is n x n, `noise[i]` a list of n x n
    /// matrices (one per Brownian motion), `gain[i]` n x n with `u = -D x`.
    Linear {
        drift: Vec<Vec<Vec<f64>>>,
        noise: Vec<Vec<Vec<Vec<f64>>>>,
        gain: Vec<Vec<Vec<f64>>>,
    },
    Counterexample {
        variant: VariantName,
        epsilon: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Uncontrolled,
    Controlled,
    Delayed,
}

impl From<VariantName> for CounterexampleVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Uncontrolled => CounterexampleVariant::Uncontrolled,
            VariantName::Controlled => CounterexampleVariant::Controlled,
            VariantName::Delayed => CounterexampleVariant::Delayed,
        }
    }
}

impl From<VariantName> for ControlMode {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Uncontrolled => ControlMode::Uncontrolled,
            VariantName::Controlled => ControlMode::Controlled,
            VariantName::Delayed => ControlMode::Delayed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Held constant over the delay interval.
    pub state: Vec<f64>,
    /// One-based.
    #[serde(default = "one")]
    pub mode: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub step: f64,
    pub horizon: f64,
    #[serde(default)]
    pub delay: f64,
    pub paths: usize,
    pub moment_order: f64,
    pub control: VariantName,
    pub records: Option<usize>,
    pub explosion_cap: Option<f64>,
    /// Fit window for exponent estimates; defaults to the last three
    /// quarters of the horizon.
    pub window: Option<[f64; 2]>,
    /// Number of per-path CSV files written by `simulate`.
    pub write_paths: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOverrides {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub records: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub p: f64,
    pub epsilon: f64,
    /// `[L1, L2, L3]`; taken from the model when absent.
    pub lipschitz: Option<[f64; 3]>,
    /// Taken from the M-matrix certificate when absent.
    pub moment_bound: Option<f64>,
    pub gamma: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    /// Margins per mode; oscillator models derive them from Q when absent.
    pub alpha: Option<Vec<f64>>,
    /// Order used to derive margins and to probe the stability form.
    pub p: Option<f64>,
    pub falsify: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub epsilon: Option<f64>,
    pub delayed_step: Option<f64>,
    pub delayed_paths: Option<usize>,
    pub moment_step: Option<f64>,
    pub moment_paths: Option<usize>,
    pub explosion_cap: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text).with_context(|| format!("parsing preset {name}")),
            None => bail!(
                "unknown preset {name:?}; available: {}",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn model_spec(&self) -> Result<&ModelSpec> {
        self.model.as_ref().context("config has no [model] table")
    }

    pub fn oscillator_params(&self) -> Result<Option<OscillatorParams>> {
        let ModelSpec::Oscillator { a, b, c, d, design_p, drift_lipschitz } = self.model_spec()? else {
            return Ok(None);
        };
        let design = design_p.unwrap_or(delaystab::models::REFERENCE_DESIGN_ORDER);
        let mut params = OscillatorParams::reference(design)?;
        // The declared drift constant only describes the reference drift.
        if a.is_some() || c.is_some() {
            params.declared_drift_lipschitz = None;
        }
        for (field, value) in [(&mut params.a, a), (&mut params.b, b), (&mut params.c, c), (&mut params.d, d)] {
            if let Some(v) = value {
                *field = v.clone();
            }
        }
        if let Some(l) = drift_lipschitz {
            params.declared_drift_lipschitz = Some(*l);
        }
        params.validate()?;
        Ok(Some(params))
    }

    pub fn model(&self) -> Result<HybridModel> {
        if let Some(params) = self.oscillator_params()? {
            return Ok(oscillator_model(&params)?);
        }
        match self.model_spec()? {
            ModelSpec::Oscillator { .. } => unreachable!("handled above"),
            ModelSpec::Linear { drift, noise, gain } => {
                let drift = drift.iter().map(|m| matrix(m)).collect::<Result<Vec<_>>>()?;
                let noise = noise
                    .iter()
                    .map(|ms| ms.iter().map(|m| matrix(m)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                let gain = gain.iter().map(|m| matrix(m)).collect::<Result<Vec<_>>>()?;
                Ok(LinearHybridModel::new(drift, noise, gain)?.into_model("linear"))
            }
            ModelSpec::Counterexample { variant, .. } => Ok(counterexample_model((*variant).into())),
        }
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        match (&self.generator, self.model_spec()?) {
            (Some(rows), _) => Ok(GeneratorMatrix::new(rows)?),
            (None, ModelSpec::Counterexample { .. }) => Ok(GeneratorMatrix::new(&[vec![0.0]])?),
            (None, _) => bail!("config has no generator"),
        }
    }

    fn simulation_spec(&self, full: bool) -> Result<SimulationSpec> {
        let mut spec = self.simulation.clone().context("config has no [simulation] table")?;
        if full {
            let o = self.full.clone().unwrap_or_default();
            spec.step = o.step.unwrap_or(spec.step);
            spec.horizon = o.horizon.unwrap_or(spec.horizon);
            spec.paths = o.paths.unwrap_or(spec.paths);
            spec.records = o.records.or(spec.records);
        }
        Ok(spec)
    }

    /// Simulation settings, with optional path-count override.
    pub fn simulation(&self, full: bool, paths: Option<usize>) -> Result<Simulation> {
        let spec = self.simulation_spec(full)?;
        let path_count = paths.unwrap_or(spec.paths);
        let delay = if spec.control == VariantName::Delayed { spec.delay } else { 0.0 };
        let mut cfg = SimulationConfig::new(spec.step, spec.horizon, delay, path_count, self.seed(), spec.moment_order)?
            .with_record_count(spec.records.unwrap_or(DEFAULT_RECORD_COUNT))?
            .with_explosion_cap(spec.explosion_cap.unwrap_or(DEFAULT_EXPLOSION_CAP))?;
        if cfg.delay_rounding() != 0.0 {
            eprintln!("note: delay rounded to {} ({} steps)", cfg.delay(), cfg.delay_steps());
        }
        cfg = cfg.with_seed(self.seed());
        let window = match spec.window {
            Some([a, b]) => (a, b),
            None => (0.25 * cfg.horizon(), cfg.horizon()),
        };
        let initial = self.initial.as_ref().context("config has no [initial] table")?;
        let model = self.model()?;
        let mode = ModeIndex::from_one_based(initial.mode, model.modes())?;
        let x0 = StateVector::new(initial.state.clone())?;
        let segment = if cfg.delay_steps() > 0 {
            InitialSegment::constant(x0, cfg.delay_steps(), cfg.step(), mode)?
        } else {
            InitialSegment::point(x0, mode)
        };
        Ok(Simulation {
            control: spec.control.into(),
            write_paths: spec.write_paths.unwrap_or(path_count).min(path_count),
            cfg,
            segment,
            window,
            model,
            generator: self.generator()?,
        })
    }

    /// Margins for the certificate: explicit, or read off the oscillator Q
    /// matrices at order `p`.
    pub fn alpha(&self, p: f64) -> Result<AlphaVector> {
        if let Some(alpha) = self.certify.as_ref().and_then(|c| c.alpha.clone()) {
            return Ok(AlphaVector::new(alpha)?);
        }
        match self.oscillator_params()? {
            Some(params) => Ok(oscillator_margins(p, &params, MARGIN_RESOLUTION)?),
            None => bail!("no [certify] alpha given and the model does not supply margins"),
        }
    }

    pub fn certify_order(&self) -> f64 {
        self.certify
            .as_ref()
            .and_then(|c| c.p)
            .or(self.thresholds.as_ref().map(|t| t.p))
            .unwrap_or(delaystab::models::REFERENCE_DESIGN_ORDER)
    }

    pub fn certificate(&self, p: f64) -> Result<MMatrixCertificate> {
        Ok(certify(&self.alpha(p)?, &self.generator()?)?)
    }

    pub fn threshold_spec(&self) -> Result<&ThresholdSpec> {
        self.thresholds.as_ref().context("config has no [thresholds] table")
    }

    pub fn lipschitz(&self) -> Result<LipschitzBounds> {
        let spec = self.threshold_spec()?;
        if let Some([l1, l2, l3]) = spec.lipschitz {
            return Ok(LipschitzBounds::new(l1, l2, l3)?);
        }
        let model = self.model()?;
        if !model.is_globally_lipschitz() {
            bail!("model {} is not globally Lipschitz; thresholds do not apply", model.name());
        }
        Ok(model.lipschitz())
    }

    pub fn threshold_options(&self) -> Result<ThresholdOptions> {
        let tol = self.thresholds.as_ref().and_then(|t| t.tol).unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            bail!("threshold tolerance {tol} must lie in (0, 1)");
        }
        Ok(ThresholdOptions::with_tol(tol))
    }

    /// `(M, gamma)` at order `p`: explicit values or a fresh certificate.
    pub fn moment_pair(&self, p: f64) -> Result<(f64, f64)> {
        let spec = self.threshold_spec()?;
        match (spec.moment_bound, spec.gamma) {
            (Some(m), Some(g)) => Ok((m, g)),
            (None, None) => {
                let cert = self.certificate(p)?;
                Ok((cert.moment_bound, cert.gamma))
            }
            _ => bail!("give both moment_bound and gamma, or neither"),
        }
    }

    pub fn threshold_inputs(&self, p: f64, epsilon: f64) -> Result<ThresholdInputs> {
        let (m, gamma) = self.moment_pair(p)?;
        Ok(ThresholdInputs::new(p, self.lipschitz()?, m, gamma, epsilon)?)
    }

    pub fn counterexample(&self) -> (f64, InstabilityConfig) {
        let spec = self.counterexample.clone().unwrap_or_default();
        let model_eps = match &self.model {
            Some(ModelSpec::Counterexample { epsilon, .. }) => *epsilon,
            _ => None,
        };
        let d = InstabilityConfig::default();
        let config = InstabilityConfig {
            delayed_step: spec.delayed_step.unwrap_or(d.delayed_step),
            delayed_paths: spec.delayed_paths.unwrap_or(d.delayed_paths),
            moment_step: spec.moment_step.unwrap_or(d.moment_step),
            moment_paths: spec.moment_paths.unwrap_or(d.moment_paths),
            seed: self.seed(),
            explosion_cap: spec.explosion_cap.unwrap_or(d.explosion_cap),
        };
        (spec.epsilon.or(model_eps).unwrap_or(0.1), config)
    }
}

pub struct Simulation {
    pub model: HybridModel,
    pub generator: GeneratorMatrix,
    pub segment: InitialSegment,
    pub cfg: SimulationConfig,
    pub control: ControlMode,
    pub window: (f64, f64),
    pub write_paths: usize,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!("matrix rows must be nonempty and of equal length");
    }
    Ok(DMatrix::from_row_iterator(n, rows[0].len(), rows.iter().flatten().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_build() {
        for (name, _) in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.model().unwrap();
            cfg.generator().unwrap();
            if cfg.simulation.is_some() {
                cfg.simulation(false, Some(2)).unwrap();
                cfg.simulation(true, Some(2)).unwrap();
            }
        }
        assert!(RunConfig::preset("figure-9").is_err());
    }

    #[test]
    fn oscillator_defaults_to_reference() {
        let cfg = RunConfig::preset("figure-5.2").unwrap();
        let params = cfg.oscillator_params().unwrap().unwrap();
        assert_eq!(params, OscillatorParams::reference(0.99).unwrap());
        let alpha = cfg.alpha(0.99).unwrap();
        assert_eq!(alpha.as_slice(), &[0.3848, 0.0012]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("seed = 1\nsed = 2\n").is_err());
        assert!(RunConfig::parse("[simulation]\nstep = 1e-3\n").is_err());
    }

    #[test]
    fn linear_model_from_matrices() {
        let text = r#"
            generator = [[-1.0, 1.0], [1.0, -1.0]]
            [model]
            kind = "linear"
            drift = [[[0.5]], [[-1.0]]]
            noise = [[[[0.3]]], [[[0.1]]]]
            gain = [[[2.0]], [[0.0]]]
            [thresholds]
            p = 0.5
            epsilon = 0.5
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        let model = cfg.model().unwrap();
        assert_eq!((model.dimension(), model.modes()), (1, 2));
        assert_eq!(model.eval_drift(&[2.0], 0, 0.0).unwrap(), vec![1.0]);
        let l = cfg.lipschitz().unwrap();
        assert_eq!((l.drift, l.control, l.diffusion), (1.0, 2.0, 0.3));
    }

    #[test]
    fn counterexample_refuses_thresholds() {
        let cfg = RunConfig::preset("appendix").unwrap();
        assert!(cfg.lipschitz().is_err());
        assert_eq!(cfg.counterexample().0, 0.1);
    }
}
