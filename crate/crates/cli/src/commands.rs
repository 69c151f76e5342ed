use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use delaystab::certify::{certify, falsify_alpha, AlphaVector, MMatrixCertificate};
use delaystab::models::{
    demonstrate_instability, design_oscillator_gains, oscillator_lipschitz, oscillator_margins, oscillator_q,
    InstabilityReport, OscillatorParams, REFERENCE_DESIGN_ORDER,
};
use delaystab::simulate::{estimate_moment_exponent, monte_carlo_moment, simulate_paths, MomentEstimate};
use delaystab::thresholds::{horizon_t, linspace, optimize_tau_star, tau_star, SweepPoint, ThresholdInputs};
use delaystab::{LipschitzBounds, ModeIndex};

use crate::config::{RunConfig, MARGIN_RESOLUTION};
use crate::output::{self, num, write_quantities, TAU_STAR_HEADER};

pub fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn tau_row(p: f64, epsilon: f64, l: &LipschitzBounds, moment: Option<(f64, f64)>, point: Option<(f64, f64, f64, f64)>) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    vec![
        num(p),
        num(epsilon),
        num(l.drift),
        num(l.control),
        num(l.diffusion),
        opt(moment.map(|m| m.0)),
        opt(moment.map(|m| m.1)),
        opt(point.map(|r| r.0)),
        opt(point.map(|r| r.1)),
        opt(point.map(|r| r.2)),
        opt(point.map(|r| r.3)),
    ]
}

fn sweep_row(point: &SweepPoint, l: &LipschitzBounds) -> Vec<String> {
    let moment = point.moment.as_ref().ok().copied();
    let result = point.result.as_ref().ok().map(|r| (r.horizon, r.tau_star, r.lambda, r.residual));
    tau_row(point.p, point.epsilon, l, moment, result)
}

/// `start:stop:step` into an inclusive grid.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number {s:?} in range {spec:?}")))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else { bail!("range {spec:?} is not start:stop:step") };
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        bail!("range {spec:?} needs step > 0 and stop >= start");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok(linspace(start, start + (n - 1) as f64 * step, n))
}

pub struct SweepSpec {
    pub p: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
}

pub fn parse_sweep(items: &[String]) -> Result<SweepSpec> {
    let mut spec = SweepSpec { p: None, epsilon: None };
    for item in items {
        let (key, range) = item.split_once('=').with_context(|| format!("sweep item {item:?} is not key=range"))?;
        let grid = parse_range(range)?;
        match key.trim() {
            "p" => spec.p = Some(grid),
            "eps" | "epsilon" => spec.epsilon = Some(grid),
            other => bail!("unknown sweep key {other:?}; use p or eps"),
        }
    }
    Ok(spec)
}

pub fn tau_star_cmd(cfg: &RunConfig, out: &Path, p: Option<f64>, epsilon: Option<f64>, sweep: Option<SweepSpec>) -> Result<()> {
    prepare_dir(out)?;
    let spec = cfg.threshold_spec()?;
    let p = p.unwrap_or(spec.p);
    let epsilon = epsilon.unwrap_or(spec.epsilon);
    let lipschitz = cfg.lipschitz()?;
    let opts = cfg.threshold_options()?;

    if let Some(sweep) = sweep {
        let p_grid = sweep.p.unwrap_or_else(|| vec![p]);
        let eps_grid = sweep.epsilon.unwrap_or_else(|| vec![epsilon]);
        let fixed = match (spec.moment_bound, spec.gamma) {
            (Some(m), Some(g)) => Some((m, g)),
            (None, None) => None,
            _ => bail!("give both moment_bound and gamma, or neither"),
        };
        let explicit = cfg.certify.as_ref().and_then(|c| c.alpha.clone()).map(AlphaVector::new).transpose()?;
        let params = cfg.oscillator_params()?;
        if fixed.is_none() && explicit.is_none() && params.is_none() {
            bail!("sweep needs moment_bound and gamma, [certify] alpha, or an oscillator model");
        }
        let generator = cfg.generator()?;
        let moment_pair = |q: f64| -> delaystab::Result<(f64, f64)> {
            if let Some(pair) = fixed {
                return Ok(pair);
            }
            let alpha = match (&explicit, &params) {
                (Some(a), _) => a.clone(),
                (None, Some(params)) => oscillator_margins(q, params, MARGIN_RESOLUTION)?,
                (None, None) => unreachable!("checked above"),
            };
            let cert = certify(&alpha, &generator)?;
            Ok((cert.moment_bound, cert.gamma))
        };
        let sweep = optimize_tau_star(lipschitz, moment_pair, &p_grid, &eps_grid, &opts)?;
        let mut w = output::writer(&out.join("tau_star_sweep.csv"))?;
        w.write_record(TAU_STAR_HEADER)?;
        for point in &sweep.table {
            w.write_record(sweep_row(point, &lipschitz))?;
        }
        w.flush()?;
        let best = sweep.best();
        let mut w = output::writer(&out.join("tau_star.csv"))?;
        w.write_record(TAU_STAR_HEADER)?;
        w.write_record(sweep_row(best, &lipschitz))?;
        w.flush()?;
        let feasible = sweep.table.iter().filter(|s| s.result.is_ok()).count();
        println!(
            "best tau* = {:e} at p = {}, epsilon = {} ({feasible}/{} grid points feasible)",
            best.tau_star().expect("best point is feasible"),
            best.p,
            best.epsilon,
            sweep.table.len()
        );
        return Ok(());
    }

    let inputs = cfg.threshold_inputs(p, epsilon)?;
    let res = tau_star(&inputs, &opts)?;
    let mut w = output::writer(&out.join("tau_star.csv"))?;
    w.write_record(TAU_STAR_HEADER)?;
    w.write_record(tau_row(
        p,
        epsilon,
        &lipschitz,
        Some((inputs.moment_bound, inputs.gamma)),
        Some((res.horizon, res.tau_star, res.lambda, res.residual)),
    ))?;
    w.flush()?;
    println!("T = {:.7}", res.horizon);
    println!("tau* = {:e} (residual {:.2e}, moment decay rate {:.6e})", res.tau_star, res.residual, res.lambda);
    Ok(())
}

fn certificate_rows(alpha: &AlphaVector, cert: &MMatrixCertificate) -> Vec<(String, String)> {
    let mut rows = Vec::new();
    for (i, a) in alpha.as_slice().iter().enumerate() {
        rows.push((format!("alpha_{}", i + 1), num(*a)));
    }
    for (i, t) in cert.theta.iter().enumerate() {
        rows.push((format!("theta_{}", i + 1), num(*t)));
    }
    rows.push(("beta_1".into(), num(cert.beta1)));
    rows.push(("beta_2".into(), num(cert.beta2)));
    rows.push(("M".into(), num(cert.moment_bound)));
    rows.push(("gamma".into(), num(cert.gamma)));
    rows.push(("residual".into(), num(cert.residual)));
    rows
}

pub fn certify_cmd(cfg: &RunConfig, out: &Path, alpha: Option<Vec<f64>>, falsify: Option<usize>) -> Result<()> {
    prepare_dir(out)?;
    let p = cfg.certify_order();
    let alpha = match alpha {
        Some(a) => AlphaVector::new(a)?,
        None => cfg.alpha(p)?,
    };
    let generator = cfg.generator()?;
    let cert = certify(&alpha, &generator).context("M-matrix certificate rejected")?;
    let mut rows = certificate_rows(&alpha, &cert);
    println!("theta = {:?}", cert.theta);
    println!("M = {:.7}, gamma = {:.7}", cert.moment_bound, cert.gamma);

    let samples = falsify.or(cfg.certify.as_ref().and_then(|c| c.falsify));
    let mut falsified = None;
    if let Some(n) = samples {
        let model = cfg.model()?;
        let report = falsify_alpha(&model, &alpha, p, n, cfg.seed())?;
        rows.push(("falsify_samples_per_mode".into(), n.to_string()));
        for m in &report.modes {
            rows.push((format!("max_excess_{}", m.mode.index() + 1), num(m.max_excess)));
        }
        rows.push(("falsified".into(), report.falsified().to_string()));
        println!("falsification with {n} samples per mode: {}", if report.falsified() { "violated" } else { "no violation" });
        falsified = report.witness().cloned();
    }
    write_quantities(&out.join("certificate.csv"), &rows)?;
    if let Some(w) = falsified {
        bail!(
            "margin alpha_{} violated: excess {:e} at x = {:?}, t = {}",
            w.mode.index() + 1,
            w.max_excess,
            w.witness_state,
            w.witness_time
        );
    }
    Ok(())
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path, full: bool, paths: Option<usize>, plot: bool) -> Result<()> {
    prepare_dir(out)?;
    let sim = cfg.simulation(full, paths)?;
    let all = simulate_paths(&sim.model, &sim.generator, &sim.segment, &sim.cfg, sim.control)?;
    let dir = out.join("paths");
    prepare_dir(&dir)?;
    for (k, path) in all.iter().take(sim.write_paths).enumerate() {
        output::write_path(&dir.join(format!("path_{k:04}.csv")), path, sim.model.dimension())?;
    }
    if plot {
        if let Some(first) = all.first() {
            output::plot_path(&out.join("path_0000.svg"), first, &format!("{} ({:?})", sim.model.name(), sim.control))?;
        }
    }
    let exploded = all.iter().filter(|p| p.exploded_at.is_some()).count();
    println!(
        "{} paths of {} steps written to {} ({} shown), {exploded} exploded",
        all.len(),
        sim.cfg.total_steps(),
        dir.display(),
        sim.write_paths
    );
    Ok(())
}

pub fn moment_cmd(cfg: &RunConfig, out: &Path, full: bool, paths: Option<usize>, plot: bool) -> Result<MomentEstimate> {
    prepare_dir(out)?;
    let sim = cfg.simulation(full, paths)?;
    let est = monte_carlo_moment(&sim.model, &sim.generator, &sim.segment, &sim.cfg, sim.control)?;
    output::write_moment(&out.join("moment.csv"), &est)?;
    if plot {
        output::plot_moment(&out.join("moment.svg"), &est, &format!("{} ({:?})", sim.model.name(), sim.control))?;
    }
    match estimate_moment_exponent(&est, sim.window) {
        Ok(rate) => println!("moment exponent on [{}, {}]: {rate:.6}", sim.window.0, sim.window.1),
        Err(e) => println!("moment exponent unavailable: {e}"),
    }
    Ok(est)
}

fn instability_rows(r: &InstabilityReport) -> Vec<(String, String)> {
    vec![
        ("epsilon".into(), num(r.epsilon)),
        ("z_bar".into(), num(r.z_bar)),
        ("blowup_time".into(), r.blowup_time.map(num).unwrap_or_default()),
        ("delayed_paths".into(), r.delayed_second_moment.path_count.to_string()),
        ("cap_hits".into(), r.cap_hits.to_string()),
        ("cap_hit_fraction".into(), num(r.cap_hit_fraction)),
        ("controlled_fourth_moment_at_1".into(), num(r.controlled_at_one)),
        ("uncontrolled_fourth_moment_slope".into(), num(r.uncontrolled_slope)),
    ]
}

pub fn counterexample_cmd(cfg: &RunConfig, out: &Path, epsilon: Option<f64>, paths: Option<usize>, plot: bool) -> Result<InstabilityReport> {
    prepare_dir(out)?;
    let (eps, mut config) = cfg.counterexample();
    let eps = epsilon.unwrap_or(eps);
    if let Some(n) = paths {
        config.delayed_paths = n;
    }
    let report = demonstrate_instability(eps, &config)?;
    write_quantities(&out.join("counterexample.csv"), &instability_rows(&report))?;
    output::write_moment(&out.join("counterexample_delayed_moment.csv"), &report.delayed_second_moment)?;
    output::write_moment(&out.join("counterexample_controlled_moment.csv"), &report.controlled_fourth_moment)?;
    output::write_moment(&out.join("counterexample_uncontrolled_moment.csv"), &report.uncontrolled_fourth_moment)?;
    let mut w = output::writer(&out.join("riccati.csv"))?;
    w.write_record(["t", "u"])?;
    for (t, u) in report.delayed_second_moment.times.iter().zip(&report.riccati_lower_bound) {
        w.write_record([num(*t), u.map(num).unwrap_or_default()])?;
    }
    w.flush()?;
    if plot {
        output::plot_moment(&out.join("counterexample_delayed_moment.svg"), &report.delayed_second_moment, "delayed cubic feedback")?;
        output::plot_moment(
            &out.join("counterexample_controlled_moment.svg"),
            &report.controlled_fourth_moment,
            "undelayed cubic feedback",
        )?;
    }
    println!("z_bar = {:.10}", report.z_bar);
    if let Some(t) = report.blowup_time {
        println!("Riccati lower bound blows up at t* = {t:.10}");
    }
    println!(
        "{}/{} delayed paths hit the explosion cap by t = {eps}",
        report.cap_hits, report.delayed_second_moment.path_count
    );
    println!("controlled E|x(1)|^4 = {:.6e}", report.controlled_at_one);
    Ok(report)
}

/// Pass/fail record of a reproduction run.
#[derive(Default)]
pub struct Manifest {
    text: String,
    checks: usize,
    failed: Vec<String>,
}

impl Manifest {
    pub fn check(&mut self, name: &str, computed: String, expected: &str, tolerance: &str, pass: bool) {
        self.checks += 1;
        if !pass {
            self.failed.push(name.to_string());
        }
        let _ = writeln!(
            self.text,
            "{} {name}: computed {computed}; expected {expected} ({tolerance})",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    pub fn info(&mut self, name: &str, value: String) {
        let _ = writeln!(self.text, "INFO {name}: {value}");
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn failed(&self) -> &[String] {
        &self.failed
    }
}

fn four(v: f64) -> String {
    format!("{v:.4}")
}

fn digits(value: f64, expected: f64, n: i32) -> bool {
    let unit = 10f64.powi(expected.abs().log10().floor() as i32 - (n - 1));
    (value - expected).abs() <= 0.5 * unit
}

pub struct ReproduceOptions {
    pub seed: Option<u64>,
    pub full: bool,
    pub paths: Option<usize>,
    pub counterexample_paths: Option<usize>,
    pub plot: bool,
}

/// Gains, Q matrices, margins, certificate, horizon and tau*, then the
/// three oscillator simulations and the cubic counterexample.
pub fn reproduce_cmd(out: &Path, opts: &ReproduceOptions) -> Result<Manifest> {
    prepare_dir(out)?;
    let mut m = Manifest::default();
    let p = REFERENCE_DESIGN_ORDER;
    let epsilon = 0.94;

    let (d1, d2) = design_oscillator_gains(p).context("stage gains")?;
    m.check("gains d", format!("({}, {})", four(d1), four(d2)), "(0.4848, 0.5650)", "4 decimals", four(d1) == "0.4848" && four(d2) == "0.5650");

    let params = OscillatorParams::reference(p).context("stage gains")?;
    let printed = [
        ("Q_1", [-0.3848, -0.4724, -0.4724, -0.3848]),
        ("Q_2", [-0.4650, -0.0012, -0.0012, -0.0013]),
    ];
    for (i, (name, want)) in printed.iter().enumerate() {
        let q = oscillator_q(ModeIndex::new(i), p, &params).context("stage Q matrices")?;
        let got = [q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]].map(four);
        let want = want.map(four);
        m.check(
            name,
            format!("[[{}, {}], [{}, {}]]", got[0], got[1], got[2], got[3]),
            &format!("[[{}, {}], [{}, {}]]", want[0], want[1], want[2], want[3]),
            "entrywise, 4 decimals",
            got == want,
        );
    }

    let alpha = oscillator_margins(p, &params, MARGIN_RESOLUTION).context("stage margins")?;
    let a = alpha.as_slice();
    m.check("alpha", format!("({}, {})", four(a[0]), four(a[1])), "(0.3848, 0.0012)", "4 decimals", four(a[0]) == "0.3848" && four(a[1]) == "0.0012");

    let generator = delaystab::GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]])?;
    let cert = certify(&alpha, &generator).context("stage certificate")?;
    write_quantities(&out.join("certificate.csv"), &certificate_rows(&alpha, &cert))?;
    for (name, value, expected) in [
        ("theta_1", cert.theta[0], 3.891286),
        ("theta_2", cert.theta[1], 4.388653),
        ("M", cert.moment_bound, 1.127816),
        ("gamma", cert.gamma, 0.2278604),
    ] {
        m.check(name, format!("{value:.7}"), &expected.to_string(), "5 significant digits", digits(value, expected, 5));
    }

    let horizon = horizon_t(p, cert.moment_bound, cert.gamma, epsilon).context("stage horizon")?;
    m.check("T", format!("{horizon:.7}"), "0.7994283", "+/- 5e-4", (horizon - 0.7994283).abs() <= 5e-4);

    let lipschitz = oscillator_lipschitz(&params).context("stage tau*")?;
    let inputs = ThresholdInputs::new(p, lipschitz, cert.moment_bound, cert.gamma, epsilon).context("stage tau*")?;
    let res = tau_star(&inputs, &Default::default()).context("stage tau*")?;
    let mut w = output::writer(&out.join("tau_star.csv"))?;
    w.write_record(TAU_STAR_HEADER)?;
    w.write_record(tau_row(
        p,
        epsilon,
        &lipschitz,
        Some((cert.moment_bound, cert.gamma)),
        Some((res.horizon, res.tau_star, res.lambda, res.residual)),
    ))?;
    w.flush()?;
    m.check("tau*", format!("{:.4e}", res.tau_star), "2.93e-6", "+/- 2%", ((res.tau_star - 2.93e-6) / 2.93e-6).abs() <= 0.02);
    m.check("tau* residual", format!("{:.1e}", res.residual.abs()), "0", "<= 1e-9", res.residual.abs() <= 1e-9);
    m.info("moment decay rate below tau*", format!("{:.6e}", res.lambda));

    for (preset, expect_decay) in [("figure-5.1", false), ("figure-5.2", true), ("figure-5.3", true)] {
        let mut cfg = RunConfig::preset(preset)?;
        if opts.seed.is_some() {
            cfg.seed = opts.seed;
        }
        let sim = cfg.simulation(opts.full, opts.paths).with_context(|| format!("stage {preset}"))?;
        let est = monte_carlo_moment(&sim.model, &sim.generator, &sim.segment, &sim.cfg, sim.control)
            .with_context(|| format!("stage {preset}"))?;
        output::write_moment(&out.join(format!("moment_{preset}.csv")), &est)?;
        if opts.plot {
            output::plot_moment(&out.join(format!("moment_{preset}.svg")), &est, preset)?;
        }
        let rate = estimate_moment_exponent(&est, sim.window).with_context(|| format!("stage {preset}"))?;
        let setup = format!(
            "{:?}, h = {:e}, {} paths, window [{}, {}]",
            sim.control,
            sim.cfg.step(),
            sim.cfg.path_count(),
            sim.window.0,
            sim.window.1
        );
        let (expected, pass) = if expect_decay { ("< 0", rate < 0.0) } else { (">= 0", rate >= 0.0) };
        m.check(&format!("{preset} moment exponent"), format!("{rate:.4}"), expected, &setup, pass);
    }

    let mut cfg = RunConfig::preset("appendix")?;
    if opts.seed.is_some() {
        cfg.seed = opts.seed;
    }
    let (eps, mut config) = cfg.counterexample();
    if let Some(n) = opts.counterexample_paths {
        config.delayed_paths = n;
        config.moment_paths = n;
    }
    let report = demonstrate_instability(eps, &config).context("stage counterexample")?;
    write_quantities(&out.join("counterexample.csv"), &instability_rows(&report))?;
    m.check("z_bar", format!("{:.6}", report.z_bar), "3.96", "+/- 0.02", (report.z_bar - 3.96).abs() <= 0.02);
    if let Some(t) = report.blowup_time {
        m.info("Riccati blow-up time", format!("{t:.10} (epsilon = {eps})"));
    }
    m.check(
        "delayed cap-hit fraction",
        format!("{:.4}", report.cap_hit_fraction),
        "> 0",
        &format!("{} paths, h = {:e}", report.delayed_second_moment.path_count, config.delayed_step),
        report.cap_hit_fraction > 0.0,
    );
    let bound = 1.2 * (-4f64).exp();
    m.check(
        "controlled E|x(1)|^4",
        format!("{:.4e}", report.controlled_at_one),
        &format!("<= {bound:.4e}"),
        "1.2 e^-4",
        report.controlled_at_one <= bound,
    );
    m.check(
        "uncontrolled fourth-moment slope",
        format!("{:.4}", report.uncontrolled_slope),
        "> -4",
        "on [0, 1]",
        report.uncontrolled_slope > -4.0,
    );

    let _ = writeln!(m.text, "{} of {} checks passed", m.checks - m.failed.len(), m.checks);
    fs::write(out.join("manifest.txt"), &m.text).context("writing manifest")?;
    Ok(m)
}
