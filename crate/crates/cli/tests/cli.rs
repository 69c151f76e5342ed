use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaystab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn quantity(path: &Path, name: &str) -> f64 {
    let (header, rows) = rows(path);
    assert_eq!(header, ["quantity", "value"]);
    rows.iter().find(|r| r[0] == name).unwrap_or_else(|| panic!("no {name}"))[1].parse().unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const TAU_HEADER: [&str; 11] = ["p", "epsilon", "L1", "L2", "L3", "M", "gamma", "T", "tau_star", "lambda", "residual"];

#[test]
fn tau_star_from_preset() {
    let dir = TempDir::new().unwrap();
    let o = run(&["tau-star", "--preset", "figure-5.2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = rows(&dir.path().join("tau_star.csv"));
    assert_eq!(header, TAU_HEADER);
    assert_eq!(rows.len(), 1);
    let t: f64 = rows[0][7].parse().unwrap();
    let tau: f64 = rows[0][8].parse().unwrap();
    assert!((t - 0.7994283).abs() < 5e-4);
    assert!(((tau - 2.93e-6) / 2.93e-6).abs() < 0.02);
    assert!(String::from_utf8_lossy(&o.stdout).contains("tau* = "));
}

#[test]
fn tau_star_rejects_bad_epsilon() {
    let dir = TempDir::new().unwrap();
    let o = run(&["tau-star", "--preset", "figure-5.2", "--epsilon", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
}

#[test]
fn tau_star_sweep_writes_grid_and_best() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["tau-star", "--preset", "figure-5.2", "--sweep", "p=0.9:0.99:0.03", "eps=0.9:0.94:0.02"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, grid) = rows(&dir.path().join("tau_star_sweep.csv"));
    assert_eq!(header, TAU_HEADER);
    assert_eq!(grid.len(), 4 * 3);
    let (_, best) = rows(&dir.path().join("tau_star.csv"));
    let best_tau: f64 = best[0][8].parse().unwrap();
    let max = grid.iter().filter_map(|r| r[8].parse::<f64>().ok()).fold(0.0, f64::max);
    assert_eq!(best_tau, max);
}

#[test]
fn certify_reference_margins_with_falsification() {
    let dir = TempDir::new().unwrap();
    let o = run(&["certify", "--preset", "figure-5.2", "--falsify", "2000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("certificate.csv");
    assert!((quantity(&file, "theta_1") - 3.891286).abs() < 5e-6);
    assert!((quantity(&file, "theta_2") - 4.388653).abs() < 5e-6);
    assert!((quantity(&file, "M") - 1.127816).abs() < 5e-6);
    assert!((quantity(&file, "gamma") - 0.2278604).abs() < 5e-7);
    assert!(quantity(&file, "max_excess_1") < 0.0);
}

#[test]
fn certify_identity_and_rejection() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
        generator = [[0.0]]
        [model]
        kind = "linear"
        drift = [[[-1.0]]]
        noise = [[[[0.0]]]]
        gain = [[[0.0]]]
        [certify]
        alpha = [1.0]
        "#,
    );
    let o = run(&["certify", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("certificate.csv");
    assert_eq!(quantity(&file, "M"), 1.0);
    assert_eq!(quantity(&file, "gamma"), 1.0);

    let o = run(&["certify", "--preset", "figure-5.2", "--alpha=-5,-5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rejected"), "{}", stderr(&o));
}

#[test]
fn simulate_zero_history_gives_zero_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
        generator = [[-1.0, 1.0], [2.0, -2.0]]
        [model]
        kind = "oscillator"
        [initial]
        state = [0.0, 0.0]
        mode = 2
        [simulation]
        control = "delayed"
        delay = 0.01
        step = 1e-3
        horizon = 1.0
        paths = 3
        moment_order = 2.0
        records = 11
        "#,
    );
    let o = run(&["simulate", "--config", &cfg, "--plot"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..3 {
        let (header, rows) = rows(&dir.path().join(format!("paths/path_{k:04}.csv")));
        assert_eq!(header, ["t", "x_1", "x_2", "mode"]);
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0][3], "2");
        assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0 && r[2].parse::<f64>().unwrap() == 0.0));
    }
    let svg = fs::read_to_string(dir.path().join("path_0000.svg")).unwrap();
    assert!(svg.contains("<svg"));
}

#[test]
fn moment_csv_and_plot() {
    let dir = TempDir::new().unwrap();
    let o = run(&["moment", "--preset", "figure-5.2", "--paths", "8", "--plot"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = rows(&dir.path().join("moment.csv"));
    assert_eq!(header, ["t", "mean_moment", "std_error", "exploded_count"]);
    assert_eq!(rows.len(), 1000);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);
    assert!(fs::read_to_string(dir.path().join("moment.svg")).unwrap().contains("<svg"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("moment exponent"));
}

#[test]
fn counterexample_reports_blowup() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
        [model]
        kind = "counterexample"
        variant = "delayed"
        epsilon = 0.1
        [counterexample]
        delayed_paths = 2000
        moment_paths = 500
        "#,
    );
    let o = run(&["counterexample", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("counterexample.csv");
    assert!((quantity(&file, "z_bar") - 3.96).abs() < 0.02);
    assert!((quantity(&file, "blowup_time") - 0.1).abs() < 1e-12);
    assert!(quantity(&file, "cap_hits") > 0.0);
    let (header, _) = rows(&dir.path().join("counterexample_delayed_moment.csv"));
    assert_eq!(header, ["t", "mean_moment", "std_error", "exploded_count"]);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let o = run(&["tau-star", "--preset", "figure-9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(&dir, "seed = 1\nunknown_key = 2\n");
    let o = run(&["tau-star", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["tau-star"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    // The cubic system is not globally Lipschitz.
    let o = run(&["tau-star", "--preset", "appendix"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

fn manifest_lines(text: &str, prefix: &[&str]) -> Vec<String> {
    text.lines()
        .filter(|l| prefix.iter().any(|p| l.split_once(':').is_some_and(|(head, _)| head.ends_with(p))))
        .map(String::from)
        .collect()
}

#[test]
fn reproduce_is_deterministic_and_exit_code_tracks_checks() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let quick = ["reproduce-paper", "--paths", "2", "--counterexample-paths", "300"];
    let oa = run(&quick, a.path());
    let ob = run(&quick, b.path());
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.path().join("manifest.txt")).unwrap());
    let any_failed = manifest.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(oa.status.code(), Some(if any_failed { 1 } else { 0 }), "{}", stderr(&oa));
    assert_eq!(oa.status.code(), ob.status.code());
    assert!(manifest.contains(" T: computed 0.7994283"));

    let mut reseeded = quick.to_vec();
    reseeded.extend(["--seed", "99"]);
    run(&reseeded, c.path());
    let other = fs::read_to_string(c.path().join("manifest.txt")).unwrap();
    let fixed = ["theta_1", "theta_2", " M", "gamma", " T", "tau*", "alpha", "Q_1", "Q_2", "z_bar"];
    assert_eq!(manifest_lines(&manifest, &fixed), manifest_lines(&other, &fixed));
    assert_eq!(manifest_lines(&manifest, &fixed).len(), 11);
}
