//! CSV and SVG writers. Column order is part of the interface.

use std::path::Path;

use anyhow::{Context, Result};
use delaystab::simulate::{MomentEstimate, Path as SamplePath};
use plotters::prelude::*;

pub const TAU_STAR_HEADER: [&str; 11] =
    ["p", "epsilon", "L1", "L2", "L3", "M", "gamma", "T", "tau_star", "lambda", "residual"];
pub const QUANTITY_HEADER: [&str; 2] = ["quantity", "value"];
pub const MOMENT_HEADER: [&str; 4] = ["t", "mean_moment", "std_error", "exploded_count"];

pub fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_quantities(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(QUANTITY_HEADER)?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, x_1, ..., x_n, mode` with one-based modes.
pub fn write_path(path: &Path, sample: &SamplePath, dimension: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dimension).map(|i| format!("x_{i}")));
    header.push("mode".into());
    w.write_record(&header)?;
    for ((t, x), mode) in sample.times.iter().zip(&sample.states).zip(&sample.modes) {
        let mut row = vec![num(*t)];
        row.extend(x.iter().map(|v| num(*v)));
        row.push((mode.index() + 1).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_moment(path: &Path, est: &MomentEstimate) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(MOMENT_HEADER)?;
    for k in 0..est.times.len() {
        w.write_record([
            num(est.times[k]),
            num(est.mean_moment[k]),
            num(est.std_error[k]),
            est.exploded_count[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow::anyhow!("plotting failed: {e:?}")
}

/// State components over time above the mode staircase.
pub fn plot_path(file: &Path, sample: &SamplePath, title: &str) -> Result<()> {
    let root = SVGBackend::new(file, (900, 650)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (upper, lower) = root.split_vertically(470);
    let t_end = sample.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let dimension = sample.states.first().map_or(0, Vec::len);

    let (lo, hi) = range(sample.states.iter().flatten().copied());
    let mut chart = ChartBuilder::on(&upper)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("t").y_desc("state").draw().map_err(plot_err)?;
    for i in 0..dimension {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(sample.times.iter().zip(&sample.states).map(|(t, x)| (*t, x[i])), color))
            .map_err(plot_err)?
            .label(format!("x_{}", i + 1))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().border_style(BLACK).draw().map_err(plot_err)?;

    let top = sample.modes.iter().map(|m| m.index() + 1).max().unwrap_or(1) as f64;
    let mut modes = ChartBuilder::on(&lower)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, 0.5..top + 0.5)
        .map_err(plot_err)?;
    modes.configure_mesh().x_desc("t").y_desc("mode").y_labels(top as usize + 1).draw().map_err(plot_err)?;
    let mut stairs = Vec::with_capacity(2 * sample.times.len());
    for (k, (t, m)) in sample.times.iter().zip(&sample.modes).enumerate() {
        let level = (m.index() + 1) as f64;
        if k > 0 {
            stairs.push((*t, stairs.last().map_or(level, |p: &(f64, f64)| p.1)));
        }
        stairs.push((*t, level));
    }
    modes.draw_series(LineSeries::new(stairs, BLUE)).map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// `log10` of the mean moment over time.
pub fn plot_moment(file: &Path, est: &MomentEstimate, title: &str) -> Result<()> {
    let points: Vec<(f64, f64)> = est
        .times
        .iter()
        .zip(&est.mean_moment)
        .filter(|(_, m)| **m > 0.0)
        .map(|(t, m)| (*t, m.log10()))
        .collect();
    let root = SVGBackend::new(file, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let t_end = est.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let (lo, hi) = range(points.iter().map(|p| p.1));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc(format!("log10 E|x|^{}", est.moment_order))
        .draw()
        .map_err(plot_err)?;
    chart.draw_series(LineSeries::new(points, RED)).map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
