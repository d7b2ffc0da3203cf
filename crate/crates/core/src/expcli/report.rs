//! Human-readable tables and log-log plot data from a finished run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::SUMMARY_FILE;
use super::summary::Summary;
use crate::error::{LabError, Result};

/// Band limits applied to the scalar spans a summary may carry.
pub const BANDS: [(&str, f64); 2] = [("moment_ratio_span", 3.0), ("sandwich_span", 10.0)];

pub fn load_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|_| LabError::ResultsMissing(path.clone()))?;
    serde_json::from_str(&text).map_err(|e| LabError::ManifestCorrupt {
        path,
        reason: e.to_string(),
    })
}

/// Renders the table for `summary`.
pub fn render(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment {} ({:?}, d={}, {:?} storage)", summary.experiment, summary.kind, summary.dim, summary.storage);
    for (kind, series) in &summary.series {
        let _ = writeln!(out, "\n{kind}");
        let _ = writeln!(out, "{:>10} {:>14} {:>12} {:>10}", "n", "mean", "stderr", "count");
        for r in series.records() {
            let _ = writeln!(out, "{:>10} {:>14.6} {:>12.6} {:>10}", r.n, r.mean, r.stderr, r.count);
        }
        for (label, fits) in [("slope", &summary.fits), ("median slope", &summary.median_fits)] {
            if let Some(f) = fits.get(kind) {
                let _ = writeln!(
                    out,
                    "{label} {:.4}  95% CI [{:.4}, {:.4}]  R^2 {:.4}",
                    f.slope, f.ci_low, f.ci_high, f.r_squared
                );
            }
        }
    }
    if !summary.checks.is_empty() {
        let _ = writeln!(out, "\nchecks");
        for (name, value) in &summary.checks {
            let verdict = BANDS
                .iter()
                .find(|(b, _)| b == name)
                .map(|(_, limit)| if *value < *limit { format!("  within {limit}") } else { format!("  OUTSIDE {limit}") })
                .unwrap_or_default();
            let _ = writeln!(out, "{name:<28} {value:.6}{verdict}");
        }
    }
    for (n, t) in &summary.tails {
        let _ = writeln!(
            out,
            "\nupper tail at n={n}: c {:.4}  95% CI [{:.4}, {:.4}]  envelope intercept {:.4}",
            t.c_hat, t.ci_low, t.ci_high, t.envelope_intercept
        );
    }
    for note in &summary.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

/// Writes `plot/<kind>.dat` with columns `log_n log_mean n mean stderr` and
/// returns the written paths.
pub fn write_plot_data(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    let plot = dir.join("plot");
    fs::create_dir_all(&plot)?;
    let mut written = Vec::new();
    for (kind, series) in &summary.series {
        let mut text = String::from("# log_n log_mean n mean stderr\n");
        for r in series.records().iter().filter(|r| r.mean > 0.0) {
            let _ = writeln!(text, "{} {} {} {} {}", r.n.ln(), r.mean.ln(), r.n, r.mean, r.stderr);
        }
        let path = plot.join(format!("{kind}.dat"));
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads the summary in `dir`, writes plot data and returns the table.
pub fn report(dir: &Path) -> Result<String> {
    let summary = load_summary(dir)?;
    write_plot_data(&summary, dir)?;
    Ok(render(&summary))
}
