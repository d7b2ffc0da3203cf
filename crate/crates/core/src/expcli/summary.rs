//! `summary.json`: estimate series, exponent fits and kind-specific checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Kind};
use super::run::Storage;
use crate::error::Result;
use crate::estimators::{
    chi_square_uniform, fit_exponent, fit_exponent_raw, fit_upper_tail, span, Center, EstimateSeries, ExponentFit,
    RunningMoments, SampleSet, TailFit, DEFAULT_RESAMPLES, MIN_TAIL_SAMPLES,
};
use crate::experiments::{annulus_kind, parse_graph};
use crate::ust_wilson::spanning_tree_count;

pub const SUMMARY_VERSION: u32 = 1;

/// Above this many values a fit bootstraps per-n means instead of samples.
pub const RAW_BOOTSTRAP_LIMIT: usize = 1_000_000;

/// Everything known about one observable at one radius.
#[derive(Clone, Debug, Default)]
pub struct Column {
    pub moments: RunningMoments,
    /// All values (raw storage) or the reservoir (streaming storage).
    pub values: Vec<f64>,
    pub histogram: Option<BTreeMap<String, u64>>,
    /// `values` holds every sample.
    pub exact: bool,
}

impl Column {
    fn histogram(&self) -> BTreeMap<String, u64> {
        match (&self.histogram, self.exact) {
            (Some(h), false) => h.clone(),
            _ => {
                let mut h = BTreeMap::new();
                for v in &self.values {
                    *h.entry(v.to_string()).or_default() += 1;
                }
                h
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub summary_version: u32,
    pub experiment: String,
    pub kind: Kind,
    pub dim: u8,
    pub storage: Storage,
    /// Mean and standard error per radius, one series per observable.
    pub series: BTreeMap<String, EstimateSeries>,
    /// Power-law fits of the means.
    pub fits: BTreeMap<String, ExponentFit>,
    /// Power-law fits of the medians, where reported.
    pub median_fits: BTreeMap<String, ExponentFit>,
    /// Scalar diagnostics, keyed by name.
    pub checks: BTreeMap<String, f64>,
    /// Upper-tail fits keyed by radius.
    pub tails: BTreeMap<String, TailFit>,
    pub notes: Vec<String>,
}

const CATEGORICAL: [&str; 3] = ["tree_index", "tree_path", "lerw_path"];
const UNFITTED: [&str; 1] = ["shortfall"];

fn tv_distance(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> f64 {
    let (na, nb) = (a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64);
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (*a.get(k).unwrap_or(&0) as f64 / na - *b.get(k).unwrap_or(&0) as f64 / nb).abs())
        .sum::<f64>()
}

pub fn summarize(
    cfg: &ExperimentConfig,
    storage: Storage,
    grid: &[f64],
    columns: &[BTreeMap<String, Column>],
) -> Result<Summary> {
    let mut s = Summary {
        summary_version: SUMMARY_VERSION,
        experiment: cfg.name(),
        kind: cfg.kind,
        dim: cfg.dim,
        storage,
        series: BTreeMap::new(),
        fits: BTreeMap::new(),
        median_fits: BTreeMap::new(),
        checks: BTreeMap::new(),
        tails: BTreeMap::new(),
        notes: Vec::new(),
    };
    let mut kinds: Vec<&String> = columns.iter().flat_map(|c| c.keys()).collect();
    kinds.sort();
    kinds.dedup();

    for kind in kinds.iter().filter(|k| !CATEGORICAL.contains(&k.as_str())) {
        let present: Vec<(f64, &Column)> = grid
            .iter()
            .zip(columns)
            .filter_map(|(&n, c)| c.get(*kind).filter(|col| col.moments.count > 0).map(|col| (n, col)))
            .collect();
        let series = EstimateSeries::new(present.iter().map(|(n, c)| c.moments.record(*n)).collect())?;
        if UNFITTED.contains(&kind.as_str()) || present.len() < 2 {
            s.series.insert(kind.to_string(), series);
            continue;
        }
        let exact = present.iter().all(|(_, c)| c.exact);
        let total: usize = present.iter().map(|(_, c)| c.values.len()).sum();
        let fit = if exact && total <= RAW_BOOTSTRAP_LIMIT {
            let sets: Vec<SampleSet> =
                present.iter().map(|(n, c)| SampleSet { n: *n, values: c.values.clone() }).collect();
            fit_exponent_raw(&sets, Center::Mean)
        } else {
            fit_exponent(&series)
        };
        match fit {
            Ok(f) => {
                s.fits.insert(kind.to_string(), f);
            }
            Err(e) => s.notes.push(format!("{kind}: no fit ({e})")),
        }
        if cfg.kind == Kind::Pieces && kind.as_str() == "piece_length" {
            let sets: Vec<SampleSet> =
                present.iter().map(|(n, c)| SampleSet { n: *n, values: c.values.clone() }).collect();
            match fit_exponent_raw(&sets, Center::Median) {
                Ok(f) => {
                    s.median_fits.insert(kind.to_string(), f);
                }
                Err(e) => s.notes.push(format!("{kind}: no median fit ({e})")),
            }
        }
        s.series.insert(kind.to_string(), series);
    }

    match cfg.kind {
        Kind::Escape => escape_checks(cfg, &mut s),
        Kind::UstCheck => ust_checks(cfg, columns, &mut s)?,
        Kind::Tails => {
            for (&n, cols) in grid.iter().zip(columns) {
                let Some(col) = cols.get("lerw_length") else { continue };
                if col.values.len() < MIN_TAIL_SAMPLES {
                    s.notes.push(format!("tails at n={n}: fewer than {MIN_TAIL_SAMPLES} samples"));
                    continue;
                }
                match fit_upper_tail(&col.values, &cfg.thresholds, DEFAULT_RESAMPLES) {
                    Ok(t) => {
                        s.tails.insert(n.to_string(), t);
                    }
                    Err(e) => s.notes.push(format!("tails at n={n}: {e}")),
                }
            }
        }
        _ => {}
    }
    if storage == Storage::Streaming {
        s.notes.push("streaming storage: medians and tails use the reservoir subsample".into());
    }
    Ok(s)
}

fn escape_checks(cfg: &ExperimentConfig, s: &mut Summary) {
    let (Some(len), Some(es)) = (s.series.get("lerw_length"), s.series.get("escape")) else {
        return;
    };
    let mut moment = Vec::new();
    for r in len.records() {
        if let Some(e) = es.at(r.n) {
            let ratio = r.mean / (r.n * r.n * e.mean);
            s.checks.insert(format!("moment_ratio/n={}", r.n), ratio);
            moment.push(ratio);
        }
    }
    if moment.len() > 1 {
        if let Ok(v) = span(&moment) {
            s.checks.insert("moment_ratio_span".into(), v);
        }
    }
    let mut sandwich = Vec::new();
    for &ratio in &cfg.inner_ratios {
        let Some(ann) = s.series.get(&annulus_kind(ratio)) else { continue };
        for r in ann.records() {
            let m = r.n / ratio;
            if let (Some(es_n), Some(es_m)) = (es.at(r.n), es.at(m)) {
                let v = es_n.mean / (es_m.mean * r.mean);
                s.checks.insert(format!("sandwich/m={m},n={}", r.n), v);
                sandwich.push(v);
            }
        }
    }
    if sandwich.len() > 1 {
        if let Ok(v) = span(&sandwich) {
            s.checks.insert("sandwich_span".into(), v);
        }
    }
}

fn ust_checks(cfg: &ExperimentConfig, columns: &[BTreeMap<String, Column>], s: &mut Summary) -> Result<()> {
    let g = parse_graph(cfg.graph.as_deref().unwrap_or(""))?;
    let trees = spanning_tree_count(&g);
    let Some(cols) = columns.first() else { return Ok(()) };
    if let Some(col) = cols.get("tree_index") {
        let h = col.histogram();
        let counts: Vec<u64> = (0..trees).map(|i| *h.get(&i.to_string()).unwrap_or(&0)).collect();
        let (chi, p) = chi_square_uniform(&counts);
        s.checks.insert("tree_count".into(), trees as f64);
        s.checks.insert("chi_square".into(), chi);
        s.checks.insert("chi_square_p".into(), p);
    }
    if let (Some(t), Some(l)) = (cols.get("tree_path"), cols.get("lerw_path")) {
        s.checks.insert("pemantle_tv".into(), tv_distance(&t.histogram(), &l.histogram()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_histograms() {
        let a: BTreeMap<String, u64> = [("x".to_string(), 3), ("y".to_string(), 1)].into();
        let b: BTreeMap<String, u64> = [("x".to_string(), 1), ("z".to_string(), 1)].into();
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert!((tv_distance(&a, &b) - 0.5).abs() < 1e-12);
    }
}
