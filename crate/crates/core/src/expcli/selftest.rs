//! Quick built-in checks of the sampling stack and the run pipeline.

use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use super::run::{resume, run_experiment, RunOptions, MANIFEST_FILE, SAMPLES_FILE, SUMMARY_FILE};
use crate::cut_times::cut_indices;
use crate::error::{LabError, Result};
use crate::escape_prob::estimate_es;
use crate::graph_metrics::{build_trace_graph, effective_resistance, DEFAULT_TOLERANCE};
use crate::lattice_walk::{derive_stream, Dim, LatticePath, LatticePoint, Site};
use crate::loop_erasure::{loop_erase, ErasureState};
use crate::ust_wilson::{uniformity_test, FiniteGraph};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_walk(dim: Dim, steps: usize, id: u64) -> Vec<Site> {
    let mut rng = derive_stream(0x5E1F, id);
    let mut sites = vec![LatticePoint::origin(dim).site()];
    for _ in 0..steps {
        let d = rng.below_small(dim.degree());
        sites.push(sites.last().expect("nonempty").neighbor(d));
    }
    sites
}

fn erasure_agrees() -> Check {
    let mut bad = 0;
    for id in 0..400u64 {
        let dim = if id % 2 == 0 { Dim::Two } else { Dim::Three };
        let sites = random_walk(dim, 1 + (id as usize * 7) % 200, id);
        let mut state = ErasureState::new();
        sites.iter().for_each(|s| {
            state.push_key(s.0);
        });
        let batch = loop_erase(&LatticePath::from_sites_unchecked(sites, dim));
        if batch.sites().iter().map(|s| s.0).collect::<Vec<_>>() != state.keys() {
            bad += 1;
        }
    }
    Check { name: "streaming and batch loop erasure agree", passed: bad == 0, detail: format!("{bad} of 400 differ") }
}

fn cut_sweep_agrees() -> Check {
    let mut bad = 0;
    for id in 0..200u64 {
        let sites = random_walk(Dim::Two, 1 + id as usize % 120, 1000 + id);
        let brute: Vec<usize> = (0..sites.len() - 1)
            .filter(|&k| sites[..=k].iter().all(|a| !sites[k + 1..].contains(a)))
            .collect();
        if brute != cut_indices(&sites) {
            bad += 1;
        }
    }
    Check { name: "cut-time sweep matches brute force", passed: bad == 0, detail: format!("{bad} of 200 differ") }
}

fn resistance_of_path() -> Result<Check> {
    let pts: Vec<[i32; 2]> = (0..=10).map(|x| [x, 0]).collect();
    let g = build_trace_graph(&LatticePath::from_coords(&pts)?);
    let r = effective_resistance(&g, 0, 10, DEFAULT_TOLERANCE)?.value;
    Ok(Check { name: "path graph resistance equals length", passed: (r - 10.0).abs() < 1e-9, detail: format!("R = {r}") })
}

fn wilson_uniform() -> Result<Check> {
    let r = uniformity_test(&FiniteGraph::cycle(4)?, 20_000, &derive_stream(0x5E1F, 1))?;
    Ok(Check { name: "Wilson trees uniform on the 4-cycle", passed: r.p_value > 0.001, detail: format!("p = {:.4}", r.p_value) })
}

fn escape_radius_one() -> Result<Check> {
    let r = estimate_es(Dim::Three, 1.0, 2000, &derive_stream(0x5E1F, 2))?;
    let ok = (r.mean - 5.0 / 6.0).abs() < 0.02;
    Ok(Check { name: "escape probability at radius 1 is 5/6", passed: ok, detail: format!("{:.4}", r.mean) })
}

fn outputs(dir: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    Ok((fs::read(dir.join(SAMPLES_FILE))?, fs::read(dir.join(SUMMARY_FILE))?))
}

fn pipeline_is_deterministic(scratch: &Path) -> Result<Check> {
    let cfg = ExperimentConfig::from_toml(
        "schema_version = 1\nkind = \"cutpoints\"\ndim = 2\nradii = [4, 8]\nsamples = 40\nseed = 11\nchains = 3\n",
    )?;
    let (a, b) = (scratch.join("a"), scratch.join("b"));
    run_experiment(&cfg, &a, RunOptions::default())?;
    match run_experiment(&cfg, &b, RunOptions { max_cells: Some(2) }) {
        Err(LabError::Interrupted { .. }) => {}
        other => return Ok(Check { name: "run, interrupt and resume are deterministic", passed: false, detail: format!("expected an interruption, got {other:?}") }),
    }
    resume(&b.join(MANIFEST_FILE), Some(&cfg), RunOptions::default())?;
    let same = outputs(&a)? == outputs(&b)?;
    Ok(Check {
        name: "run, interrupt and resume are deterministic",
        passed: same,
        detail: if same { "byte-identical".into() } else { "outputs differ".into() },
    })
}

/// Runs every check; `scratch` receives two small run directories.
pub fn selftest(scratch: &Path) -> Result<Vec<Check>> {
    fs::create_dir_all(scratch)?;
    let checks = vec![
        erasure_agrees(),
        cut_sweep_agrees(),
        resistance_of_path()?,
        wilson_uniform()?,
        escape_radius_one()?,
        pipeline_is_deterministic(scratch)?,
    ];
    Ok(checks)
}
