//! Per-sample observables behind every experiment kind, shared by the command
//! line harness and the acceptance suite.
//!
//! A cell draws `count` samples at one radius from one stream and emits rows
//! `(kind, idx, value)`, where `kind` names the observable and `idx` is the
//! sample index within the cell.

use serde::{Deserialize, Serialize};

use crate::cut_times::cut_indices;
use crate::error::{LabError, Result};
use crate::escape_prob::{escape_fraction, extract_annulus_segment};
use crate::lattice_walk::{default_max_steps, sample_srw_to_exit, Ball, Dim, RngStream};
use crate::loop_erasure::{lerw_into, loop_erase, ErasureState};
use crate::nonintersecting::{
    default_max_attempts, lerw_piece_lengths, nonintersection_indicator, sample_surrogate, PairScratch,
};
use crate::occupancy::PackedSet;
use crate::parallel::sample_blocks_with;
use crate::ust_wilson::{
    enumerate_spanning_trees, lerw_on_graph, tree_path, wilson_sample_with, FiniteGraph, WilsonScratch,
};

/// Samples per parallel block inside a cell.
pub const CELL_BLOCK: usize = 64;

/// `|LE(S[0, ξ_n])|` and the number of cut times of `S[0, ξ_n]`, from one walk.
pub fn walk_observables(ball: &Ball, rng: &mut RngStream) -> Result<(usize, usize)> {
    let path = sample_srw_to_exit(&ball.center(), ball, rng, default_max_steps(ball.radius(), ball.dim()))?;
    Ok((loop_erase(&path).len(), cut_indices(path.sites()).len()))
}

/// What a cell measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Growth { dim: Dim },
    Cutpoints { dim: Dim },
    Escape { dim: Dim, test_walks: usize, inner_ratios: Vec<f64> },
    Nonintersect { dim: Dim },
    Pieces { dim: Dim, truncation_radius: f64 },
    Tails { dim: Dim },
    UstCheck { graph: String, pemantle: Option<(usize, usize)> },
}

/// One observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub kind: String,
    pub idx: u64,
    pub value: f64,
}

/// Encodes a vertex path on a graph with `vertices` vertices as an integer
/// that is exact in an `f64` for the small graphs used here.
pub fn encode_path(path: &[usize], vertices: usize) -> f64 {
    let base = vertices as f64 + 1.0;
    path.iter().rev().fold(0.0, |acc, &v| acc * base + (v as f64 + 1.0))
}

pub fn decode_path(code: f64, vertices: usize) -> Vec<usize> {
    let base = vertices as u64 + 1;
    let mut c = code as u64;
    let mut out = Vec::new();
    while c > 0 {
        out.push((c % base - 1) as usize);
        c /= base;
    }
    out
}

/// Parses `cycle:N`, `path:N` or `grid:RxC`.
pub fn parse_graph(spec: &str) -> Result<FiniteGraph> {
    let bad = || LabError::ConfigInvalid(format!("graph `{spec}`: expected cycle:N, path:N or grid:RxC"));
    let (shape, size) = spec.split_once(':').ok_or_else(bad)?;
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    match shape.trim() {
        "cycle" => FiniteGraph::cycle(num(size)?),
        "path" => FiniteGraph::path(num(size)?),
        "grid" => {
            let (r, c) = size.split_once('x').ok_or_else(bad)?;
            FiniteGraph::grid(num(r)?, num(c)?)
        }
        _ => Err(bad()),
    }
}

/// Largest graph accepted by `ust-check`, so tree enumeration and path
/// encodings stay small.
pub const MAX_UST_VERTICES: usize = 12;

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Growth { .. } => "growth",
            Experiment::Cutpoints { .. } => "cutpoints",
            Experiment::Escape { .. } => "escape",
            Experiment::Nonintersect { .. } => "nonintersect",
            Experiment::Pieces { .. } => "pieces",
            Experiment::Tails { .. } => "tails",
            Experiment::UstCheck { .. } => "ust-check",
        }
    }

    /// Draws `count` samples at radius (or cut count) `n` from `rng`.
    pub fn sample_cell(&self, n: f64, count: usize, rng: &RngStream) -> Result<Vec<Row>> {
        let per_sample: Vec<Vec<(String, f64)>> = match self {
            Experiment::Growth { dim } | Experiment::Tails { dim } => {
                let ball = Ball::centered(*dim, n)?;
                sample_blocks_with(rng, count, CELL_BLOCK, |s, state: &mut ErasureState| {
                    lerw_into(&ball, s, state)?;
                    Ok::<_, LabError>(vec![("lerw_length".to_string(), (state.len() - 1) as f64)])
                })?
            }
            Experiment::Cutpoints { dim } => {
                let ball = Ball::centered(*dim, n)?;
                sample_blocks_with(rng, count, CELL_BLOCK, |s, _: &mut ()| {
                    let (len, cuts) = walk_observables(&ball, s)?;
                    Ok::<_, LabError>(vec![
                        ("cut_points".to_string(), cuts as f64),
                        ("lerw_length".to_string(), len as f64),
                    ])
                })?
            }
            Experiment::Nonintersect { dim } => {
                let ball = Ball::centered(*dim, n)?;
                sample_blocks_with(rng, count, 4 * CELL_BLOCK, |s, scratch: &mut PairScratch| {
                    let hit = nonintersection_indicator(&ball, s, scratch)?;
                    Ok::<_, LabError>(vec![("nonintersect".to_string(), hit as u8 as f64)])
                })?
            }
            Experiment::Escape { dim, test_walks, inner_ratios } => {
                let ball = Ball::centered(*dim, n)?;
                sample_blocks_with(rng, count, 8, |s, state: &mut ErasureState| {
                    lerw_into(&ball, s, state)?;
                    let mut out = vec![
                        ("lerw_length".to_string(), (state.len() - 1) as f64),
                        ("escape".to_string(), escape_fraction(&ball, *test_walks, s, |k| state.contains(k))?),
                    ];
                    let lerw = state.to_simple_path(*dim);
                    for &ratio in inner_ratios {
                        let seg = extract_annulus_segment(&lerw, n / ratio, n)?;
                        let obstacle: PackedSet = seg.segment.sites().iter().map(|s| s.0).collect();
                        let f = escape_fraction(&ball, *test_walks, s, |k| obstacle.contains(k))?;
                        out.push((annulus_kind(ratio), f));
                    }
                    Ok::<_, LabError>(out)
                })?
            }
            Experiment::Pieces { dim, truncation_radius } => {
                let target = n as usize;
                let budget = default_max_attempts(*truncation_radius);
                sample_blocks_with(rng, count, 1, |s, _: &mut ()| {
                    let surrogate = sample_surrogate(*dim, *truncation_radius, s, budget)?;
                    Ok::<_, LabError>(match lerw_piece_lengths(&surrogate, &[target])[0] {
                        Some(l) => vec![("piece_length".to_string(), l as f64), ("shortfall".to_string(), 0.0)],
                        None => vec![("shortfall".to_string(), 1.0)],
                    })
                })?
            }
            Experiment::UstCheck { graph, pemantle } => {
                let g = parse_graph(graph)?;
                let v = g.vertex_count();
                let index: std::collections::HashMap<Vec<(usize, usize)>, usize> =
                    enumerate_spanning_trees(&g).into_iter().enumerate().map(|(i, t)| (t, i)).collect();
                sample_blocks_with(rng, count, 256, |s, scratch: &mut WilsonScratch| {
                    let tree = wilson_sample_with(&g, 0, s, scratch)?;
                    let mut out = vec![("tree_index".to_string(), index[tree.edges()] as f64)];
                    if let Some((a, b)) = *pemantle {
                        out.push(("tree_path".to_string(), encode_path(&tree_path(&tree, a, b)?, v)));
                        out.push(("lerw_path".to_string(), encode_path(&lerw_on_graph(&g, a, b, s)?, v)));
                    }
                    Ok::<_, LabError>(out)
                })?
            }
        };
        Ok(per_sample
            .into_iter()
            .enumerate()
            .flat_map(|(i, rows)| {
                rows.into_iter().map(move |(kind, value)| Row { kind, idx: i as u64, value })
            })
            .collect())
    }
}

pub fn annulus_kind(ratio: f64) -> String {
    format!("escape_annulus_{ratio}")
}
