//! Pairs of walks from the origin that do not intersect before leaving a ball.
//!
//! Event `A_n`: `S¹[0, ξ¹(n)] ∩ S²[1, ξ²(n)] = ∅`. The sampler grows both
//! walks in lockstep and rejects at the first collision, so failed attempts
//! cost only as many steps as it took to collide. Accepted pairs at a large
//! truncation radius stand in for the two-sided non-intersecting walk: the
//! first walk, reversed, is the past and the second is the future, joined at
//! the origin.

use serde::{Deserialize, Serialize};

use crate::cut_times::cut_indices;
use crate::error::{LabError, Result};
use crate::estimators::EstimateRecord;
use crate::lattice_walk::{
    default_max_steps, Ball, Dim, LatticePath, RngStream, Site, Walker,
};
use crate::loop_erasure::ErasureState;
use crate::occupancy::PackedSet;
use crate::parallel::sample_blocks_with;

/// Ratio of surrogate truncation radius to the largest radius of interest.
pub const DEFAULT_TRUNCATION_FACTOR: f64 = 8.0;

/// Default rejection budget, `10^4 n^1.5`.
pub fn default_max_attempts(radius: f64) -> u64 {
    (1e4 * radius.max(1.0).powf(1.5)).ceil() as u64
}

#[derive(Clone, Debug)]
pub struct WalkPairSample {
    pub walk1: LatticePath,
    pub walk2: LatticePath,
    pub radius: f64,
    pub accepted: bool,
    /// Attempts used, including the accepted one.
    pub attempts: u64,
}

impl WalkPairSample {
    /// Re-checks the acceptance predicate by direct set intersection.
    pub fn check_disjoint(&self) -> bool {
        let first: std::collections::HashSet<_> = self.walk1.sites().iter().collect();
        self.walk2.sites()[1..].iter().all(|s| !first.contains(s))
    }
}

/// Reusable hash sets for pair attempts.
#[derive(Default)]
pub struct PairScratch {
    first: PackedSet,
    second: PackedSet,
}

/// One lockstep attempt. With `record`, the visited sites are kept in `paths`.
fn attempt(
    ball: &Ball,
    rng: &mut RngStream,
    scratch: &mut PairScratch,
    mut paths: Option<&mut (Vec<Site>, Vec<Site>)>,
) -> Result<bool> {
    let origin = ball.center();
    let max_steps = default_max_steps(ball.radius(), ball.dim());
    let PairScratch { first, second } = scratch;
    first.clear();
    second.clear();
    let mut w1 = Walker::new(&origin, ball);
    let mut w2 = Walker::new(&origin, ball);
    first.insert(w1.site().0);
    if let Some(p) = paths.as_deref_mut() {
        p.0.clear();
        p.1.clear();
        p.0.push(w1.site());
        p.1.push(w2.site());
    }
    let (mut done1, mut done2) = (w1.outside(), w2.outside());
    let mut steps = 0usize;
    while !(done1 && done2) {
        steps += 1;
        if steps > max_steps {
            return Err(LabError::MaxStepsExceeded { max_steps });
        }
        if !done1 {
            let s = w1.step(rng);
            if second.contains(s.0) {
                return Ok(false);
            }
            first.insert(s.0);
            if let Some(p) = paths.as_deref_mut() {
                p.0.push(s);
            }
            done1 = w1.outside();
        }
        if !done2 {
            let s = w2.step(rng);
            if first.contains(s.0) {
                return Ok(false);
            }
            second.insert(s.0);
            if let Some(p) = paths.as_deref_mut() {
                p.1.push(s);
            }
            done2 = w2.outside();
        }
    }
    Ok(true)
}

/// Indicator of `A_n` for one fresh pair of walks.
pub fn nonintersection_indicator(
    ball: &Ball,
    rng: &mut RngStream,
    scratch: &mut PairScratch,
) -> Result<bool> {
    attempt(ball, rng, scratch, None)
}

/// Draws pairs until one satisfies `A_radius`.
pub fn sample_pair_conditioned(
    dim: Dim,
    radius: f64,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<WalkPairSample> {
    if radius < 1.0 {
        return Err(LabError::InvalidRadius(radius));
    }
    let ball = Ball::centered(dim, radius)?;
    let mut scratch = PairScratch::default();
    let mut paths = (Vec::new(), Vec::new());
    for attempts in 1..=max_attempts {
        if attempt(&ball, rng, &mut scratch, Some(&mut paths))? {
            let (a, b) = std::mem::take(&mut paths);
            return Ok(WalkPairSample {
                walk1: LatticePath::from_sites_unchecked(a, dim),
                walk2: LatticePath::from_sites_unchecked(b, dim),
                radius,
                accepted: true,
                attempts,
            });
        }
    }
    Err(LabError::AttemptsExhausted {
        attempts: max_attempts,
        radius,
    })
}

/// Monte Carlo estimate of `P(A_n)` from `attempts` independent pairs.
pub fn estimate_nonintersection(
    dim: Dim,
    radius: f64,
    attempts: usize,
    rng: &RngStream,
) -> Result<EstimateRecord> {
    let ball = Ball::centered(dim, radius)?;
    let hits = sample_blocks_with(rng, attempts, 4096, |s, scratch: &mut PairScratch| {
        nonintersection_indicator(&ball, s, scratch)
    })?;
    let successes = hits.iter().filter(|&&h| h).count() as u64;
    Ok(EstimateRecord::from_bernoulli(radius, successes, attempts as u64))
}

/// Truncated two-sided walk built from a pair accepted at `truncation_radius`.
#[derive(Clone, Debug)]
pub struct TwoSidedSurrogate {
    pub backward: LatticePath,
    pub forward: LatticePath,
    pub truncation_radius: f64,
    pub global_cut_indices: Vec<usize>,
}

impl TwoSidedSurrogate {
    pub fn from_pair(pair: WalkPairSample) -> Result<Self> {
        if !pair.accepted {
            return Err(LabError::ConfigInvalid("surrogate needs an accepted pair".into()));
        }
        let mut s = Self {
            backward: pair.walk1,
            forward: pair.walk2,
            truncation_radius: pair.radius,
            global_cut_indices: Vec::new(),
        };
        s.global_cut_indices = global_cut_indices(&s);
        Ok(s)
    }

    /// Reversed backward walk followed by the forward walk, sharing the origin.
    pub fn joined_sites(&self) -> Vec<Site> {
        let mut joined: Vec<Site> = self.backward.sites().iter().rev().copied().collect();
        joined.extend_from_slice(&self.forward.sites()[1..]);
        joined
    }

    /// Global cut indices strictly before the truncation end of the forward walk.
    pub fn interior_cut_indices(&self) -> &[usize] {
        let end = self.forward.len();
        let k = self.global_cut_indices.partition_point(|&j| j < end);
        &self.global_cut_indices[..k]
    }
}

pub fn sample_surrogate(
    dim: Dim,
    truncation_radius: f64,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<TwoSidedSurrogate> {
    TwoSidedSurrogate::from_pair(sample_pair_conditioned(dim, truncation_radius, rng, max_attempts)?)
}

/// Indices `j` of the forward walk with
/// `(backward ∪ forward[0, j]) ∩ forward[j+1, end] = ∅`.
///
/// The terminal index is listed as well; its condition is vacuous.
pub fn global_cut_indices(sample: &TwoSidedSurrogate) -> Vec<usize> {
    let offset = sample.backward.len();
    let mut out: Vec<usize> = cut_indices(&sample.joined_sites())
        .into_iter()
        .filter(|&k| k >= offset)
        .map(|k| k - offset)
        .collect();
    out.push(sample.forward.len());
    out
}

/// `|LE(forward[0, T̄_n])|` for each requested `n`, `None` where fewer than
/// `n + 1` interior global cut indices exist. `T̄_0 = 0`.
pub fn lerw_piece_lengths(sample: &TwoSidedSurrogate, counts: &[usize]) -> Vec<Option<usize>> {
    let cuts = sample.interior_cut_indices();
    let targets: Vec<Option<usize>> = counts.iter().map(|&n| cuts.get(n).copied()).collect();
    let last = targets.iter().flatten().copied().max();
    let mut lengths_at = std::collections::HashMap::new();
    if let Some(last) = last {
        let mut state = ErasureState::new();
        let wanted: std::collections::HashSet<usize> = targets.iter().flatten().copied().collect();
        for (j, s) in sample.forward.sites()[..=last].iter().enumerate() {
            state.push_key(s.0);
            if wanted.contains(&j) {
                lengths_at.insert(j, state.len() - 1);
            }
        }
    }
    targets
        .into_iter()
        .map(|t| t.map(|j| lengths_at[&j]))
        .collect()
}

/// `|LE(S̄[0, T̄_n])|` for one surrogate sampled at `truncation_radius`.
pub fn sample_lerw_pieces(
    dim: Dim,
    n: usize,
    truncation_radius: f64,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<usize> {
    let s = sample_surrogate(dim, truncation_radius, rng, max_attempts)?;
    lerw_piece_lengths(&s, &[n])[0].ok_or(LabError::PieceShortfall {
        needed: n + 1,
        found: s.interior_cut_indices().len(),
    })
}

/// Separation event at scale `l`: up to its exit of `B(2l)` the first walk
/// stays in `B(3l/2) ∪ {x₁ >= 4l/3}` and the second in `B(3l/2) ∪ {x₁ <= -4l/3}`.
pub fn separation_indicator(sample: &WalkPairSample, l: f64) -> Result<bool> {
    let inner2 = (1.5 * l) * (1.5 * l);
    let sleeve = 4.0 * l / 3.0;
    let outer = Ball::centered(sample.walk1.dim(), 2.0 * l)?;
    let stays = |walk: &LatticePath, sign: f64| -> Result<bool> {
        let exit = crate::lattice_walk::exit_time(walk, &outer)?;
        Ok(walk.sites()[..=exit].iter().all(|s| {
            (s.norm2() as f64) < inner2 || sign * s.coord(0) as f64 >= sleeve
        }))
    };
    Ok(stays(&sample.walk1, 1.0)? && stays(&sample.walk2, -1.0)?)
}

/// Ratio of `P(A_n)` to the exponent-predicted `P(A_m) (n/m)^slope`, for all `m < n` pairs.
pub fn submultiplicative_ratios(records: &[EstimateRecord], slope: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            out.push((a.n, b.n, b.mean / (a.mean * (b.n / a.n).powf(slope))));
        }
    }
    out
}

/// Summary of a batch of surrogates at one truncation radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceBatch {
    pub counts: Vec<usize>,
    /// `lengths[i]` holds the lengths for `counts[i]`, shortfalls excluded.
    pub lengths: Vec<Vec<f64>>,
    pub shortfall_rate: Vec<f64>,
    pub samples: usize,
}

/// Samples `samples` surrogates and collects piece lengths for every count.
pub fn sample_piece_batch(
    dim: Dim,
    counts: &[usize],
    truncation_radius: f64,
    samples: usize,
    rng: &RngStream,
) -> Result<PieceBatch> {
    let budget = default_max_attempts(truncation_radius);
    let per = sample_blocks_with(rng, samples, 1, |s, _: &mut ()| {
        let surrogate = sample_surrogate(dim, truncation_radius, s, budget)?;
        Ok::<_, LabError>(lerw_piece_lengths(&surrogate, counts))
    })?;
    let mut lengths = vec![Vec::new(); counts.len()];
    let mut shortfalls = vec![0usize; counts.len()];
    for row in &per {
        for (i, v) in row.iter().enumerate() {
            match v {
                Some(l) => lengths[i].push(*l as f64),
                None => shortfalls[i] += 1,
            }
        }
    }
    Ok(PieceBatch {
        counts: counts.to_vec(),
        lengths,
        shortfall_rate: shortfalls.iter().map(|&c| c as f64 / samples as f64).collect(),
        samples,
    })
}
