//! Escape probabilities of a simple random walk from an independent
//! loop-erased walk.
//!
//! * `Es(n)`: a walk from the origin avoids `LE(S[0, ξ_n])` on `S[1, ξ(n)]`.
//! * `Es(m, n)`: the same, with the obstacle cut down to its last crossing
//!   from `B(m)` to `∂B(n)`.
//! * `Es♦(n)`: the obstacle is the infinite loop-erased walk up to its exit of
//!   `B(n)`, approximated by erasing a walk run to radius `R n`.
//!
//! Each loop-erased walk is reused against several independent test walks;
//! per-obstacle escape fractions are the independent units, and their mean
//! carries a delete-one-obstacle jackknife standard error.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimators::{jackknife_mean, EstimateRecord, EstimateSeries};
use crate::lattice_walk::{
    default_max_steps, Ball, Dim, LatticePath, LatticePoint, RngStream, Site, Walker,
};
use crate::loop_erasure::{lerw_into, lerw_to_exit, ErasureState, SimplePath};
use crate::occupancy::PackedSet;
use crate::parallel::sample_blocks_with;

pub const DEFAULT_TEST_WALKS: usize = 16;
pub const DEFAULT_SURROGATE_FACTOR: f64 = 8.0;

/// One loop-erased obstacle and one test walk against it.
#[derive(Clone, Debug)]
pub struct EscapeSample {
    pub lerw: SimplePath,
    pub walk: LatticePath,
    pub escaped: bool,
}

/// `η²_{m,n}(λ) = λ[s, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusSegment {
    pub segment: SimplePath,
    /// `s`: last index at or before `t` inside `B(m)`.
    pub start: usize,
    /// `t`: first index on `∂B(n)`.
    pub end: usize,
}

/// Runs a walk from the origin to its exit of `ball` and reports whether
/// `S[1, ξ]` avoids every site for which `blocked` is true. Stops at the
/// first hit.
pub fn test_walk_escapes(
    ball: &Ball,
    rng: &mut RngStream,
    mut blocked: impl FnMut(u64) -> bool,
) -> Result<bool> {
    let max_steps = default_max_steps(ball.radius(), ball.dim());
    let mut walker = Walker::new(&ball.center(), ball);
    let mut steps = 0;
    while !walker.outside() {
        steps += 1;
        if steps > max_steps {
            return Err(LabError::MaxStepsExceeded { max_steps });
        }
        if blocked(walker.step(rng).0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One obstacle `LE(S[0, ξ_n])` with one recorded test walk.
pub fn sample_escape(dim: Dim, n: f64, rng: &mut RngStream) -> Result<EscapeSample> {
    let ball = Ball::centered(dim, n)?;
    let lerw = lerw_to_exit(&ball, rng)?;
    let obstacle: PackedSet = lerw.sites().iter().map(|s| s.0).collect();
    let walk = crate::lattice_walk::sample_srw_to_exit(
        &LatticePoint::origin(dim),
        &ball,
        rng,
        default_max_steps(n, dim),
    )?;
    let escaped = walk.sites()[1..].iter().all(|s| !obstacle.contains(s.0));
    Ok(EscapeSample {
        lerw,
        walk,
        escaped,
    })
}

/// Cuts `lerw` to `λ[s, t]` with `t` its first index outside `B(n)` and `s`
/// the last index at or before `t` inside `B(m)`.
pub fn extract_annulus_segment(lerw: &SimplePath, m: f64, n: f64) -> Result<AnnulusSegment> {
    if !(m > 0.0 && m <= n) {
        return Err(LabError::NoCrossing { m, n });
    }
    let dim = lerw.dim();
    let inner = Ball::centered(dim, m)?;
    let outer = Ball::centered(dim, n)?;
    let sites = lerw.sites();
    let end = sites
        .iter()
        .position(|&s| !outer.contains_site(s))
        .ok_or(LabError::NoCrossing { m, n })?;
    let start = sites[..=end]
        .iter()
        .rposition(|&s| inner.contains_site(s))
        .ok_or(LabError::NoCrossing { m, n })?;
    Ok(AnnulusSegment {
        segment: lerw.slice(start, end),
        start,
        end,
    })
}

/// Knobs shared by the escape estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeOptions {
    /// Independent test walks per obstacle.
    pub test_walks: usize,
    /// `R` in the `LE(S[0, ξ_{R n}])` stand-in for the infinite loop-erased walk.
    pub surrogate_factor: f64,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        Self {
            test_walks: DEFAULT_TEST_WALKS,
            surrogate_factor: DEFAULT_SURROGATE_FACTOR,
        }
    }
}

fn record_from_fractions(n: f64, fractions: &[f64]) -> EstimateRecord {
    let (mean, stderr) = jackknife_mean(fractions);
    EstimateRecord {
        n,
        mean,
        stderr,
        count: fractions.len() as u64,
    }
}

/// Fraction of `walks` independent walks from the centre of `ball` that
/// escape the obstacle `blocked`.
pub fn escape_fraction(
    ball: &Ball,
    walks: usize,
    rng: &mut RngStream,
    blocked: impl Fn(u64) -> bool,
) -> Result<f64> {
    let mut escaped = 0usize;
    for _ in 0..walks {
        if test_walk_escapes(ball, rng, &blocked)? {
            escaped += 1;
        }
    }
    Ok(escaped as f64 / walks as f64)
}

/// Per-obstacle escape fractions for `Es(n)`.
pub fn es_fractions(
    dim: Dim,
    n: f64,
    samples: usize,
    options: EscapeOptions,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let ball = Ball::centered(dim, n)?;
    sample_blocks_with(rng, samples, 8, |s, state: &mut ErasureState| {
        lerw_into(&ball, s, state)?;
        escape_fraction(&ball, options.test_walks, s, |k| state.contains(k))
    })
}

pub fn estimate_es(dim: Dim, n: f64, samples: usize, rng: &RngStream) -> Result<EstimateRecord> {
    estimate_es_with(dim, n, samples, EscapeOptions::default(), rng)
}

pub fn estimate_es_with(
    dim: Dim,
    n: f64,
    samples: usize,
    options: EscapeOptions,
    rng: &RngStream,
) -> Result<EstimateRecord> {
    Ok(record_from_fractions(n, &es_fractions(dim, n, samples, options, rng)?))
}

pub fn estimate_es_annulus(
    dim: Dim,
    m: f64,
    n: f64,
    samples: usize,
    rng: &RngStream,
) -> Result<EstimateRecord> {
    let profile = escape_profile(dim, n, &[m], samples, EscapeOptions::default(), rng)?;
    Ok(record_from_fractions(n, &profile.annulus[0].1))
}

/// `Es♦(n)` with the infinite loop-erased walk replaced by `LE(S[0, ξ_{R n}])`
/// cut at its first exit of `B(n)`.
pub fn estimate_es_diamond(
    dim: Dim,
    n: f64,
    samples: usize,
    options: EscapeOptions,
    rng: &RngStream,
) -> Result<EstimateRecord> {
    let big = Ball::centered(dim, options.surrogate_factor * n)?;
    let ball = Ball::centered(dim, n)?;
    let fractions = sample_blocks_with(rng, samples, 8, |s, state: &mut ErasureState| {
        lerw_into(&big, s, state)?;
        let cut = state
            .keys()
            .iter()
            .position(|&k| !ball.contains_site(Site(k)))
            .ok_or(LabError::NoCrossing { m: n, n: n * options.surrogate_factor })?;
        let obstacle: PackedSet = state.keys()[..=cut].iter().copied().collect();
        escape_fraction(&ball, options.test_walks, s, |k| obstacle.contains(k))
    })?;
    Ok(record_from_fractions(n, &fractions))
}

/// Everything measured on a shared batch of obstacles at radius `n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeProfile {
    pub n: f64,
    /// `M_n = |LE(S[0, ξ_n])|` per obstacle.
    pub lerw_lengths: Vec<f64>,
    /// `Es(n)` escape fraction per obstacle.
    pub es: Vec<f64>,
    /// `(m, per-obstacle Es(m, n) fractions)`.
    pub annulus: Vec<(f64, Vec<f64>)>,
}

impl EscapeProfile {
    pub fn es_record(&self) -> EstimateRecord {
        record_from_fractions(self.n, &self.es)
    }

    pub fn growth_record(&self) -> EstimateRecord {
        EstimateRecord::from_samples(self.n, &self.lerw_lengths)
    }

    pub fn annulus_record(&self, m: f64) -> Option<EstimateRecord> {
        self.annulus
            .iter()
            .find(|(mm, _)| *mm == m)
            .map(|(_, f)| record_from_fractions(self.n, f))
    }
}

/// Samples obstacles at radius `n` and measures `M_n`, `Es(n)` and `Es(m, n)`
/// for every `m` in `inner_radii`, all on the same obstacles.
pub fn escape_profile(
    dim: Dim,
    n: f64,
    inner_radii: &[f64],
    samples: usize,
    options: EscapeOptions,
    rng: &RngStream,
) -> Result<EscapeProfile> {
    let ball = Ball::centered(dim, n)?;
    let rows = sample_blocks_with(rng, samples, 8, |s, state: &mut ErasureState| {
        lerw_into(&ball, s, state)?;
        let length = (state.len() - 1) as f64;
        let es = escape_fraction(&ball, options.test_walks, s, |k| state.contains(k))?;
        let lerw = state.to_simple_path(dim);
        let mut ann = Vec::with_capacity(inner_radii.len());
        for &m in inner_radii {
            let seg = extract_annulus_segment(&lerw, m, n)?;
            let obstacle: PackedSet = seg.segment.sites().iter().map(|s| s.0).collect();
            ann.push(escape_fraction(&ball, options.test_walks, s, |k| obstacle.contains(k))?);
        }
        Ok::<_, LabError>((length, es, ann))
    })?;
    let mut profile = EscapeProfile {
        n,
        lerw_lengths: Vec::with_capacity(samples),
        es: Vec::with_capacity(samples),
        annulus: inner_radii.iter().map(|&m| (m, Vec::with_capacity(samples))).collect(),
    };
    for (len, es, ann) in rows {
        profile.lerw_lengths.push(len);
        profile.es.push(es);
        for (slot, f) in profile.annulus.iter_mut().zip(ann) {
            slot.1.push(f);
        }
    }
    Ok(profile)
}

/// `Σ_{j=1}^{n} j Es(j) / (n² Es(n))`, with `Es` interpolated log-linearly
/// between the grid points of `estimates`.
pub fn weighted_sum_check(n: usize, estimates: &EstimateSeries) -> Result<f64> {
    let recs = estimates.records();
    let covered = recs.first().is_some_and(|r| r.n <= 1.0)
        && recs.last().is_some_and(|r| r.n >= n as f64)
        && recs.iter().all(|r| r.mean > 0.0);
    if !covered || n == 0 {
        return Err(LabError::InsufficientGrid(n));
    }
    let interp = |j: f64| -> f64 {
        let k = recs.partition_point(|r| r.n < j);
        if recs[k].n == j || k == 0 {
            return recs[k].mean;
        }
        let (a, b) = (&recs[k - 1], &recs[k]);
        let w = (j.ln() - a.n.ln()) / (b.n.ln() - a.n.ln());
        (a.mean.ln() * (1.0 - w) + b.mean.ln() * w).exp()
    };
    let total: f64 = (1..=n).map(|j| j as f64 * interp(j as f64)).sum();
    let nf = n as f64;
    Ok(total / (nf * nf * interp(nf)))
}
