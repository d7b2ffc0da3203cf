//! Local cut times of finite walks.
//!
//! `k` is a cut time of `S[0, m]` when `S[0, k]` and `S[k+1, m]` share no
//! site. A site first visited at `t1` and last visited at `t2` rules out every
//! `k` in `[t1, t2 - 1]`, so the cut times are the indices left uncovered by
//! those intervals. One pass collects the visit spans, a difference array
//! marks coverage, and a prefix sum reads it off. Candidates are
//! `k ∈ {0, …, m - 1}`; the vacuous `k = m` is never reported.

use crate::error::Result;
use crate::lattice_walk::{default_max_steps, Ball, LatticePath, RngStream, Site, Walker};
use crate::occupancy::PackedMap;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutTimeSet {
    pub indices: Vec<usize>,
    pub path_length: usize,
}

impl CutTimeSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }
}

/// First and last visit of one site.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VisitSpan {
    pub first_visit: u32,
    pub last_visit: u32,
}

/// Visit spans of every site of `sites`, keyed by packed site.
pub fn visit_spans(sites: &[Site]) -> PackedMap<VisitSpan> {
    let mut spans = PackedMap::<VisitSpan>::with_capacity(sites.len() / 2 + 1);
    for (t, s) in sites.iter().enumerate() {
        let t = t as u32;
        let (span, _) = spans.entry(
            s.0,
            VisitSpan {
                first_visit: t,
                last_visit: t,
            },
        );
        span.last_visit = t;
    }
    spans
}

/// Cut times of a sequence of sites (consecutive entries need not be adjacent).
pub fn cut_indices(sites: &[Site]) -> Vec<usize> {
    let m = sites.len().saturating_sub(1);
    if m == 0 {
        return Vec::new();
    }
    let mut cover = vec![0i32; m + 1];
    for (_, span) in visit_spans(sites).iter() {
        if span.last_visit > span.first_visit {
            cover[span.first_visit as usize] += 1;
            cover[span.last_visit as usize] -= 1;
        }
    }
    let mut depth = 0;
    let mut out = Vec::new();
    for (k, delta) in cover.iter().take(m).enumerate() {
        depth += delta;
        if depth == 0 {
            out.push(k);
        }
    }
    out
}

pub fn cut_times(path: &LatticePath) -> CutTimeSet {
    CutTimeSet {
        indices: cut_indices(path.sites()),
        path_length: path.len(),
    }
}

/// `K_n`: number of cut times `k < ξ_n` of a fresh walk from the centre of `ball`.
pub fn count_cut_points_to_exit(ball: &Ball, rng: &mut RngStream) -> Result<usize> {
    let max_steps = default_max_steps(ball.radius(), ball.dim());
    let mut walker = Walker::new(&ball.center(), ball);
    let mut sites = vec![walker.site()];
    while !walker.outside() {
        if sites.len() > max_steps {
            return Err(crate::error::LabError::MaxStepsExceeded { max_steps });
        }
        sites.push(walker.step(rng));
    }
    Ok(cut_indices(&sites).len())
}
