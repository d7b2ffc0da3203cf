//! Lattice geometry, random streams, and simple random walk run to the first
//! exit of a ball.
//!
//! Exit times follow one convention throughout the crate: the exit index of a
//! path is the smallest `j` with `path[j]` outside the ball. When the path
//! starts inside, this is the smallest `j >= 1` with that property.

mod point;
mod rng;

pub use point::{Ball, Dim, LatticePath, LatticePoint, Site, MAX_COORD};
pub use rng::{derive_stream, mix64, stream_label, RngStream};

use crate::error::{LabError, Result};

/// Default step budget for a walk leaving a ball of radius `radius`: `64 n^2 d`.
pub fn default_max_steps(radius: f64, dim: Dim) -> usize {
    let n = radius.ceil().max(1.0) as usize;
    64 * n * n * dim.get()
}

/// Incremental walker tracking its packed site and squared distance to the
/// ball centre.
#[derive(Clone, Debug)]
pub(crate) struct Walker {
    site: Site,
    rel: [i64; 3],
    norm2: i64,
    exit_norm2: i64,
    degree: u32,
}

impl Walker {
    pub(crate) fn new(start: &LatticePoint, ball: &Ball) -> Self {
        let center = ball.center();
        let mut rel = [0i64; 3];
        for (axis, r) in rel.iter_mut().enumerate().take(start.dim().get()) {
            *r = start.coords()[axis] as i64 - center.coords()[axis] as i64;
        }
        Self {
            site: start.site(),
            rel,
            norm2: rel.iter().map(|c| c * c).sum(),
            exit_norm2: ball.exit_norm2(),
            degree: start.dim().degree(),
        }
    }

    #[inline]
    pub(crate) fn site(&self) -> Site {
        self.site
    }

    #[inline]
    pub(crate) fn outside(&self) -> bool {
        self.norm2 >= self.exit_norm2
    }

    #[inline]
    pub(crate) fn step(&mut self, rng: &mut RngStream) -> Site {
        let dir = rng.below_small(self.degree);
        let axis = (dir >> 1) as usize;
        if dir & 1 == 0 {
            self.norm2 += 2 * self.rel[axis] + 1;
            self.rel[axis] += 1;
        } else {
            self.norm2 += -2 * self.rel[axis] + 1;
            self.rel[axis] -= 1;
        }
        self.site = self.site.neighbor(dir);
        self.site
    }
}

/// Simple random walk from `start` up to and including its first point
/// outside `ball`.
pub fn sample_srw_to_exit(
    start: &LatticePoint,
    ball: &Ball,
    rng: &mut RngStream,
    max_steps: usize,
) -> Result<LatticePath> {
    if start.dim() != ball.dim() {
        return Err(LabError::DimensionMismatch {
            expected: ball.dim().get(),
            found: start.dim().get(),
        });
    }
    if !ball.contains(start) {
        return Err(LabError::StartOutsideBall(start.coords().to_vec()));
    }
    let mut walker = Walker::new(start, ball);
    let mut sites = vec![walker.site()];
    while !walker.outside() {
        if sites.len() > max_steps {
            return Err(LabError::MaxStepsExceeded { max_steps });
        }
        sites.push(walker.step(rng));
    }
    Ok(LatticePath::from_sites_unchecked(sites, start.dim()))
}

/// Smallest index of a point of `path` outside `ball`.
pub fn exit_time(path: &LatticePath, ball: &Ball) -> Result<usize> {
    let exit = ball.exit_norm2();
    let center = ball.center();
    path.points()
        .position(|p| p.dist2(&center) >= exit)
        .ok_or(LabError::NoExit)
}
