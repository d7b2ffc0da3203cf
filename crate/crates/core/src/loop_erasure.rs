//! Chronological loop erasure, batch and streaming.
//!
//! The batch form follows the last-visit recursion directly: start from the
//! last visit to the first point, then repeatedly jump to the last visit of
//! the successor. The streaming form keeps the current simple path and an
//! index of its sites, truncating back to the first arrival whenever the walk
//! revisits one of them. Both produce the same simple path.

use crate::error::{LabError, Result};
use crate::lattice_walk::{
    default_max_steps, Ball, Dim, LatticePath, LatticePoint, RngStream, Site, Walker,
};
use crate::occupancy::PackedMap;

/// A self-avoiding nearest-neighbour path.
#[derive(Clone, PartialEq, Eq)]
pub struct SimplePath {
    sites: Vec<Site>,
    dim: Dim,
}

impl SimplePath {
    pub fn new(path: LatticePath) -> Result<Self> {
        if !path.is_simple() {
            return Err(LabError::NotSimple);
        }
        let dim = path.dim();
        Ok(Self {
            sites: path.into_sites(),
            dim,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.sites.len() == 1
    }

    pub fn point(&self, i: usize) -> LatticePoint {
        self.sites[i].point(self.dim)
    }

    pub fn first(&self) -> LatticePoint {
        self.point(0)
    }

    pub fn last(&self) -> LatticePoint {
        self.point(self.sites.len() - 1)
    }

    pub fn to_lattice_path(&self) -> LatticePath {
        LatticePath::from_sites_unchecked(self.sites.clone(), self.dim)
    }

    /// Sub-path `[from, to]`, inclusive.
    pub fn slice(&self, from: usize, to: usize) -> SimplePath {
        SimplePath {
            sites: self.sites[from..=to].to_vec(),
            dim: self.dim,
        }
    }

    pub(crate) fn from_sites_unchecked(sites: Vec<Site>, dim: Dim) -> Self {
        debug_assert!(!sites.is_empty());
        Self { sites, dim }
    }
}

impl std::fmt::Debug for SimplePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.sites.iter().map(|s| s.point(self.dim)))
            .finish()
    }
}

/// Loop erasure of a complete path.
pub fn loop_erase(path: &LatticePath) -> SimplePath {
    let sites = path.sites();
    let mut last = PackedMap::<u32>::with_capacity(sites.len());
    for (j, s) in sites.iter().enumerate() {
        last.insert(s.0, j as u32);
    }
    let end = sites.len() - 1;
    let mut out = Vec::new();
    let mut j = last.get(sites[0].0).unwrap_or(0) as usize;
    loop {
        out.push(sites[j]);
        if j == end {
            break;
        }
        j = last.get(sites[j + 1].0).unwrap_or(0) as usize;
    }
    SimplePath::from_sites_unchecked(out, path.dim())
}

/// Streaming loop erasure over opaque `u64` keys (packed sites or graph vertices).
#[derive(Clone, Debug, Default)]
pub struct ErasureState {
    path: Vec<u64>,
    occupancy: PackedMap<u32>,
}

impl ErasureState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            path: Vec::with_capacity(n),
            occupancy: PackedMap::with_capacity(n),
        }
    }

    /// Appends `key`, or truncates back to its earlier position if present.
    /// Returns the new number of points. Adjacency is the caller's concern.
    #[inline]
    pub fn push_key(&mut self, key: u64) -> usize {
        let next = self.path.len() as u32;
        let (slot, found) = self.occupancy.entry(key, next);
        if found {
            let keep = *slot as usize + 1;
            for k in self.path.drain(keep..) {
                self.occupancy.remove(k);
            }
        } else {
            self.path.push(key);
        }
        self.path.len()
    }

    /// Pushes the next lattice point of a walk.
    pub fn push_step(&mut self, next: LatticePoint) -> Result<()> {
        let site = next.site();
        if let Some(&tip) = self.path.last() {
            let tip = Site(tip);
            if !tip.is_adjacent(site) {
                return Err(LabError::NonAdjacentStep {
                    from: tip.point(next.dim()).coords().to_vec(),
                    to: next.coords().to_vec(),
                });
            }
        }
        self.push_key(site.0);
        Ok(())
    }

    pub fn keys(&self) -> &[u64] {
        &self.path
    }

    /// Position of `key` on the current simple path.
    pub fn index_of(&self, key: u64) -> Option<usize> {
        self.occupancy.get(key).map(|i| i as usize)
    }

    #[inline]
    pub fn contains(&self, key: u64) -> bool {
        self.occupancy.contains(key)
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn clear(&mut self) {
        self.path.clear();
        self.occupancy.clear();
    }

    /// Checks that the occupancy index is exactly the index-of function of the path.
    pub fn is_consistent(&self) -> bool {
        self.occupancy.len() == self.path.len()
            && self
                .path
                .iter()
                .enumerate()
                .all(|(i, &k)| self.occupancy.get(k) == Some(i as u32))
    }

    pub fn to_simple_path(&self, dim: Dim) -> SimplePath {
        SimplePath::from_sites_unchecked(self.path.iter().map(|&k| Site(k)).collect(), dim)
    }
}

/// Runs a simple random walk from the centre of `ball` to its first exit,
/// erasing loops as it goes, exit point included.
pub fn lerw_to_exit(ball: &Ball, rng: &mut RngStream) -> Result<SimplePath> {
    let mut state = ErasureState::new();
    lerw_into(ball, rng, &mut state)?;
    Ok(state.to_simple_path(ball.dim()))
}

/// Same as [`lerw_to_exit`], leaving the result in a reusable `state`.
pub fn lerw_into(ball: &Ball, rng: &mut RngStream, state: &mut ErasureState) -> Result<()> {
    let max_steps = default_max_steps(ball.radius(), ball.dim());
    state.clear();
    let mut walker = Walker::new(&ball.center(), ball);
    state.push_key(walker.site().0);
    let mut steps = 0usize;
    while !walker.outside() {
        if steps == max_steps {
            return Err(LabError::MaxStepsExceeded { max_steps });
        }
        steps += 1;
        state.push_key(walker.step(rng).0);
    }
    Ok(())
}
