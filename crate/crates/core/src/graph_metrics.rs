//! Chemical distance and effective resistance on the trace graph of a walk.
//!
//! The trace graph has the visited sites as vertices and the traversed unit
//! steps as edges. An edge walked several times is still one unit resistor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lattice_walk::{LatticePath, LatticePoint, Site};
use crate::occupancy::PackedMap;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Undirected simple graph on packed lattice sites, stored as CSR adjacency.
#[derive(Clone, Debug)]
pub struct TraceGraph {
    sites: Vec<Site>,
    index: PackedMap<u32>,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
}

impl TraceGraph {
    fn from_parts(sites: Vec<Site>, index: PackedMap<u32>, mut edges: Vec<(u32, u32)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let mut degree = vec![0u32; sites.len() + 1];
        for &(a, b) in &edges {
            degree[a as usize + 1] += 1;
            degree[b as usize + 1] += 1;
        }
        for i in 1..degree.len() {
            degree[i] += degree[i - 1];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; 2 * edges.len()];
        for &(a, b) in &edges {
            neighbors[fill[a as usize] as usize] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize] as usize] = a;
            fill[b as usize] += 1;
        }
        Self {
            sites,
            index,
            edges,
            offsets,
            neighbors,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.sites.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(a, b)` vertex pairs with `a < b`, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn site(&self, v: usize) -> Site {
        self.sites[v]
    }

    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        self.index_of_site(p.site())
    }

    pub fn index_of_site(&self, s: Site) -> Option<usize> {
        self.index.get(s.0).map(|i| i as usize)
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn degree(&self, v: usize) -> usize {
        (self.offsets[v + 1] - self.offsets[v]) as usize
    }

    /// The same vertex set with edge `k` (in [`Self::edges`] order) removed.
    pub fn without_edge(&self, k: usize) -> TraceGraph {
        let mut edges = self.edges.clone();
        edges.remove(k);
        Self::from_parts(self.sites.clone(), self.index.clone(), edges)
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.sites.len() {
            Ok(())
        } else {
            Err(LabError::UnknownVertex(v))
        }
    }
}

/// Vertices in order of first visit; edges are the distinct traversed steps.
pub fn build_trace_graph(path: &LatticePath) -> TraceGraph {
    let mut sites = Vec::new();
    let mut index = PackedMap::with_capacity(path.sites().len());
    let mut ids = Vec::with_capacity(path.sites().len());
    for &s in path.sites() {
        let next = sites.len() as u32;
        let (id, found) = index.entry(s.0, next);
        if !found {
            sites.push(s);
        }
        ids.push(*id);
    }
    let edges = ids
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect();
    TraceGraph::from_parts(sites, index, edges)
}

/// BFS distances from `source`; `u32::MAX` marks unreachable vertices.
pub fn bfs_distances(g: &TraceGraph, source: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.vertex_count()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if dist[w as usize] == u32::MAX {
                dist[w as usize] = dist[v] + 1;
                queue.push_back(w as usize);
            }
        }
    }
    dist
}

/// Graph distance between `a` and `b`.
pub fn chemical_distance(g: &TraceGraph, a: usize, b: usize) -> Result<usize> {
    g.check_vertex(a)?;
    g.check_vertex(b)?;
    match bfs_distances(g, a)[b] {
        u32::MAX => Err(LabError::Disconnected { a, b }),
        d => Ok(d as usize),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResistanceResult {
    /// Effective resistance with unit resistors on every edge.
    pub value: f64,
    /// Relative residual of the reduced Laplacian system at termination.
    pub residual: f64,
    pub iterations: usize,
}

/// Effective resistance between `a` and `b`: the voltage `v` with `v(a) = 1`,
/// `v(b) = 0` is harmonic elsewhere, and `R = 1 / Σ_{w ~ a} (1 − v(w))`.
/// Solved by Jacobi-preconditioned conjugate gradient on the reduced system.
pub fn effective_resistance(g: &TraceGraph, a: usize, b: usize, tol: f64) -> Result<ResistanceResult> {
    g.check_vertex(a)?;
    g.check_vertex(b)?;
    if a == b {
        return Err(LabError::InvalidGraph("resistance needs two distinct vertices".into()));
    }
    let reach = bfs_distances(g, a);
    if reach[b] == u32::MAX {
        return Err(LabError::Disconnected { a, b });
    }
    // Unknowns: vertices other than a and b that are connected to them.
    let n = g.vertex_count();
    let mut slot = vec![u32::MAX; n];
    let mut free = Vec::new();
    for v in 0..n {
        if v != a && v != b && reach[v] != u32::MAX {
            slot[v] = free.len() as u32;
            free.push(v);
        }
    }
    let m = free.len();
    let diag: Vec<f64> = free.iter().map(|&v| g.degree(v) as f64).collect();
    let mut rhs = vec![0.0; m];
    for &w in g.neighbors(a) {
        if slot[w as usize] != u32::MAX {
            rhs[slot[w as usize] as usize] += 1.0;
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for (i, &v) in free.iter().enumerate() {
            let mut acc = diag[i] * x[i];
            for &w in g.neighbors(v) {
                let s = slot[w as usize];
                if s != u32::MAX {
                    acc -= x[s as usize];
                }
            }
            out[i] = acc;
        }
    };

    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let rhs_norm = dot(&rhs, &rhs).sqrt().max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; m];
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    let max_iter = 10 * m + 100;
    let mut residual = dot(&r, &r).sqrt() / rhs_norm;
    let mut iterations = 0;
    while residual > tol {
        if iterations == max_iter || !residual.is_finite() {
            return Err(LabError::SolverDiverged { iterations, residual, tol });
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
        residual = dot(&r, &r).sqrt() / rhs_norm;
        iterations += 1;
    }

    let current: f64 = g
        .neighbors(a)
        .iter()
        .map(|&w| match slot[w as usize] {
            u32::MAX => 1.0, // w == b
            s => 1.0 - x[s as usize],
        })
        .sum();
    Ok(ResistanceResult {
        value: 1.0 / current,
        residual,
        iterations,
    })
}

/// `|LE|`, chemical distance and effective resistance between the endpoints
/// of a walk's trace graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointMetrics {
    pub erased_length: usize,
    pub chemical: usize,
    pub resistance: f64,
}

impl EndpointMetrics {
    /// `|LE| ≥ d ≥ R`, with slack for the solver tolerance on the last link.
    pub fn is_ordered(&self) -> bool {
        self.erased_length >= self.chemical
            && self.chemical as f64 >= self.resistance * (1.0 - 1e-9)
    }
}

pub fn endpoint_metrics(path: &LatticePath, erased_length: usize) -> Result<EndpointMetrics> {
    let g = build_trace_graph(path);
    let a = g.index_of_site(path.sites()[0]).ok_or(LabError::EmptyPath)?;
    let b = g.index_of_site(*path.sites().last().ok_or(LabError::EmptyPath)?).ok_or(LabError::EmptyPath)?;
    if a == b {
        return Ok(EndpointMetrics { erased_length, chemical: 0, resistance: 0.0 });
    }
    Ok(EndpointMetrics {
        erased_length,
        chemical: chemical_distance(&g, a, b)?,
        resistance: effective_resistance(&g, a, b, DEFAULT_TOLERANCE)?.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_walk::{derive_stream, Ball, Dim};
    use crate::loop_erasure::loop_erase;

    fn random_walk(dim: Dim, steps: usize, seed: u64, id: u64) -> LatticePath {
        let mut rng = derive_stream(seed, id);
        let mut sites = vec![LatticePoint::origin(dim).site()];
        for _ in 0..steps {
            let d = rng.below_small(dim.degree());
            sites.push(sites.last().unwrap().neighbor(d));
        }
        LatticePath::from_sites_unchecked(sites, dim)
    }

    /// Dense LU solve of the grounded Laplacian: inject unit current at `a`,
    /// ground `b`, read off `v(a)`.
    fn dense_resistance(g: &TraceGraph, a: usize, b: usize) -> f64 {
        let n = g.vertex_count();
        let keep: Vec<usize> = (0..n).filter(|&v| v != b).collect();
        let pos = |v: usize| keep.iter().position(|&k| k == v);
        let k = keep.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
        for (i, &v) in keep.iter().enumerate() {
            m[(i, i)] = g.degree(v) as f64;
            for &w in g.neighbors(v) {
                if let Some(j) = pos(w as usize) {
                    m[(i, j)] -= 1.0;
                }
            }
        }
        let i = pos(a).unwrap();
        let mut rhs = nalgebra::DVector::zeros(k);
        rhs[i] = 1.0;
        m.lu().solve(&rhs).unwrap()[i]
    }

    #[test]
    fn trace_graph_examples() {
        let straight = LatticePath::from_coords(&[[0, 0], [1, 0], [2, 0], [3, 0]]).unwrap();
        let g = build_trace_graph(&straight);
        assert_eq!((g.vertex_count(), g.edge_count()), (4, 3));
        let back = LatticePath::from_coords(&[[0, 0], [1, 0], [0, 0]]).unwrap();
        let g = build_trace_graph(&back);
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn edge_count_matches_scan() {
        for id in 0..20 {
            let path = random_walk(Dim::Two, 1000, 3, id);
            let mut pairs: Vec<(u64, u64)> = path
                .sites()
                .windows(2)
                .map(|w| (w[0].0.min(w[1].0), w[0].0.max(w[1].0)))
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            let g = build_trace_graph(&path);
            assert_eq!(g.edge_count(), pairs.len());
            for &(x, y) in g.edges() {
                assert!(g.site(x as usize).is_adjacent(g.site(y as usize)));
            }
        }
    }

    #[test]
    fn path_graph_resistance_is_its_length() {
        for n in [1usize, 2, 7, 50, 333] {
            let pts: Vec<[i32; 3]> = (0..=n as i32).map(|x| [x, 0, 0]).collect();
            let g = build_trace_graph(&LatticePath::from_coords(&pts).unwrap());
            let r = effective_resistance(&g, 0, n, DEFAULT_TOLERANCE).unwrap();
            assert!((r.value - n as f64).abs() < 1e-9 * n as f64, "{n}: {r:?}");
            assert_eq!(chemical_distance(&g, 0, n).unwrap(), n);
            assert_eq!(chemical_distance(&g, 3.min(n), 3.min(n)).unwrap(), 0);
        }
    }

    #[test]
    fn unit_square_opposite_corners() {
        let sq = LatticePath::from_coords(&[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]).unwrap();
        let g = build_trace_graph(&sq);
        let a = g.index_of(&LatticePoint::new(&[0, 0]).unwrap()).unwrap();
        let b = g.index_of(&LatticePoint::new(&[1, 1]).unwrap()).unwrap();
        let r = effective_resistance(&g, a, b, DEFAULT_TOLERANCE).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let c = g.index_of(&LatticePoint::new(&[1, 0]).unwrap()).unwrap();
        let r = effective_resistance(&g, a, c, DEFAULT_TOLERANCE).unwrap();
        assert!((r.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_elimination() {
        let mut checked = 0;
        for id in 0..400 {
            let dim = if id % 2 == 0 { Dim::Two } else { Dim::Three };
            let path = random_walk(dim, 60 + (id as usize % 200), 5, id);
            let g = build_trace_graph(&path);
            if g.vertex_count() > 200 || g.vertex_count() < 2 {
                continue;
            }
            let a = 0;
            let b = g.index_of_site(*path.sites().last().unwrap()).unwrap();
            let b = if a == b { g.vertex_count() - 1 } else { b };
            let cg = effective_resistance(&g, a, b, DEFAULT_TOLERANCE).unwrap();
            let exact = dense_resistance(&g, a, b);
            assert!((cg.value - exact).abs() <= 1e-8 * exact, "{} vs {exact}", cg.value);
            checked += 1;
        }
        assert!(checked > 300);
    }

    #[test]
    fn chemical_distance_matches_reachability_powers() {
        for id in 0..100 {
            let path = random_walk(Dim::Two, 120, 8, id);
            let g = build_trace_graph(&path);
            let n = g.vertex_count();
            assert!(n <= 200);
            let b = g.index_of_site(*path.sites().last().unwrap()).unwrap();
            // reach_k = vertices within k steps of 0: boolean A^k propagation.
            let mut reach = vec![false; n];
            reach[0] = true;
            let mut k = 0;
            while !reach[b] {
                let mut next = reach.clone();
                for v in (0..n).filter(|&v| reach[v]) {
                    for &w in g.neighbors(v) {
                        next[w as usize] = true;
                    }
                }
                reach = next;
                k += 1;
            }
            assert_eq!(chemical_distance(&g, 0, b).unwrap(), k);
        }
    }

    #[test]
    fn rayleigh_monotonicity() {
        let mut seen = 0;
        for id in 0..200 {
            let path = random_walk(Dim::Two, 40, 9, id);
            let g = build_trace_graph(&path);
            if g.vertex_count() > 30 || g.vertex_count() < 3 {
                continue;
            }
            let b = g.vertex_count() - 1;
            let base = effective_resistance(&g, 0, b, DEFAULT_TOLERANCE).unwrap().value;
            for k in 0..g.edge_count() {
                match effective_resistance(&g.without_edge(k), 0, b, DEFAULT_TOLERANCE) {
                    Ok(r) => assert!(r.value >= base * (1.0 - 1e-9), "edge {k}: {} < {base}", r.value),
                    Err(LabError::Disconnected { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
            seen += 1;
        }
        assert!(seen > 50);
    }

    #[test]
    fn endpoint_ordering_on_exit_walks() {
        let ball = Ball::centered(Dim::Two, 12.0).unwrap();
        let o = LatticePoint::origin(Dim::Two);
        for id in 0..300 {
            let path = crate::lattice_walk::sample_srw_to_exit(&o, &ball, &mut derive_stream(4, id), 1 << 20)
                .unwrap();
            let m = endpoint_metrics(&path, loop_erase(&path).len()).unwrap();
            assert!(m.is_ordered(), "{m:?}");
        }
    }

    #[test]
    fn bad_vertices_are_errors() {
        let g = build_trace_graph(&LatticePath::from_coords(&[[0, 0], [1, 0]]).unwrap());
        assert!(matches!(chemical_distance(&g, 0, 5), Err(LabError::UnknownVertex(5))));
        assert!(effective_resistance(&g, 1, 1, DEFAULT_TOLERANCE).is_err());
        let split = g.without_edge(0);
        assert!(matches!(
            effective_resistance(&split, 0, 1, DEFAULT_TOLERANCE),
            Err(LabError::Disconnected { .. })
        ));
    }
}
