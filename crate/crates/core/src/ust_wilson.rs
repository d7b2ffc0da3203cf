//! Uniform spanning trees on small finite graphs by Wilson's algorithm, and
//! the Pemantle identity as a cross-check of the loop-erasure code.
//!
//! Graph vertices are `0..n`; the erasure runs on keys `v + 1` because key 0
//! is reserved by the occupancy map.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimators::chi_square_uniform;
use crate::lattice_walk::RngStream;
use crate::loop_erasure::ErasureState;
use crate::parallel::sample_blocks_with;

/// Undirected, simple, connected graph as sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGraph {
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl FiniteGraph {
    pub fn new(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertices == 0 {
            return Err(LabError::InvalidGraph("no vertices".into()));
        }
        let mut adjacency = vec![Vec::new(); vertices];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= vertices || b >= vertices {
                return Err(LabError::UnknownVertex(a.max(b)));
            }
            if a == b {
                return Err(LabError::InvalidGraph(format!("self-loop at {a}")));
            }
            normalized.push((a.min(b), a.max(b)));
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::InvalidGraph("repeated edge".into()));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let g = Self {
            adjacency,
            edges: normalized,
        };
        if let Some(v) = g.distances(0).iter().position(|d| d.is_none()) {
            return Err(LabError::Disconnected { a: 0, b: v });
        }
        Ok(g)
    }

    /// `n`-cycle, `n >= 3`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(LabError::InvalidGraph(format!("cycle of length {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    /// Path on `n` vertices.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    /// `rows × cols` grid; vertex `(r, c)` is `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.vertex_count()
    }

    fn distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.vertex_count()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if dist[w].is_none() {
                    dist[w] = Some(dist[v].unwrap() + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(LabError::UnknownVertex(v))
        }
    }
}

/// Spanning tree stored as sorted edges plus parent pointers toward `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    /// Builds a tree from an edge set; fails unless the edges span `vertices`
    /// without a cycle.
    pub fn from_edges(vertices: usize, root: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if root >= vertices {
            return Err(LabError::UnknownVertex(root));
        }
        if edges.len() + 1 != vertices {
            return Err(LabError::InvalidGraph(format!(
                "{} edges cannot span {vertices} vertices as a tree",
                edges.len()
            )));
        }
        let g = FiniteGraph::new(vertices, edges)?;
        let mut parent = vec![None; vertices];
        let mut depth = vec![0; vertices];
        let mut seen = vec![false; vertices];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    depth[w] = depth[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(Self {
            root,
            parent,
            depth,
            edges: g.edges,
        })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    /// Spanning, acyclic, and parent pointers consistent with the edge set.
    pub fn is_valid(&self) -> bool {
        let n = self.vertex_count();
        if self.edges.len() + 1 != n || self.parent[self.root].is_some() {
            return false;
        }
        let mut from_parents: Vec<(usize, usize)> = (0..n)
            .filter_map(|v| self.parent[v].map(|p| (v.min(p), v.max(p))))
            .collect();
        from_parents.sort_unstable();
        from_parents == self.edges
            && (0..n).all(|v| match self.parent[v] {
                Some(p) => self.depth[v] == self.depth[p] + 1,
                None => v == self.root,
            })
    }
}

/// Scratch reused across Wilson draws.
#[derive(Debug, Default)]
pub struct WilsonScratch {
    erasure: ErasureState,
    in_tree: Vec<bool>,
}

/// Loop-erased walk from `u` on `g`, stopped when it first hits `stop`,
/// erased with the same streaming code as lattice walks.
fn erased_walk_into(
    g: &FiniteGraph,
    u: usize,
    rng: &mut RngStream,
    state: &mut ErasureState,
    mut stop: impl FnMut(usize) -> bool,
) -> usize {
    state.clear();
    let mut v = u;
    state.push_key(v as u64 + 1);
    loop {
        let nbrs = g.neighbors(v);
        v = nbrs[rng.below(nbrs.len() as u64) as usize];
        if stop(v) {
            return v;
        }
        state.push_key(v as u64 + 1);
    }
}

/// Loop erasure of a walk from `u` stopped on hitting `v`, as a vertex list
/// from `u` to `v`.
pub fn lerw_on_graph(g: &FiniteGraph, u: usize, v: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    g.check_vertex(u)?;
    g.check_vertex(v)?;
    if u == v {
        return Ok(vec![u]);
    }
    let mut state = ErasureState::new();
    erased_walk_into(g, u, rng, &mut state, |w| w == v);
    let mut out: Vec<usize> = state.keys().iter().map(|&k| k as usize - 1).collect();
    out.push(v);
    Ok(out)
}

pub fn wilson_sample(g: &FiniteGraph, root: usize, rng: &mut RngStream) -> Result<SpanningTree> {
    wilson_sample_with(g, root, rng, &mut WilsonScratch::default())
}

pub fn wilson_sample_with(
    g: &FiniteGraph,
    root: usize,
    rng: &mut RngStream,
    scratch: &mut WilsonScratch,
) -> Result<SpanningTree> {
    g.check_vertex(root)?;
    let n = g.vertex_count();
    scratch.in_tree.clear();
    scratch.in_tree.resize(n, false);
    scratch.in_tree[root] = true;
    let mut parent = vec![None; n];
    for start in 0..n {
        if scratch.in_tree[start] {
            continue;
        }
        let in_tree = &scratch.in_tree;
        let hit = erased_walk_into(g, start, rng, &mut scratch.erasure, |w| in_tree[w]);
        let keys = scratch.erasure.keys();
        for (i, &k) in keys.iter().enumerate() {
            let v = k as usize - 1;
            parent[v] = Some(keys.get(i + 1).map_or(hit, |&nk| nk as usize - 1));
            scratch.in_tree[v] = true;
        }
    }
    let mut edges: Vec<(usize, usize)> = (0..n)
        .filter_map(|v| parent[v].map(|p| (v.min(p), v.max(p))))
        .collect();
    edges.sort_unstable();
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    for v in 0..n {
        let mut chain = Vec::new();
        let mut x = v;
        while depth[x] == usize::MAX {
            chain.push(x);
            x = parent[x].expect("non-root vertices have parents");
        }
        for &y in chain.iter().rev() {
            depth[y] = depth[parent[y].unwrap()] + 1;
        }
    }
    Ok(SpanningTree {
        root,
        parent,
        depth,
        edges,
    })
}

/// The unique path from `u` to `v` in `tree`.
pub fn tree_path(tree: &SpanningTree, u: usize, v: usize) -> Result<Vec<usize>> {
    let n = tree.vertex_count();
    if u >= n || v >= n {
        return Err(LabError::UnknownVertex(u.max(v)));
    }
    let (mut a, mut b) = (u, v);
    let mut head = vec![a];
    let mut tail = vec![b];
    while tree.depth[a] > tree.depth[b] {
        a = tree.parent[a].unwrap();
        head.push(a);
    }
    while tree.depth[b] > tree.depth[a] {
        b = tree.parent[b].unwrap();
        tail.push(b);
    }
    while a != b {
        a = tree.parent[a].unwrap();
        b = tree.parent[b].unwrap();
        head.push(a);
        tail.push(b);
    }
    tail.pop();
    head.extend(tail.into_iter().rev());
    Ok(head)
}

/// Number of spanning trees by the matrix-tree theorem, with a fraction-free
/// (Bareiss) determinant of the reduced Laplacian.
pub fn spanning_tree_count(g: &FiniteGraph) -> u128 {
    let n = g.vertex_count();
    if n == 1 {
        return 1;
    }
    let k = n - 1;
    let mut m = vec![vec![0i128; k]; k];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = g.neighbors(i + 1).len() as i128;
        for &w in g.neighbors(i + 1) {
            if w > 0 {
                row[w - 1] -= 1;
            }
        }
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for c in 0..k {
        if m[c][c] == 0 {
            match (c + 1..k).find(|&r| m[r][c] != 0) {
                Some(r) => {
                    m.swap(c, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in c + 1..k {
            for j in c + 1..k {
                m[i][j] = (m[i][j] * m[c][c] - m[i][c] * m[c][j]) / prev;
            }
        }
        prev = m[c][c];
    }
    (sign * m[k - 1][k - 1]) as u128
}

/// All spanning trees as sorted edge lists, by testing every `(n − 1)`-subset
/// of edges. Only meant for graphs with a few dozen edges.
pub fn enumerate_spanning_trees(g: &FiniteGraph) -> Vec<Vec<(usize, usize)>> {
    let n = g.vertex_count();
    let e = g.edges();
    let need = n - 1;
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(need);
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    fn rec(
        e: &[(usize, usize)],
        n: usize,
        need: usize,
        from: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if chosen.len() == need {
            let mut p: Vec<usize> = (0..n).collect();
            for &i in chosen.iter() {
                let (a, b) = (find(&mut p, e[i].0), find(&mut p, e[i].1));
                if a == b {
                    return;
                }
                p[a] = b;
            }
            out.push(chosen.iter().map(|&i| e[i]).collect());
            return;
        }
        for i in from..e.len() {
            if e.len() - i < need - chosen.len() {
                break;
            }
            chosen.push(i);
            rec(e, n, need, i + 1, chosen, out);
            chosen.pop();
        }
    }
    rec(e, n, need, 0, &mut chosen, &mut out);
    out
}

/// Chi-square test of Wilson samples against the uniform law on all
/// spanning trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub tree_count: u128,
    pub counts: Vec<u64>,
    pub chi_square: f64,
    pub p_value: f64,
}

pub fn uniformity_test(g: &FiniteGraph, samples: usize, rng: &RngStream) -> Result<UniformityReport> {
    let trees = enumerate_spanning_trees(g);
    let tree_count = spanning_tree_count(g);
    if trees.len() as u128 != tree_count {
        return Err(LabError::InvalidGraph(format!(
            "enumeration found {} trees, matrix-tree theorem says {tree_count}",
            trees.len()
        )));
    }
    let index: HashMap<Vec<(usize, usize)>, usize> =
        trees.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
    let draws = sample_blocks_with(rng, samples, 1024, |s, scratch: &mut WilsonScratch| {
        let t = wilson_sample_with(g, 0, s, scratch)?;
        Ok::<_, LabError>(index[t.edges()])
    })?;
    let mut counts = vec![0u64; index.len()];
    for i in draws {
        counts[i] += 1;
    }
    let (chi_square, p_value) = chi_square_uniform(&counts);
    Ok(UniformityReport {
        tree_count,
        counts,
        chi_square,
        p_value,
    })
}

/// Total variation distance between two empirical laws on vertex paths.
pub fn empirical_tv(a: &[Vec<usize>], b: &[Vec<usize>]) -> f64 {
    let mut law: HashMap<&[usize], (f64, f64)> = HashMap::new();
    for p in a {
        law.entry(p).or_default().0 += 1.0 / a.len() as f64;
    }
    for p in b {
        law.entry(p).or_default().1 += 1.0 / b.len() as f64;
    }
    0.5 * law.values().map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// TV distance between the empirical laws of the `u`–`v` path in a Wilson
/// tree and of the loop erasure of a walk from `u` stopped at `v`, `samples`
/// draws each.
pub fn pemantle_check(g: &FiniteGraph, u: usize, v: usize, samples: usize, rng: &RngStream) -> Result<f64> {
    g.check_vertex(u)?;
    g.check_vertex(v)?;
    let tree_rng = rng.substream(0);
    let walk_rng = rng.substream(1);
    let tree_paths = sample_blocks_with(&tree_rng, samples, 1024, |s, scratch: &mut WilsonScratch| {
        tree_path(&wilson_sample_with(g, 0, s, scratch)?, u, v)
    })?;
    let walk_paths = sample_blocks_with(&walk_rng, samples, 1024, |s, _: &mut ()| lerw_on_graph(g, u, v, s))?;
    Ok(empirical_tv(&tree_paths, &walk_paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_walk::derive_stream;

    fn bfs_path(tree: &SpanningTree, u: usize, v: usize) -> Vec<usize> {
        let g = FiniteGraph::new(tree.vertex_count(), tree.edges()).unwrap();
        let mut prev = vec![usize::MAX; g.vertex_count()];
        prev[u] = u;
        let mut queue = VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            for &w in g.neighbors(x) {
                if prev[w] == usize::MAX {
                    prev[w] = x;
                    queue.push_back(w);
                }
            }
        }
        let mut out = vec![v];
        while *out.last().unwrap() != u {
            out.push(prev[*out.last().unwrap()]);
        }
        out.reverse();
        out
    }

    #[test]
    fn graph_validation() {
        assert!(FiniteGraph::new(3, &[(0, 1)]).is_err());
        assert!(FiniteGraph::new(2, &[(0, 1), (1, 0)]).is_err());
        assert!(FiniteGraph::new(2, &[(1, 1)]).is_err());
        assert!(matches!(FiniteGraph::new(2, &[(0, 2)]), Err(LabError::UnknownVertex(2))));
        assert_eq!(FiniteGraph::grid(2, 3).unwrap().edges().len(), 7);
    }

    #[test]
    fn matrix_tree_counts() {
        assert_eq!(spanning_tree_count(&FiniteGraph::cycle(4).unwrap()), 4);
        assert_eq!(spanning_tree_count(&FiniteGraph::grid(2, 3).unwrap()), 15);
        assert_eq!(spanning_tree_count(&FiniteGraph::grid(3, 3).unwrap()), 192);
        assert_eq!(spanning_tree_count(&FiniteGraph::path(7).unwrap()), 1);
        let k5: Vec<_> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        assert_eq!(spanning_tree_count(&FiniteGraph::new(5, &k5).unwrap()), 125);
        for g in [FiniteGraph::cycle(6).unwrap(), FiniteGraph::grid(3, 3).unwrap()] {
            assert_eq!(enumerate_spanning_trees(&g).len() as u128, spanning_tree_count(&g));
        }
    }

    #[test]
    fn tree_input_returns_itself() {
        let g = FiniteGraph::new(6, &[(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]).unwrap();
        for id in 0..20 {
            let t = wilson_sample(&g, id as usize % 6, &mut derive_stream(1, id)).unwrap();
            assert_eq!(t.edges(), g.edges());
            assert!(t.is_valid());
        }
    }

    #[test]
    fn samples_are_spanning_trees() {
        let g = FiniteGraph::grid(4, 5).unwrap();
        for id in 0..200 {
            let t = wilson_sample(&g, (id % 20) as usize, &mut derive_stream(2, id)).unwrap();
            assert!(t.is_valid());
            assert!(SpanningTree::from_edges(20, 0, t.edges()).is_ok());
            assert!(t.edges().iter().all(|e| g.edges().contains(e)));
        }
    }

    #[test]
    fn tree_paths_match_bfs() {
        assert_eq!(
            tree_path(&SpanningTree::from_edges(5, 0, FiniteGraph::path(5).unwrap().edges()).unwrap(), 1, 4)
                .unwrap(),
            vec![1, 2, 3, 4]
        );
        for id in 0..100 {
            let g = FiniteGraph::grid(5 + (id as usize % 3), 7).unwrap();
            let t = wilson_sample(&g, 0, &mut derive_stream(3, id)).unwrap();
            let n = g.vertex_count();
            let mut rng = derive_stream(4, id);
            for _ in 0..10 {
                let (u, v) = (rng.below(n as u64) as usize, rng.below(n as u64) as usize);
                assert_eq!(tree_path(&t, u, v).unwrap(), bfs_path(&t, u, v));
            }
            assert_eq!(tree_path(&t, 3, 3).unwrap(), vec![3]);
        }
    }

    #[test]
    fn four_cycle_frequencies() {
        let r = uniformity_test(&FiniteGraph::cycle(4).unwrap(), 100_000, &derive_stream(5, 0)).unwrap();
        for &c in &r.counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{r:?}");
        }
        assert!(r.p_value > 0.001);
    }

    #[test]
    fn graph_lerw_is_simple_and_hits_target() {
        let g = FiniteGraph::grid(3, 3).unwrap();
        for id in 0..500 {
            let p = lerw_on_graph(&g, 0, 8, &mut derive_stream(6, id)).unwrap();
            assert_eq!((p[0], *p.last().unwrap()), (0, 8));
            let mut s = p.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), p.len());
            assert!(p.windows(2).all(|w| g.neighbors(w[0]).contains(&w[1])));
        }
    }

    #[test]
    fn pemantle_on_a_tree_is_exact() {
        let g = FiniteGraph::path(5).unwrap();
        assert_eq!(pemantle_check(&g, 0, 4, 500, &derive_stream(7, 0)).unwrap(), 0.0);
    }

    #[test]
    fn empirical_tv_examples() {
        let a = vec![vec![0, 1], vec![0, 1]];
        let b = vec![vec![0, 2], vec![0, 1]];
        assert_eq!(empirical_tv(&a, &a), 0.0);
        assert!((empirical_tv(&a, &b) - 0.5).abs() < 1e-12);
    }
}
