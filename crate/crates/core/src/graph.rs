//! Distance graphs: construction, validation, neighborhoods and shortest paths.
//!
//! A [`DistanceGraph`] is a symmetric sparse adjacency whose stored weights are
//! positive distances. Asymmetric or duplicated input is always resolved by the
//! max rule `w(i,j) = max(w(i,j), w(j,i))`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default cap on the vertex count for dense all-pairs output.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGraph {
    adj: CsrMatrix,
}

/// Vertices within `order` hops of `center`, excluding the center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodView {
    pub center: usize,
    pub order: usize,
    /// Ascending vertex ids.
    pub members: Vec<usize>,
}

/// Squared geodesic distances among `{center} ∪ Γ²(center)`.
#[derive(Debug, Clone)]
pub struct LocalGeodesics {
    /// `vertices[0]` is the center, followed by Γ² members in ascending order.
    pub vertices: Vec<usize>,
    /// Symmetric, zero diagonal, indexed like `vertices`.
    pub squared: DMatrix<f64>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // max-heap: smaller distance first, then smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over an adjacency-list graph; unreachable vertices stay at infinity.
fn dijkstra_lists(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut done = vec![false; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(nb, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[nb] {
                dist[nb] = nd;
                heap.push(HeapItem { dist: nd, node: nb });
            }
        }
    }
    dist
}

impl DistanceGraph {
    /// Wraps a symmetric adjacency after checking every graph invariant.
    pub fn from_adjacency(adj: CsrMatrix) -> Result<Self> {
        let n = adj.nrows();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if adj.ncols() != n {
            return Err(Error::InvalidInput("adjacency must be square".into()));
        }
        for (i, j, w) in adj.triplets() {
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::NonPositiveWeight { a: i, b: j, weight: w });
            }
            if adj.get(j, i) != Some(w) {
                return Err(Error::InvalidInput(format!("asymmetric weight on edge ({i},{j})")));
            }
        }
        if let Some(v) = (0..n).find(|&v| adj.row_range(v).is_empty()) {
            return Err(Error::IsolatedVertex(v));
        }
        Ok(Self { adj })
    }

    /// Builds a graph from directed weighted entries, symmetrized by the max rule.
    ///
    /// Zero entries are treated as absent. Negative weights and self-loops are
    /// rejected.
    pub fn symmetrize(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut trip = Vec::with_capacity(entries.len() * 2);
        for &(i, j, w) in entries {
            if i >= n {
                return Err(Error::VertexOutOfRange(i));
            }
            if j >= n {
                return Err(Error::VertexOutOfRange(j));
            }
            if w == 0.0 {
                continue;
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::NonPositiveWeight { a: i, b: j, weight: w });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
        Self::from_adjacency(CsrMatrix::from_triplets_with(n, n, &trip, f64::max))
    }

    /// Parses the `u v d` edge-list format; `#` lines and blank lines are skipped.
    pub fn load_edge_list<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        let mut n = 0usize;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: lineno, msg: format!("expected `u v d`, got {t:?}") });
            }
            let parse_id = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse { line: lineno, msg: format!("bad vertex id {s:?}") })
            };
            let u = parse_id(fields[0])?;
            let v = parse_id(fields[1])?;
            let d: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("bad distance {:?}", fields[2]) })?;
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Parse { line: lineno, msg: format!("distance must be positive, got {d}") });
            }
            if u == v {
                return Err(Error::Parse { line: lineno, msg: format!("self-loop on vertex {u}") });
            }
            n = n.max(u + 1).max(v + 1);
            entries.push((u, v, d));
        }
        if entries.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Self::symmetrize(n, &entries)
    }

    /// Writes each undirected edge once as `u v d` with `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} vertices, {} edges", self.n_vertices(), self.n_edges())?;
        for (i, j, d) in self.edges() {
            writeln!(w, "{i} {j} {d}")?;
        }
        Ok(())
    }

    /// Exact Euclidean k-nearest-neighbor graph over the rows of `points`,
    /// symmetrized by the max rule.
    pub fn knn_graph(points: &DMatrix<f64>, k: usize) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if k == 0 || k >= n {
            return Err(Error::InvalidInput(format!("k must satisfy 1 <= k < {n}, got {k}")));
        }
        let lists = knn_lists(points, k);
        let mut entries = Vec::with_capacity(n * k);
        for (i, list) in lists.into_iter().enumerate() {
            for (j, d) in list {
                if d == 0.0 {
                    return Err(Error::DuplicatePoints { a: i.min(j), b: i.max(j) });
                }
                entries.push((i, j, d));
            }
        }
        Self::symmetrize(n, &entries)
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adj
    }

    /// Neighbor ids (ascending) and the matching distances.
    pub fn neighbors(&self, v: usize) -> (&[usize], &[f64]) {
        self.adj.row(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj.row_range(v).len()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adj.get(a, b)
    }

    /// Undirected edges `(i, j, d)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.triplets().filter(|&(i, j, _)| i < j)
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n_vertices() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange(v))
        }
    }

    /// Hop-distance levels around `v` up to `order`, as a map vertex → hops.
    fn hop_levels(&self, v: usize, order: usize) -> HashMap<usize, usize> {
        let mut hops = HashMap::new();
        hops.insert(v, 0);
        let mut frontier = vec![v];
        for level in 1..=order {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u).0 {
                    if let std::collections::hash_map::Entry::Vacant(e) = hops.entry(w) {
                        e.insert(level);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        hops
    }

    pub fn neighborhood(&self, v: usize, order: usize) -> Result<NeighborhoodView> {
        self.check_vertex(v)?;
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidInput(format!("neighborhood order must be 1, 2 or 3, got {order}")));
        }
        let mut members: Vec<usize> =
            self.hop_levels(v, order).into_keys().filter(|&u| u != v).collect();
        members.sort_unstable();
        Ok(NeighborhoodView { center: v, order, members })
    }

    /// Shortest-path distances among `{v} ∪ Γ²(v)`, using only paths inside the
    /// subgraph induced by `{v} ∪ Γ³(v)`, returned squared.
    pub fn local_geodesics(&self, v: usize) -> Result<LocalGeodesics> {
        self.check_vertex(v)?;
        let hops = self.hop_levels(v, 3);
        let mut sub: Vec<usize> = hops.keys().copied().collect();
        sub.sort_unstable();
        let local: HashMap<usize, usize> = sub.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let lists: Vec<Vec<(usize, f64)>> = sub
            .iter()
            .map(|&g| {
                let (cols, ws) = self.neighbors(g);
                cols.iter()
                    .zip(ws)
                    .filter_map(|(c, &w)| local.get(c).map(|&l| (l, w)))
                    .collect()
            })
            .collect();

        let mut vertices = vec![v];
        let mut second: Vec<usize> =
            hops.iter().filter(|&(&u, &h)| u != v && h <= 2).map(|(&u, _)| u).collect();
        second.sort_unstable();
        vertices.extend(second);

        let m = vertices.len();
        let mut squared = DMatrix::zeros(m, m);
        for a in 0..m {
            let dist = dijkstra_lists(&lists, local[&vertices[a]]);
            for b in (a + 1)..m {
                let d = dist[local[&vertices[b]]];
                if !d.is_finite() {
                    return Err(Error::DisconnectedNeighborhoods(vec![v]));
                }
                squared[(a, b)] = d * d;
                squared[(b, a)] = d * d;
            }
        }
        Ok(LocalGeodesics { vertices, squared })
    }

    /// Single-source shortest-path distances over the whole graph.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_vertices()];
        let mut done = vec![false; self.n_vertices()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: source });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            let (cols, ws) = self.neighbors(node);
            for (&nb, &w) in cols.iter().zip(ws) {
                let nd = d + w;
                if nd < dist[nb] {
                    dist[nb] = nd;
                    heap.push(HeapItem { dist: nd, node: nb });
                }
            }
        }
        dist
    }

    /// Dense all-pairs geodesic matrix via repeated Dijkstra.
    pub fn all_pairs_geodesics(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.n_vertices();
        if n > cap {
            return Err(Error::CapExceeded { n, cap });
        }
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| self.dijkstra(s)).collect();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                // the lower-id source defines both entries, keeping the output symmetric
                let d = rows[i][j];
                if !d.is_finite() {
                    return Err(Error::Disconnected);
                }
                out[(i, j)] = d;
                out[(j, i)] = d;
            }
        }
        Ok(out)
    }
}

/// Brute-force k nearest neighbors of each row; ties broken by index.
pub(crate) fn knn_lists(points: &DMatrix<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().copied().collect()).collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2, j)
                })
                .collect();
            let kk = k.min(cand.len());
            if kk < cand.len() {
                cand.select_nth_unstable_by(kk, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(kk);
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().map(|(d2, j)| (j, d2.sqrt())).collect()
        })
        .collect()
}
