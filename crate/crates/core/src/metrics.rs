//! Evaluation of an embedding against its distance graph, ground-truth
//! parameters and labels.
//!
//! Global metrics compare embedded Euclidean distances with all-pairs graph
//! geodesics, so they are limited to the dense cap of
//! [`DistanceGraph::all_pairs_geodesics`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::LocalFrameSet;
use crate::graph::DistanceGraph;

/// Pair count above which correlations are computed on a seeded subsample.
pub const MAX_CORRELATION_PAIRS: usize = 2_000_000;

fn check_rows(g: &DistanceGraph, phi: &DMatrix<f64>) -> Result<()> {
    if phi.nrows() != g.n_vertices() {
        return Err(Error::InvalidInput(format!(
            "embedding has {} rows but the graph has {} vertices",
            phi.nrows(),
            g.n_vertices()
        )));
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(())
}

fn row_dist(phi: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (phi.row(i) - phi.row(j)).norm()
}

/// Dense matrix of embedded Euclidean distances.
pub fn pairwise_distances(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = phi.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { row_dist(phi, i, j) }).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Mean over edges of `|‖φ_i − φ_j‖ − d_ij| / d_ij`.
pub fn local_distance_error(g: &DistanceGraph, phi: &DMatrix<f64>) -> Result<f64> {
    check_rows(g, phi)?;
    let (mut total, mut count) = (0.0, 0usize);
    for (i, j, d) in g.edges() {
        total += (row_dist(phi, i, j) - d).abs() / d;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainResult {
    pub strain: f64,
    /// Vertices with a zero frame Gram matrix, left out of the mean.
    pub skipped: usize,
}

/// Mean over vertices of `‖X Xᵀ − E Eᵀ‖_F / ‖E Eᵀ‖_F`, with `X` the embedded
/// neighbors relative to the vertex and `E` its kept frame rows.
pub fn local_metric_strain(g: &DistanceGraph, phi: &DMatrix<f64>, frames: &LocalFrameSet) -> Result<StrainResult> {
    check_rows(g, phi)?;
    if frames.n_vertices() != g.n_vertices() {
        return Err(Error::InvalidInput("frames do not match the graph".into()));
    }
    let (mut total, mut count, mut skipped) = (0.0, 0usize, 0usize);
    for v in 0..g.n_vertices() {
        let e = frames.local_frame(v);
        let ge = &e * e.transpose();
        let norm = ge.norm();
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        let nbrs = g.neighbors(v).0;
        let x = DMatrix::from_fn(nbrs.len(), phi.ncols(), |r, c| phi[(nbrs[r], c)] - phi[(v, c)]);
        total += (&x * x.transpose() - ge).norm() / norm;
        count += 1;
    }
    Ok(StrainResult { strain: if count == 0 { 0.0 } else { total / count as f64 }, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub continuity: f64,
    pub trustworthiness: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Neighbors of `i` ordered by distance, ties by index; `rank[j]` is the
/// 1-based position of `j` (0 for `i` itself).
fn order_and_ranks(d: &DMatrix<f64>, i: usize) -> (Vec<usize>, Vec<usize>) {
    let n = d.nrows();
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    (order, rank)
}

/// Largest possible summed rank penalty for one point.
fn max_penalty(n: usize, k: usize) -> f64 {
    let m = k.min(n - 1 - k);
    (1..=m).map(|t| (n - t - k) as f64).sum()
}

/// Trustworthiness, continuity and kNN precision/recall of the embedding
/// against geodesic neighborhoods.
///
/// Reference sets are the `k` geodesically nearest vertices, retrieved sets
/// the `k` nearest in the embedding, both with ties broken by index.
/// Trustworthiness penalizes embedded neighbors by their excess geodesic
/// rank, continuity penalizes geodesic neighbors by their excess embedded
/// rank, each normalized by the largest attainable penalty.
pub fn rank_metrics(geo: &DMatrix<f64>, phi: &DMatrix<f64>, k: usize) -> Result<RankMetrics> {
    let n = geo.nrows();
    if phi.nrows() != n {
        return Err(Error::InvalidInput("embedding and geodesics differ in size".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("k must lie in [1, {}), got {k}", n)));
    }
    let emb = pairwise_distances(phi);
    let per_point: Vec<(f64, f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (g_order, g_rank) = order_and_ranks(geo, i);
            let (e_order, e_rank) = order_and_ranks(&emb, i);
            let g_set = &g_order[..k];
            let e_set = &e_order[..k];
            let trust: f64 = e_set.iter().filter(|&&j| g_rank[j] > k).map(|&j| (g_rank[j] - k) as f64).sum();
            let cont: f64 = g_set.iter().filter(|&&j| e_rank[j] > k).map(|&j| (e_rank[j] - k) as f64).sum();
            let hits = e_set.iter().filter(|&&j| g_rank[j] <= k).count() as f64;
            (trust, cont, hits / k as f64, hits / k as f64)
        })
        .collect();
    let maxpen = max_penalty(n, k);
    let norm = |s: f64| if maxpen > 0.0 { 1.0 - s / (n as f64 * maxpen) } else { 1.0 };
    let trust = norm(per_point.iter().map(|p| p.0).sum());
    let cont = norm(per_point.iter().map(|p| p.1).sum());
    let precision = per_point.iter().map(|p| p.2).sum::<f64>() / n as f64;
    let recall = per_point.iter().map(|p| p.3).sum::<f64>() / n as f64;
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(RankMetrics { continuity: cont, trustworthiness: trust, precision, recall, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    /// `‖D_emb − D_geo‖_F / ‖D_geo‖_F`.
    #[default]
    Relative,
    /// Kruskal stress-1, `sqrt(Σ(D_emb − D_geo)² / Σ D_emb²)`.
    Kruskal,
}

pub fn global_stress(geo: &DMatrix<f64>, phi: &DMatrix<f64>, kind: StressKind) -> Result<f64> {
    let n = geo.nrows();
    if phi.nrows() != n {
        return Err(Error::InvalidInput("embedding and geodesics differ in size".into()));
    }
    let (mut num, mut den_geo, mut den_emb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let (d, e) = (geo[(i, j)], row_dist(phi, i, j));
            num += (e - d) * (e - d);
            den_geo += d * d;
            den_emb += e * e;
        }
    }
    let den = match kind {
        StressKind::Relative => den_geo,
        StressKind::Kruskal => den_emb,
    };
    if den == 0.0 {
        return Err(Error::Degenerate("all distances vanish".into()));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
    /// Number of pairs used.
    pub pairs: usize,
}

/// Upper-triangle pairs `(i, j)`, or a seeded sample of `max_pairs` distinct
/// pairs when there are more.
fn select_pairs(n: usize, max_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    if total <= max_pairs {
        return (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(max_pairs);
    let mut out = Vec::with_capacity(max_pairs);
    while out.len() < max_pairs {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b {
            continue;
        }
        let p = (a.min(b), a.max(b));
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties sharing their mean rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && x[idx[e]] == x[idx[s]] {
            e += 1;
        }
        let r = (s + e + 1) as f64 / 2.0;
        for &i in &idx[s..e] {
            ranks[i] = r;
        }
        s = e;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Number of tied pairs within runs of equal consecutive values.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]) + sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k2 = k + mid - i;
    buf[k2..n].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let xy: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i], y[i])).collect();
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&xy);
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation".into()));
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok((s / denom).clamp(-1.0, 1.0))
}

/// Kendall tau-b by direct pair enumeration, `O(n²)`.
pub fn kendall_tau_b_naive(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 && dy == 0 {
                continue;
            } else if dx == 0 {
                tx += 1;
            } else if dy == 0 {
                ty += 1;
            } else if dx == dy {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let denom = (((conc + disc + tx) as f64) * ((conc + disc + ty) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation".into()));
    }
    Ok((conc - disc) as f64 / denom)
}

/// Pearson, Spearman and Kendall correlations between embedded distances and
/// geodesics over vertex pairs.
pub fn distance_correlations(geo: &DMatrix<f64>, phi: &DMatrix<f64>, max_pairs: usize, seed: u64) -> Result<Correlations> {
    let n = geo.nrows();
    if phi.nrows() != n {
        return Err(Error::InvalidInput("embedding and geodesics differ in size".into()));
    }
    let pairs = select_pairs(n, max_pairs, seed);
    if pairs.len() < 2 {
        return Err(Error::Degenerate("need at least two pairs".into()));
    }
    let d: Vec<f64> = pairs.iter().map(|&(i, j)| geo[(i, j)]).collect();
    let e: Vec<f64> = pairs.iter().map(|&(i, j)| row_dist(phi, i, j)).collect();
    Ok(Correlations {
        pearson: pearson(&e, &d)?,
        spearman: spearman(&e, &d)?,
        kendall: kendall_tau_b(&e, &d)?,
        pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcrustesMode {
    /// Orthogonal map, translation and one global scale.
    Rigid,
    /// General linear map and translation.
    #[default]
    Affine,
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.row_mean();
    let mut c = m.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    c
}

/// `min_T ‖T(φ) − params‖_F² / ‖params − mean‖_F²` over the transform class.
pub fn procrustes_error(phi: &DMatrix<f64>, params: &DMatrix<f64>, mode: ProcrustesMode) -> Result<f64> {
    if phi.nrows() != params.nrows() || phi.ncols() != params.ncols() {
        return Err(Error::InvalidInput(format!(
            "embedding is {}×{} but parameters are {}×{}",
            phi.nrows(),
            phi.ncols(),
            params.nrows(),
            params.ncols()
        )));
    }
    let x = centered(phi);
    let y = centered(params);
    let ny = y.norm_squared();
    let ysv = y.clone().svd(false, false).singular_values;
    if ny == 0.0 || ysv.min() <= 1e-12 * ysv.max() {
        return Err(Error::Degenerate("parameters are rank deficient".into()));
    }
    let resid = match mode {
        ProcrustesMode::Rigid => {
            let nx = x.norm_squared();
            if nx == 0.0 {
                ny
            } else {
                let svd = (x.transpose() * &y).svd(true, true);
                let r = svd.u.expect("requested") * svd.v_t.expect("requested");
                let s = svd.singular_values.sum() / nx;
                (&x * r * s - &y).norm_squared()
            }
        }
        ProcrustesMode::Affine => {
            let svd = x.clone().svd(true, true);
            let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
            let b = svd.solve(&y, tol).map_err(|e| Error::Degenerate(e.to_string()))?;
            (&x * b - &y).norm_squared()
        }
    };
    Ok(resid / ny)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    /// False when both labelings have zero entropy and NMI is reported as 0.
    pub nmi_defined: bool,
    /// Logistic scale used.
    pub scale: f64,
}

/// Labels predicted by a logistic-weighted vote over the `k` nearest
/// embedded neighbors, with weight `1 / (1 + exp(d / s))`.
///
/// Each label scores the mean over the `k` neighbors of the weights of those
/// carrying it; the best score wins, ties going to the smallest label. `s`
/// defaults to the median neighbor distance.
pub fn logistic_knn_predict(phi: &DMatrix<f64>, labels: &[usize], k: usize, scale: Option<f64>) -> Result<(Vec<usize>, f64)> {
    let n = phi.nrows();
    if labels.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {} points", labels.len(), n)));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("k must lie in [1, {n}), got {k}")));
    }
    let lists = crate::graph::knn_lists(phi, k);
    let s = match scale {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(Error::InvalidInput("logistic scale must be positive".into())),
        None => {
            let mut all: Vec<f64> = lists.iter().flatten().map(|&(_, d)| d).collect();
            all.sort_by(f64::total_cmp);
            let m = all[all.len() / 2];
            if all.len().is_multiple_of(2) {
                0.5 * (all[all.len() / 2 - 1] + m)
            } else {
                m
            }
        }
    };
    let s = if s > 0.0 { s } else { 1.0 };
    let pred = lists
        .iter()
        .map(|l| {
            let mut score: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, d) in l {
                *score.entry(labels[j]).or_default() += 1.0 / (1.0 + (d / s).exp()) / k as f64;
            }
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (&lab, &sc) in &score {
                if sc > best.1 {
                    best = (lab, sc);
                }
            }
            best.0
        })
        .collect();
    Ok((pred, s))
}

type Counts<K> = BTreeMap<K, f64>;

fn contingency(a: &[usize], b: &[usize]) -> (Counts<(usize, usize)>, Counts<usize>, Counts<usize>) {
    let (mut joint, mut ra, mut rb) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    (joint, ra, rb)
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Returns `(nmi, defined)`.
pub fn nmi(a: &[usize], b: &[usize]) -> (f64, bool) {
    let n = a.len() as f64;
    let (joint, ra, rb) = contingency(a, b);
    let h = |m: &BTreeMap<usize, f64>| -> f64 { m.values().map(|&c| -(c / n) * (c / n).ln()).sum() };
    let (ha, hb) = (h(&ra), h(&rb));
    if ha + hb == 0.0 {
        return (0.0, false);
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &c)| (c / n) * ((c * n) / (ra[&x] * rb[&y])).ln()).sum();
    ((2.0 * mi / (ha + hb)).clamp(0.0, 1.0), true)
}

/// Adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let (joint, ra, rb) = contingency(a, b);
    let index: f64 = joint.values().map(|&c| c2(c)).sum();
    let sa: f64 = ra.values().map(|&c| c2(c)).sum();
    let sb: f64 = rb.values().map(|&c| c2(c)).sum();
    let total = c2(a.len() as f64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return if index == expected { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

pub fn logistic_knn_cluster_metrics(phi: &DMatrix<f64>, labels: &[usize], k: usize, scale: Option<f64>) -> Result<ClusterMetrics> {
    let (pred, s) = logistic_knn_predict(phi, labels, k, scale)?;
    let acc = pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64;
    let (nmi, nmi_defined) = nmi(labels, &pred);
    Ok(ClusterMetrics { acc, nmi, ari: ari(labels, &pred), nmi_defined, scale: s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub k: usize,
    pub stress: StressKind,
    pub procrustes: ProcrustesMode,
    pub max_pairs: usize,
    pub seed: u64,
    /// Neighbors for label prediction; the embedding dimension when `None`.
    pub label_k: Option<usize>,
    pub logistic_scale: Option<f64>,
    pub dense_cap: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            k: 8,
            stress: StressKind::default(),
            procrustes: ProcrustesMode::default(),
            max_pairs: MAX_CORRELATION_PAIRS,
            seed: 0,
            label_k: None,
            logistic_scale: None,
            dense_cap: crate::graph::DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub lcl_dist: f64,
    pub lcl_mtrc: f64,
    pub lcl_cont: f64,
    pub lcl_trust: f64,
    pub lcl_prec: f64,
    pub lcl_rec: f64,
    pub lcl_f1: f64,
    pub glbl_mtrc: f64,
    pub glbl_pearson: f64,
    pub glbl_spearman: f64,
    pub glbl_kendall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glbl_prm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    /// Vertices skipped by the local strain.
    pub strain_skipped: usize,
    /// Pairs entering the correlations.
    pub pairs: usize,
}

/// The full battery. Frames for the local strain are rebuilt from `g` at the
/// embedding's dimension.
pub fn evaluate(
    g: &DistanceGraph,
    phi: &DMatrix<f64>,
    params: Option<&DMatrix<f64>>,
    labels: Option<&[usize]>,
    opts: &EvaluateOptions,
) -> Result<MetricsReport> {
    check_rows(g, phi)?;
    let frames = crate::frames::build_frame_field(g, &crate::frames::FrameOptions::new(phi.ncols()))?;
    let geo = g.all_pairs_geodesics(opts.dense_cap)?;
    if geo.iter().any(|d| !d.is_finite()) {
        return Err(Error::Disconnected);
    }
    let strain = local_metric_strain(g, phi, &frames)?;
    let ranks = rank_metrics(&geo, phi, opts.k)?;
    let corr = distance_correlations(&geo, phi, opts.max_pairs, opts.seed)?;
    let glbl_prm = params.map(|p| procrustes_error(phi, p, opts.procrustes)).transpose()?;
    let cluster = labels
        .map(|l| logistic_knn_cluster_metrics(phi, l, opts.label_k.unwrap_or(phi.ncols()), opts.logistic_scale))
        .transpose()?;
    Ok(MetricsReport {
        lcl_dist: local_distance_error(g, phi)?,
        lcl_mtrc: strain.strain,
        lcl_cont: ranks.continuity,
        lcl_trust: ranks.trustworthiness,
        lcl_prec: ranks.precision,
        lcl_rec: ranks.recall,
        lcl_f1: ranks.f1,
        glbl_mtrc: global_stress(&geo, phi, opts.stress)?,
        glbl_pearson: corr.pearson,
        glbl_spearman: corr.spearman,
        glbl_kendall: corr.kendall,
        glbl_prm,
        acc: cluster.map(|c| c.acc),
        nmi: cluster.map(|c| c.nmi),
        ari: cluster.map(|c| c.ari),
        strain_skipped: strain.skipped,
        pairs: corr.pairs,
    })
}
