//! The alternating minimization: Poisson solves for the embedding given the
//! alignment field, per-vertex orthogonal alignments given the embedding.
//!
//! With `P_i[k,m] = (D_k φ_m)[i]` and the rotated projections `a_i`, the
//! objective is `J = ½ Σ_i ‖P_i − a_i‖_F²`. Each pass solves
//! `L φ_m = Σ_k D_kᵀ a[:,k,m]`, aligns every vertex by the polar factor of
//! `B_i = P_iᵀ a_i`, and removes the common global rotation.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{build_frame_field, FrameDiagnostics, FrameOptions, LocalFrameSet};
use crate::graph::DistanceGraph;
use crate::linsolve::{ict_factor, pcg_solve, IctFactor, PcgOptions, DEFAULT_DROP_TOL, DEFAULT_SHIFT};
use crate::operators::{alpha_projection, assemble_laplacian, DeviationStack, VertexMatrices};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_VAR_TOL: f64 = 1e-16;
pub const DEFAULT_MAXIT: usize = 500;
pub const DEFAULT_ANDERSON_DEPTH: usize = 5;
pub const DEFAULT_LANDMARKS: usize = 256;

/// Starting alignment field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// `Q̃ = I` everywhere.
    Identity,
    /// Frames synchronized along a breadth-first spanning tree by Procrustes
    /// fits on shared neighbors.
    TreeSync,
    /// Frames synchronized globally through the lowest eigenvectors of the
    /// connection Laplacian built from the same fits.
    Spectral,
    /// Alignments fitted to a landmark MDS embedding of graph geodesics.
    #[default]
    GeodesicMds,
}

/// Extrapolation of the embedding sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    /// Plain alternation.
    None,
    /// Anderson mixing over the last `depth` passes. A mixed embedding is
    /// kept only if its aligned objective does not exceed that of the plain
    /// pass; otherwise the plain pass is taken and the history cleared.
    Anderson { depth: usize },
}

impl Default for Acceleration {
    fn default() -> Self {
        Acceleration::Anderson { depth: DEFAULT_ANDERSON_DEPTH }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub dim: usize,
    pub tol: f64,
    pub var_tol: f64,
    pub maxit: usize,
    pub drop_tol: f64,
    pub shift: f64,
    pub pcg: PcgOptions,
    pub init: InitRule,
    /// Landmark count for [`InitRule::GeodesicMds`].
    pub landmarks: usize,
    pub acceleration: Acceleration,
    /// Sequential execution with fixed reduction order everywhere.
    pub deterministic: bool,
    pub frames: FrameOptions,
}

impl EmbedOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tol: DEFAULT_TOL,
            var_tol: DEFAULT_VAR_TOL,
            maxit: DEFAULT_MAXIT,
            drop_tol: DEFAULT_DROP_TOL,
            shift: DEFAULT_SHIFT,
            pcg: PcgOptions::default(),
            init: InitRule::default(),
            landmarks: DEFAULT_LANDMARKS,
            acceleration: Acceleration::default(),
            deterministic: false,
            frames: FrameOptions::new(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n × N`, zero column means.
    pub coords: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentField {
    /// Accumulated orthogonal alignments `Q̃_i`.
    pub q: VertexMatrices,
    /// Projections rotated by `Q̃`: `a_i = a⁰_i Q̃_i`.
    pub a: VertexMatrices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// Objective right after the Poisson solves.
    #[serde(rename = "J")]
    pub j: f64,
    pub err: f64,
    pub pcg_iters: usize,
    pub seconds: f64,
    /// Objective after the alignment step, before the next solve.
    pub j_aligned: f64,
    /// `½ Σ_m ‖d(φ_m − φ_m^prev)‖²` against the previous, gauge-rotated embedding.
    pub step_energy: f64,
    /// Whether the mixed embedding replaced the plain pass.
    #[serde(default)]
    pub accelerated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Iterations whose objective rose by more than `1e-8·J`.
    pub monotonicity_violations: Vec<usize>,
    /// Poisson solves that hit their iteration cap.
    pub unconverged_solves: usize,
    pub ict_shift: f64,
    pub ict_retries: usize,
    pub init: InitRule,
    pub frames: FrameDiagnostics,
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub embedding: Embedding,
    pub alignment: AlignmentField,
    pub report: IterationReport,
}

/// `DaQ[:,m] = Σ_k D_kᵀ a[:,k,m]`.
pub fn rhs_divergence(a: &VertexMatrices, dev: &DeviationStack) -> DMatrix<f64> {
    let (n, dim) = (a.len(), dev.dim());
    let mut out = DMatrix::zeros(n, dim);
    for m in 0..dim {
        for k in 0..dim {
            let h: Vec<f64> = a.iter().map(|ai| ai[(k, m)]).collect();
            let col = dev.apply_transpose(k, &h);
            for (i, v) in col.into_iter().enumerate() {
                out[(i, m)] += v;
            }
        }
    }
    out
}

/// `P_i[k,m] = (D_k φ_m)[i]`.
pub fn differential_blocks(phi: &DMatrix<f64>, dev: &DeviationStack) -> VertexMatrices {
    let (n, dim) = (phi.nrows(), dev.dim());
    let mut p = vec![DMatrix::zeros(dim, dim); n];
    for m in 0..dim {
        let col: Vec<f64> = phi.column(m).iter().copied().collect();
        for k in 0..dim {
            for (i, v) in dev.apply(k, &col).into_iter().enumerate() {
                p[i][(k, m)] = v;
            }
        }
    }
    p
}

/// `B_i = P_iᵀ a_i`, so `B[i][(m,n)] = Σ_k (D_k φ_m)[i] a[i][(k,n)]`.
pub fn compute_b(phi: &DMatrix<f64>, a: &VertexMatrices, dev: &DeviationStack) -> VertexMatrices {
    differential_blocks(phi, dev).iter().zip(a).map(|(p, ai)| p.transpose() * ai).collect()
}

/// `J = ½ Σ_i ‖P_i − a_i‖_F²`.
pub fn objective(phi: &DMatrix<f64>, a: &VertexMatrices, dev: &DeviationStack) -> f64 {
    0.5 * differential_blocks(phi, dev).iter().zip(a).map(|(p, ai)| (p - ai).norm_squared()).sum::<f64>()
}

/// Orthogonal `Q` maximizing `tr(B Q)`: `Q = R Lᵀ` for `B = L Σ Rᵀ`.
///
/// Singular triplets are sorted by descending value, and each left vector is
/// signed so that its largest-magnitude entry is positive. `B = 0` gives `I`.
pub fn polar_align(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    if b.iter().all(|&x| x == 0.0) {
        return DMatrix::identity(n, n);
    }
    let svd = b.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]).then(x.cmp(&y)));
    let mut q = DMatrix::zeros(n, n);
    for &c in &order {
        let mut l = u.column(c).into_owned();
        let mut r = vt.row(c).transpose();
        let big = l.iamax();
        if l[big] < 0.0 {
            l.neg_mut();
            r.neg_mut();
        }
        q += r * l.transpose();
    }
    q
}

/// Global rotation `Q₀ = polar(Σ_i B_i)`, absorbed as `Q_i ← Q_i Q₀ᵀ`.
///
/// Right multiplication turns the gauge into a single orthogonal change of
/// coordinates of the next embedding, leaving the objective unchanged.
pub fn gauge_fix(b: &VertexMatrices, q: &mut VertexMatrices) -> DMatrix<f64> {
    let dim = q.first().map_or(0, DMatrix::nrows);
    let sum = b.iter().fold(DMatrix::zeros(dim, dim), |acc, bi| acc + bi);
    let q0 = polar_align(&sum);
    let q0t = q0.transpose();
    for qi in q.iter_mut() {
        *qi = &*qi * &q0t;
    }
    q0
}

/// `sqrt(mean_i ‖Q_oldᵢᵀ Q_newᵢ − I‖₂²)` with the spectral norm.
pub fn convergence_error(q_old: &VertexMatrices, q_new: &VertexMatrices) -> f64 {
    if q_old.is_empty() {
        return 0.0;
    }
    let total: f64 = q_old
        .iter()
        .zip(q_new)
        .map(|(o, n)| {
            let dim = o.nrows();
            let d = o.transpose() * n - DMatrix::<f64>::identity(dim, dim);
            let s = d.singular_values().max();
            s * s
        })
        .sum();
    (total / q_old.len() as f64).sqrt()
}

fn check_connected(g: &DistanceGraph) -> Result<()> {
    let n = g.n_vertices();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &u in g.neighbors(v).0 {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::Disconnected)
    }
}

/// Orthogonal `R` with `X_i R ≈ X_j`, where `X_i`, `X_j` are the coordinates
/// of `{i, j} ∪ (Γ(i) ∩ Γ(j))` in the frames of `i` and `j`, centered.
/// Consistent alignments then satisfy `Q̃_i ≈ R Q̃_j`.
fn relative_rotation(g: &DistanceGraph, frames: &LocalFrameSet, i: usize, j: usize) -> DMatrix<f64> {
    let dim = frames.dim();
    let (ni, nj) = (g.neighbors(i).0, g.neighbors(j).0);
    let mut shared = vec![i, j];
    shared.extend(ni.iter().filter(|u| nj.binary_search(u).is_ok()));
    let fill = |v: usize, nbrs: &[usize]| {
        let e = frames.local_frame(v);
        let mut x = DMatrix::zeros(shared.len(), dim);
        for (r, &u) in shared.iter().enumerate() {
            if u != v {
                let pos = nbrs.binary_search(&u).expect("shared point is a neighbor");
                x.set_row(r, &e.row(pos));
            }
        }
        let mean = x.row_mean();
        for mut row in x.row_iter_mut() {
            row -= &mean;
        }
        x
    };
    let (xi, xj) = (fill(i, ni), fill(j, nj));
    polar_align(&(xj.transpose() * xi))
}

/// Alignment field synchronizing neighboring frames along a BFS tree:
/// each tree edge `i → j` propagates `Q̃_j = Rᵀ Q̃_i` with `R` the orthogonal
/// fit of the two frames on their shared points.
pub fn tree_sync_alignment(g: &DistanceGraph, frames: &LocalFrameSet) -> VertexMatrices {
    let (n, dim) = (g.n_vertices(), frames.dim());
    let mut q: Vec<Option<DMatrix<f64>>> = vec![None; n];
    for root in 0..n {
        if q[root].is_some() {
            continue;
        }
        q[root] = Some(DMatrix::identity(dim, dim));
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            let qi = q[i].clone().expect("visited");
            for &j in g.neighbors(i).0 {
                if q[j].is_some() {
                    continue;
                }
                q[j] = Some(relative_rotation(g, frames, i, j).transpose() * &qi);
                queue.push_back(j);
            }
        }
    }
    q.into_iter().map(|x| x.expect("all vertices visited")).collect()
}

const SYNC_SHIFT: f64 = 1e-4;
const SYNC_MAX_SWEEPS: usize = 30;
const SYNC_TOL: f64 = 1e-8;

/// Alignment field from the `N` lowest eigenvectors of the connection
/// Laplacian `Σ_edges ‖Q̃_i − R_ij Q̃_j‖²`, each vertex block rounded to the
/// nearest orthogonal matrix.
///
/// The eigenvectors come from inverse subspace iteration on the slightly
/// shifted operator, started from the tree field.
pub fn spectral_sync_alignment(g: &DistanceGraph, frames: &LocalFrameSet) -> Result<VertexMatrices> {
    let (n, dim) = (g.n_vertices(), frames.dim());
    let size = n * dim;
    let mut trip = Vec::new();
    for i in 0..n {
        let deg = g.degree(i) as f64;
        for c in 0..dim {
            trip.push((i * dim + c, i * dim + c, deg * (1.0 + SYNC_SHIFT)));
        }
        for &j in g.neighbors(i).0 {
            if j < i {
                continue;
            }
            let r = relative_rotation(g, frames, i, j);
            for a in 0..dim {
                for b in 0..dim {
                    trip.push((i * dim + a, j * dim + b, -r[(a, b)]));
                    trip.push((j * dim + b, i * dim + a, -r[(a, b)]));
                }
            }
        }
    }
    let op = crate::sparse::CsrMatrix::from_triplets(size, size, &trip);
    let factor = ict_factor(&op, DEFAULT_DROP_TOL, DEFAULT_SHIFT)?;
    let pcg = PcgOptions { tol: SYNC_TOL, maxit: Some(size) };

    let tree = tree_sync_alignment(g, frames);
    let mut x = DMatrix::from_fn(size, dim, |r, c| tree[r / dim][(r % dim, c)]);
    x = x.qr().q();
    for _ in 0..SYNC_MAX_SWEEPS {
        let mut y = DMatrix::zeros(size, dim);
        for c in 0..dim {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            let (sol, _) = crate::linsolve::pcg_spd(&op, &col, &factor, Some(&col), &pcg)?;
            y.set_column(c, &DVector::from_vec(sol));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("synchronization eigenvectors".into()));
        }
        let y = y.qr().q();
        let change = (&y - &x * (x.transpose() * &y)).norm();
        x = y;
        if change < SYNC_TOL {
            break;
        }
    }
    Ok((0..n)
        .map(|i| polar_align(&x.rows(i * dim, dim).transpose().into_owned()))
        .collect())
}

/// Classical MDS of graph geodesics through `landmarks` farthest-point
/// landmarks; the remaining vertices are placed by distance triangulation.
/// Coordinates whose eigenvalue is not positive are zero. Columns have zero
/// mean.
pub fn landmark_mds(g: &DistanceGraph, dim: usize, landmarks: usize) -> Result<DMatrix<f64>> {
    let n = g.n_vertices();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let m = landmarks.clamp(dim + 1, n.max(dim + 1)).min(n);
    let mut chosen = Vec::with_capacity(m);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut nearest = vec![f64::INFINITY; n];
    let mut next = 0;
    while chosen.len() < m {
        let row = g.dijkstra(next);
        if row.iter().any(|d| !d.is_finite()) {
            return Err(Error::Disconnected);
        }
        for (v, &d) in row.iter().enumerate() {
            nearest[v] = nearest[v].min(d);
        }
        chosen.push(next);
        rows.push(row);
        next = (0..n).fold(0, |best, v| if nearest[v] > nearest[best] { v } else { best });
        if nearest[next] == 0.0 {
            break;
        }
    }
    let m = chosen.len();
    let sq = DMatrix::from_fn(m, n, |l, v| rows[l][v] * rows[l][v]);
    let delta = DMatrix::from_fn(m, m, |a, b| sq[(a, chosen[b])]);
    let col_mean = delta.row_mean();
    let all_mean = col_mean.mean();
    let b = DMatrix::from_fn(m, m, |a, c| -0.5 * (delta[(a, c)] - col_mean[a] - col_mean[c] + all_mean));
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut phi = DMatrix::zeros(n, dim);
    for (c, &e) in order.iter().take(dim).enumerate() {
        let lam = eig.eigenvalues[e];
        if lam <= 1e-12 * eig.eigenvalues[order[0]].abs() {
            continue;
        }
        let mut vec = eig.eigenvectors.column(e).into_owned();
        let big = vec.iamax();
        if vec[big] < 0.0 {
            vec.neg_mut();
        }
        for v in 0..n {
            let s: f64 = (0..m).map(|l| vec[l] * (col_mean[l] - sq[(l, v)])).sum();
            phi[(v, c)] = 0.5 * s / lam.sqrt();
        }
    }
    for mut col in phi.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(phi)
}

/// Per-vertex alignments minimizing the objective for a fixed embedding.
pub fn alignment_for(phi: &DMatrix<f64>, frames: &LocalFrameSet, deterministic: bool) -> VertexMatrices {
    let dev = DeviationStack::new(frames);
    let b = compute_b(phi, &alpha_projection(frames), &dev);
    if deterministic {
        b.iter().map(polar_align).collect()
    } else {
        b.par_iter().map(polar_align).collect()
    }
}

/// Build frames and operators from `g`, then run the alternating scheme.
pub fn run_embedding(g: &DistanceGraph, opts: &EmbedOptions) -> Result<EmbedResult> {
    check_connected(g)?;
    let mut fopts = opts.frames;
    fopts.dim = opts.dim;
    fopts.sequential |= opts.deterministic;
    let frames = build_frame_field(g, &fopts)?;
    let init = match opts.init {
        InitRule::TreeSync => Some(tree_sync_alignment(g, &frames)),
        InitRule::Spectral => Some(spectral_sync_alignment(g, &frames)?),
        InitRule::GeodesicMds => {
            let phi0 = landmark_mds(g, opts.dim, opts.landmarks)?;
            Some(alignment_for(&phi0, &frames, opts.deterministic))
        }
        InitRule::Identity => None,
    };
    let mut res = run_with_frames(&frames, opts, init)?;
    res.report.init = opts.init;
    Ok(res)
}

/// The alternating scheme on prebuilt frames, starting from `initial_q`
/// (identity when `None`). The report's init rule is `opts.init` when a
/// field is given and [`InitRule::Identity`] otherwise.
pub fn run_with_frames(
    frames: &LocalFrameSet,
    opts: &EmbedOptions,
    initial_q: Option<VertexMatrices>,
) -> Result<EmbedResult> {
    let (n, dim) = (frames.n_vertices(), frames.dim());
    if dim != opts.dim {
        return Err(Error::InvalidInput(format!("frames have dimension {} but {} was requested", dim, opts.dim)));
    }
    if n < 2 {
        return Err(Error::InvalidInput("at least two vertices are required".into()));
    }
    let init_rule = if initial_q.is_some() { opts.init } else { InitRule::Identity };
    let dev = DeviationStack::new(frames);
    let lap = assemble_laplacian(&dev);
    let factor = ict_factor(&lap, opts.drop_tol, opts.shift)?;
    let a0 = alpha_projection(frames);
    let mut q = initial_q.unwrap_or_else(|| vec![DMatrix::identity(dim, dim); n]);
    if q.len() != n || q.iter().any(|m| m.shape() != (dim, dim)) {
        return Err(Error::InvalidInput("initial alignment has the wrong shape".into()));
    }
    let mut a: VertexMatrices = a0.iter().zip(&q).map(|(ai, qi)| ai * qi).collect();

    let mut phi_prev = DMatrix::zeros(n, dim);
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut unconverged = 0;
    let mut prev_err: Option<f64> = None;
    let mut prev_j: Option<f64> = None;
    let mut stop = StopReason::MaxIterations;
    let mut phi = phi_prev.clone();
    let mut mixer = match opts.acceleration {
        Acceleration::Anderson { depth } if depth > 0 => Some(Anderson::new(depth)),
        _ => None,
    };
    let polar_all = |b: &VertexMatrices| -> VertexMatrices {
        if opts.deterministic {
            b.iter().map(polar_align).collect()
        } else {
            b.par_iter().map(polar_align).collect()
        }
    };

    for it in 1..=opts.maxit {
        let start = Instant::now();
        let rhs = rhs_divergence(&a, &dev);
        let (solved, iters, failed) = solve_columns(&lap, &rhs, &factor, &phi_prev, opts)?;
        unconverged += failed;
        phi = solved;
        for mut c in phi.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding at iteration {it}")));
        }

        let j = objective(&phi, &a, &dev);
        let step_energy = 0.5
            * differential_blocks(&(&phi - &phi_prev), &dev).iter().map(DMatrix::norm_squared).sum::<f64>();
        if let Some(pj) = prev_j {
            if j > pj + 1e-8 * pj.abs() {
                violations.push(it);
            }
        }

        let b = compute_b(&phi, &a, &dev);
        let mut q_step = polar_all(&b);
        let a_aligned: VertexMatrices = a.iter().zip(&q_step).map(|(ai, qi)| ai * qi).collect();
        let mut j_aligned = objective(&phi, &a_aligned, &dev);
        let q0 = gauge_fix(&b, &mut q_step);
        let mut next_phi = &phi * q0.transpose();
        let mut next_q: VertexMatrices = q.iter().zip(&q_step).map(|(qi, si)| qi * si).collect();
        let mut accelerated = false;
        if let Some(mx) = mixer.as_mut() {
            if let Some(cand) = mx.mix(&phi_prev, &next_phi) {
                let cq = polar_all(&compute_b(&cand, &a0, &dev));
                let ca: VertexMatrices = a0.iter().zip(&cq).map(|(ai, qi)| ai * qi).collect();
                let cj = objective(&cand, &ca, &dev);
                if cj.is_finite() && cj <= j {
                    next_phi = cand;
                    next_q = cq;
                    j_aligned = cj;
                    accelerated = true;
                } else {
                    mx.reset();
                }
            }
        }
        let err = convergence_error(&q, &next_q);
        if !err.is_finite() || !j.is_finite() {
            return Err(Error::NonFinite(format!("alignment at iteration {it}")));
        }

        records.push(IterationRecord {
            n: it,
            j,
            err,
            pcg_iters: iters,
            seconds: start.elapsed().as_secs_f64(),
            j_aligned,
            step_energy,
            accelerated,
        });
        prev_j = Some(j_aligned.min(j));

        if err < opts.tol {
            stop = StopReason::Converged;
            break;
        }
        if prev_err.is_some_and(|p| (err - p).abs() < opts.var_tol) {
            stop = StopReason::Stagnated;
            break;
        }
        prev_err = Some(err);
        if it == opts.maxit {
            break;
        }

        a = a0.iter().zip(&next_q).map(|(ai, qi)| ai * qi).collect();
        q = next_q;
        phi_prev = next_phi;
    }

    let report = IterationReport {
        records,
        stop,
        monotonicity_violations: violations,
        unconverged_solves: unconverged,
        ict_shift: factor.shift(),
        ict_retries: factor.retries(),
        init: init_rule,
        frames: frames.diagnostics.clone(),
    };
    Ok(EmbedResult { embedding: Embedding { coords: phi }, alignment: AlignmentField { q, a }, report })
}

/// Type-II Anderson mixing on flattened embeddings.
struct Anderson {
    depth: usize,
    last: Option<(DVector<f64>, DVector<f64>)>,
    dx: VecDeque<DVector<f64>>,
    df: VecDeque<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, last: None, dx: VecDeque::new(), df: VecDeque::new() }
    }

    fn reset(&mut self) {
        self.last = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Records the pass `x → t` and returns the mixed iterate, if any history
    /// is available.
    fn mix(&mut self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let t = DVector::from_column_slice(t.as_slice());
        let f = &t - DVector::from_column_slice(x.as_slice());
        if let Some((t_old, f_old)) = self.last.take() {
            if self.dx.len() == self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
            self.dx.push_back(&t - t_old);
            self.df.push_back(&f - f_old);
        }
        self.last = Some((t.clone(), f.clone()));
        if self.df.is_empty() {
            return None;
        }
        let m = self.df.len();
        let fm = DMatrix::from_columns(&self.df.iter().cloned().collect::<Vec<_>>());
        let svd = fm.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let gamma = svd.solve(&f, tol).ok()?;
        let mut out = t;
        for k in 0..m {
            out.axpy(-gamma[k], &self.dx[k], 1.0);
        }
        out.iter().all(|v| v.is_finite()).then(|| DMatrix::from_column_slice(x.nrows(), x.ncols(), out.as_slice()))
    }
}

fn solve_columns(
    lap: &crate::sparse::CsrMatrix,
    rhs: &DMatrix<f64>,
    factor: &IctFactor,
    warm: &DMatrix<f64>,
    opts: &EmbedOptions,
) -> Result<(DMatrix<f64>, usize, usize)> {
    let solve = |m: usize| {
        let b: Vec<f64> = rhs.column(m).iter().copied().collect();
        let x0: Vec<f64> = warm.column(m).iter().copied().collect();
        pcg_solve(lap, &b, factor, Some(&x0), &opts.pcg)
    };
    let cols: Vec<_> = if opts.deterministic {
        (0..rhs.ncols()).map(solve).collect::<Result<_>>()?
    } else {
        (0..rhs.ncols()).into_par_iter().map(solve).collect::<Result<_>>()?
    };
    let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    let (mut iters, mut failed) = (0, 0);
    for (m, (x, st)) in cols.into_iter().enumerate() {
        out.set_column(m, &nalgebra::DVector::from_vec(x));
        iters += st.iterations;
        failed += usize::from(!st.converged);
    }
    Ok((out, iters, failed))
}
