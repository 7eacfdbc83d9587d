//! Local Euclidean frames from neighborhood MDS.
//!
//! For every vertex `v` the squared local geodesics over `{v} ∪ Γ²(v)` are
//! double-centered around `v`, the top `N` eigenpairs give the frame `E`, and
//! only the rows belonging to `Γ(v)` are kept. Each kept frame is paired with
//! a pseudo-inverse frame `E₋` scaled by the square root of the neighborhood
//! volume, and both are stored component-wise in the adjacency pattern.

mod volume;

pub use volume::{fallback_volume, neighborhood_volume, VolumeEstimate, VolumeMethod, VolumeOptions};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DistanceGraph;
use crate::sparse::CsrMatrix;

/// Relative eigenvalue threshold below which a direction counts as missing.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEigenData {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, rows aligned with the Γ² member order.
    pub eigenvectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralFrame {
    /// `|Γ²(v)| × N`.
    pub frame: DMatrix<f64>,
    /// The top `N` eigenpairs (zero-padded when fewer exist).
    pub eig: LocalEigenData,
    /// Fewer than `N` eigenvalues above `rank_tol · λ_max`.
    pub rank_deficient: bool,
}

/// How `E₋` is formed from the kept frame rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseRule {
    /// `√vol · E_Γ (E_Γᵀ E_Γ)⁺` over the kept rows, so that `E_ΓᵀΛE_Γ = I`
    /// holds on the neighborhood actually used.
    #[default]
    Restricted,
    /// `√vol · V S^{-1/2}` from the Γ² eigenpairs, restricted afterwards.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    pub dim: usize,
    pub rank_tol: f64,
    pub inverse: InverseRule,
    pub volume: VolumeOptions,
    /// Run the per-vertex work sequentially.
    pub sequential: bool,
}

impl FrameOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rank_tol: DEFAULT_RANK_TOL,
            inverse: InverseRule::default(),
            volume: VolumeOptions::default(),
            sequential: false,
        }
    }
}

/// Vertices whose local data needed special handling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub rank_deficient: Vec<usize>,
    pub clamped: Vec<usize>,
    pub volume_fallback: Vec<usize>,
    pub monte_carlo: Vec<usize>,
}

impl FrameDiagnostics {
    pub fn flagged(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .rank_deficient
            .iter()
            .chain(&self.clamped)
            .chain(&self.volume_fallback)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone)]
pub struct LocalFrameSet {
    dim: usize,
    frm: Vec<CsrMatrix>,
    frm_inv: Vec<CsrMatrix>,
    vol: Vec<f64>,
    pub diagnostics: FrameDiagnostics,
}

impl LocalFrameSet {
    /// Assemble from explicit components. All matrices must share one
    /// square pattern and volumes must be positive.
    pub fn from_parts(frm: Vec<CsrMatrix>, frm_inv: Vec<CsrMatrix>, vol: Vec<f64>) -> Result<Self> {
        let dim = frm.len();
        if dim == 0 || frm_inv.len() != dim {
            return Err(Error::InvalidInput("frame stacks must have the same nonzero length".into()));
        }
        let base = &frm[0];
        if base.nrows() != base.ncols() || base.nrows() != vol.len() {
            return Err(Error::InvalidInput("frame shape does not match the volume vector".into()));
        }
        if frm.iter().chain(&frm_inv).any(|m| !m.same_pattern(base)) {
            return Err(Error::PatternMismatch);
        }
        if let Some(i) = vol.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("volume of vertex {i} is not positive")));
        }
        Ok(Self { dim, frm, frm_inv, vol, diagnostics: FrameDiagnostics::default() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vol.len()
    }

    pub fn frm(&self) -> &[CsrMatrix] {
        &self.frm
    }

    pub fn frm_inv(&self) -> &[CsrMatrix] {
        &self.frm_inv
    }

    pub fn vol(&self) -> &[f64] {
        &self.vol
    }

    /// Kept frame rows of vertex `v` as a `|Γ(v)| × N` matrix.
    pub fn local_frame(&self, v: usize) -> DMatrix<f64> {
        self.local_rows(&self.frm, v)
    }

    pub fn local_inverse(&self, v: usize) -> DMatrix<f64> {
        self.local_rows(&self.frm_inv, v)
    }

    fn local_rows(&self, stack: &[CsrMatrix], v: usize) -> DMatrix<f64> {
        let range = stack[0].row_range(v);
        DMatrix::from_fn(range.len(), self.dim, |r, k| stack[k].data()[range.start + r])
    }

    /// `Λ = E₋E₋ᵀ / vol` for vertex `v`.
    pub fn lambda(&self, v: usize) -> DMatrix<f64> {
        let inv = self.local_inverse(v);
        &inv * inv.transpose() / self.vol[v]
    }

    /// Writes `k,i,j,frm,frm_inv` rows followed by nothing else; volumes are
    /// available separately through [`LocalFrameSet::vol`].
    pub fn write_triplets<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "i", "j", "frm", "frm_inv"])?;
        for k in 0..self.dim {
            for ((i, j, e), &einv) in self.frm[k].triplets().zip(self.frm_inv[k].data()) {
                out.write_record([k.to_string(), i.to_string(), j.to_string(), e.to_string(), einv.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Classical-MDS Gram matrix around index 0 of a squared-distance matrix.
///
/// The result is indexed by the remaining entries `1..m`.
pub fn gram_from_squared_distances(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows().saturating_sub(1);
    DMatrix::from_fn(n, n, |j, k| 0.5 * (m[(0, j + 1)] + m[(k + 1, 0)] - m[(j + 1, k + 1)]))
}

/// Eigenpairs sorted by descending eigenvalue, ties by original index.
fn sorted_eigen(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = 0.5 * (g + g.transpose());
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(g.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flip the sign of `v` so that its largest-magnitude entry is positive.
fn fix_sign(mut v: nalgebra::DVectorViewMut<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Rank-`dim` frame `E = V S^{1/2}` of a Gram matrix.
pub fn spectral_frame(g: &DMatrix<f64>, dim: usize, rank_tol: f64) -> SpectralFrame {
    let m = g.nrows();
    let (values, vectors) = sorted_eigen(g);
    let lmax = values.first().copied().unwrap_or(0.0).max(0.0);
    let thresh = rank_tol * lmax;

    let mut eigvals = vec![0.0; dim];
    let mut eigvecs = DMatrix::zeros(m, dim);
    for c in 0..dim.min(m) {
        eigvals[c] = values[c].max(0.0);
        eigvecs.set_column(c, &vectors.column(c));
        fix_sign(eigvecs.column_mut(c));
    }
    let rank_deficient = lmax <= 0.0 || eigvals.iter().any(|&l| l <= thresh);
    let mut frame = eigvecs.clone();
    for (c, &l) in eigvals.iter().enumerate() {
        frame.column_mut(c).scale_mut(l.sqrt());
    }
    SpectralFrame { frame, eig: LocalEigenData { eigenvalues: eigvals, eigenvectors: eigvecs }, rank_deficient }
}

/// `√vol · V S^{-1/2}` over all Γ² rows, clamping small eigenvalues at
/// `rank_tol · λ_max`. Returns the rows and whether clamping occurred.
pub fn frame_pseudoinverse(eig: &LocalEigenData, vol: f64, dim: usize, rank_tol: f64) -> (DMatrix<f64>, bool) {
    let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let floor = (rank_tol * lmax).max(f64::MIN_POSITIVE);
    let mut clamped = false;
    let mut out = eig.eigenvectors.columns(0, dim).into_owned();
    for c in 0..dim {
        let mut l = eig.eigenvalues[c];
        if l < floor || l <= rank_tol * lmax {
            l = floor;
            clamped = true;
        }
        out.column_mut(c).scale_mut(vol.sqrt() / l.sqrt());
    }
    (out, clamped)
}

/// `√vol · E (EᵀE)⁺` for the kept rows `E`, with the squared singular values
/// clamped at `rank_tol · σ_max²`. Returns the rows and whether clamping occurred.
pub fn restricted_pseudoinverse(rows: &DMatrix<f64>, vol: f64, rank_tol: f64) -> (DMatrix<f64>, bool) {
    let (m, dim) = rows.shape();
    if m == 0 {
        return (DMatrix::zeros(0, dim), true);
    }
    let svd = rows.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let sv = &svd.singular_values;
    let smax2 = sv.iter().fold(0.0_f64, |a, &s| a.max(s * s));
    let floor = (rank_tol * smax2).max(f64::MIN_POSITIVE);
    let mut clamped = sv.len() < dim;
    let inv: DVector<f64> = sv.map(|s| {
        let s2 = if s * s <= floor {
            clamped = true;
            floor
        } else {
            s * s
        };
        1.0 / s2.sqrt()
    });
    let out = u * DMatrix::from_diagonal(&inv) * vt * vol.sqrt();
    (out, clamped)
}

struct VertexFrame {
    frm: DMatrix<f64>,
    inv: DMatrix<f64>,
    vol: f64,
    rank_deficient: bool,
    clamped: bool,
    method: VolumeMethod,
}

fn vertex_frame(g: &DistanceGraph, v: usize, opts: &FrameOptions) -> Result<VertexFrame> {
    let lg = g.local_geodesics(v)?;
    let gram = gram_from_squared_distances(&lg.squared);
    let sf = spectral_frame(&gram, opts.dim, opts.rank_tol);

    let members = &lg.vertices[1..];
    let (nbrs, _) = g.neighbors(v);
    let pos: Vec<usize> = nbrs
        .iter()
        .map(|u| members.binary_search(u).expect("neighbors are Γ² members"))
        .collect();
    let kept = sf.frame.select_rows(&pos);

    let vopts = VolumeOptions {
        seed: opts.volume.seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..opts.volume
    };
    let est = neighborhood_volume(&kept, &vopts);
    let (inv, clamped) = match opts.inverse {
        InverseRule::Restricted => restricted_pseudoinverse(&kept, est.value, opts.rank_tol),
        InverseRule::Spectral => {
            let (all, c) = frame_pseudoinverse(&sf.eig, est.value, opts.dim, opts.rank_tol);
            (all.select_rows(&pos), c)
        }
    };
    Ok(VertexFrame {
        frm: kept,
        inv,
        vol: est.value,
        rank_deficient: sf.rank_deficient,
        clamped,
        method: est.method,
    })
}

/// Local frames for every vertex, assembled into the adjacency pattern.
pub fn build_frame_field(g: &DistanceGraph, opts: &FrameOptions) -> Result<LocalFrameSet> {
    if opts.dim == 0 {
        return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
    }
    let n = g.n_vertices();
    let results: Vec<Result<VertexFrame>> = if opts.sequential {
        (0..n).map(|v| vertex_frame(g, v, opts)).collect()
    } else {
        (0..n).into_par_iter().map(|v| vertex_frame(g, v, opts)).collect()
    };

    let mut disconnected = Vec::new();
    let mut frames = Vec::with_capacity(n);
    for (v, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => frames.push(f),
            Err(Error::DisconnectedNeighborhoods(_)) => disconnected.push(v),
            Err(e) => return Err(e),
        }
    }
    if !disconnected.is_empty() {
        return Err(Error::DisconnectedNeighborhoods(disconnected));
    }

    let adj = g.adjacency();
    let mut frm_data = vec![Vec::with_capacity(adj.nnz()); opts.dim];
    let mut inv_data = vec![Vec::with_capacity(adj.nnz()); opts.dim];
    let mut vol = Vec::with_capacity(n);
    let mut diag = FrameDiagnostics::default();
    for (v, f) in frames.into_iter().enumerate() {
        for r in 0..f.frm.nrows() {
            for k in 0..opts.dim {
                frm_data[k].push(f.frm[(r, k)]);
                inv_data[k].push(f.inv[(r, k)]);
            }
        }
        if f.rank_deficient {
            diag.rank_deficient.push(v);
        }
        if f.clamped {
            diag.clamped.push(v);
        }
        match f.method {
            VolumeMethod::Fallback => diag.volume_fallback.push(v),
            VolumeMethod::MonteCarlo => diag.monte_carlo.push(v),
            VolumeMethod::Exact => {}
        }
        vol.push(f.vol);
    }
    for (k, (a, b)) in frm_data.iter().zip(&inv_data).enumerate() {
        if a.iter().chain(b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("frame component {k}")));
        }
    }
    let frm = frm_data.into_iter().map(|d| adj.with_values(d)).collect();
    let frm_inv = inv_data.into_iter().map(|d| adj.with_values(d)).collect();
    Ok(LocalFrameSet { dim: opts.dim, frm, frm_inv, vol, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn path(n: usize) -> DistanceGraph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        DistanceGraph::symmetrize(n, &e).unwrap()
    }

    fn grid(w: usize) -> (DistanceGraph, DMatrix<f64>) {
        let pts = DMatrix::from_fn(w * w, 2, |i, c| if c == 0 { (i % w) as f64 } else { (i / w) as f64 });
        let mut e = Vec::new();
        for i in 0..w * w {
            let (x, y) = (i % w, i / w);
            if x + 1 < w {
                e.push((i, i + 1, 1.0));
            }
            if y + 1 < w {
                e.push((i, i + w, 1.0));
            }
        }
        (DistanceGraph::symmetrize(w * w, &e).unwrap(), pts)
    }

    #[test]
    fn gram_examples() {
        let ray = mat(3, 3, &[0., 1., 4., 1., 0., 1., 4., 1., 0.]);
        assert_eq!(gram_from_squared_distances(&ray), mat(2, 2, &[1., 2., 2., 4.]));
        let opposite = mat(3, 3, &[0., 1., 1., 1., 0., 4., 1., 4., 0.]);
        assert_eq!(gram_from_squared_distances(&opposite), mat(2, 2, &[1., -1., -1., 1.]));
        let single = mat(2, 2, &[0., 9., 9., 0.]);
        assert_eq!(gram_from_squared_distances(&single), mat(1, 1, &[9.]));
    }

    #[test]
    fn spectral_frame_examples() {
        let sf = spectral_frame(&mat(2, 2, &[1., -1., -1., 1.]), 1, DEFAULT_RANK_TOL);
        assert!((sf.frame[(0, 0)] - 1.0).abs() < 1e-12 && (sf.frame[(1, 0)] + 1.0).abs() < 1e-12);
        assert!(!sf.rank_deficient);

        let sf = spectral_frame(&mat(2, 2, &[1., 2., 2., 4.]), 1, DEFAULT_RANK_TOL);
        assert!((sf.frame[(0, 0)] - 1.0).abs() < 1e-12 && (sf.frame[(1, 0)] - 2.0).abs() < 1e-12);

        let sf = spectral_frame(&DMatrix::identity(2, 2), 2, DEFAULT_RANK_TOL);
        let ete = sf.frame.transpose() * &sf.frame;
        assert!((ete - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        for r in sf.frame.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let sf = spectral_frame(&mat(2, 2, &[1., 2., 2., 4.]), 2, DEFAULT_RANK_TOL);
        assert!(sf.rank_deficient);
        let (inv, clamped) = frame_pseudoinverse(&sf.eig, 1.0, 2, DEFAULT_RANK_TOL);
        assert!(clamped);
        assert!(inv.iter().all(|x| x.is_finite()));
        // more dimensions than neighbors
        let sf = spectral_frame(&mat(1, 1, &[4.0]), 3, DEFAULT_RANK_TOL);
        assert!(sf.rank_deficient);
        assert_eq!(sf.frame.shape(), (1, 3));
        assert!((sf.frame[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pseudoinverse_example() {
        let sf = spectral_frame(&mat(2, 2, &[1., -1., -1., 1.]), 1, DEFAULT_RANK_TOL);
        let (inv, clamped) = frame_pseudoinverse(&sf.eig, 2.0, 1, DEFAULT_RANK_TOL);
        assert!(!clamped);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((inv[(0, 0)] - h).abs() < 1e-12 && (inv[(1, 0)] + h).abs() < 1e-12);
        let (rinv, _) = restricted_pseudoinverse(&sf.frame, 2.0, DEFAULT_RANK_TOL);
        assert!((rinv - &inv).norm() < 1e-12);
        let lambda = &inv * inv.transpose() / 2.0;
        let id = sf.frame.transpose() * lambda * &sf.frame;
        assert!((id[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_frames() {
        let g = path(5);
        let fs = build_frame_field(&g, &FrameOptions::new(1)).unwrap();
        for v in 1..4 {
            let e = fs.local_frame(v);
            assert_eq!(e.nrows(), 2);
            assert!((e[(0, 0)].abs() - 1.0).abs() < 1e-12);
            assert!((e[(0, 0)] + e[(1, 0)]).abs() < 1e-12);
            assert!((fs.vol()[v] - 2.0).abs() < 1e-12);
        }
        assert!(fs.diagnostics.flagged().is_empty());
    }

    #[test]
    fn grid_interior_cross() {
        let (g, _) = grid(7);
        let fs = build_frame_field(&g, &FrameOptions::new(2)).unwrap();
        let v = 3 * 7 + 3;
        // neighbors ascending: down, left, right, up
        let e = fs.local_frame(v);
        let (down, left, right, up) = (e.row(0), e.row(1), e.row(2), e.row(3));
        assert!((left + right).norm() < 1e-10 && (up + down).norm() < 1e-10);
        assert!(left.dot(&up).abs() < 1e-10);
        assert!((left.norm() - up.norm()).abs() < 1e-10);
        assert!(left.norm() > 0.5);
    }

    #[test]
    fn euclidean_complete_neighborhoods() {
        // points in the plane, complete graph: local geodesics are Euclidean
        let pts = mat(5, 2, &[0., 0., 1., 0.2, 0.3, 1.1, -0.7, 0.4, 0.2, -0.9]);
        let mut e = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                e.push((i, j, (pts.row(i) - pts.row(j)).norm()));
            }
        }
        let g = DistanceGraph::symmetrize(5, &e).unwrap();
        let fs = build_frame_field(&g, &FrameOptions::new(2)).unwrap();
        for v in 0..5 {
            let ev = fs.local_frame(v);
            let (nbrs, ws) = g.neighbors(v);
            for r in 0..nbrs.len() {
                assert!((ev.row(r).norm() - ws[r]).abs() < 1e-8);
            }
            let lam = fs.lambda(v);
            let id = ev.transpose() * lam * &ev;
            assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-8);
        }
    }

    #[test]
    fn restricted_identity_on_subset_neighborhoods() {
        let (g, _) = grid(6);
        for rule in [InverseRule::Restricted, InverseRule::Spectral] {
            let mut o = FrameOptions::new(2);
            o.inverse = rule;
            let fs = build_frame_field(&g, &o).unwrap();
            let worst = (0..g.n_vertices())
                .map(|v| {
                    let e = fs.local_frame(v);
                    (e.transpose() * fs.lambda(v) * &e - DMatrix::<f64>::identity(2, 2)).norm()
                })
                .fold(0.0, f64::max);
            if rule == InverseRule::Restricted {
                assert!(worst < 1e-8, "{worst}");
            }
        }
    }

    #[test]
    fn deterministic_and_pattern() {
        let (g, _) = grid(5);
        let a = build_frame_field(&g, &FrameOptions::new(2)).unwrap();
        let mut o = FrameOptions::new(2);
        o.sequential = true;
        let b = build_frame_field(&g, &o).unwrap();
        for k in 0..2 {
            assert!(a.frm()[k].same_pattern(g.adjacency()));
            assert_eq!(a.frm()[k].data(), b.frm()[k].data());
            assert_eq!(a.frm_inv()[k].data(), b.frm_inv()[k].data());
        }
        assert_eq!(a.vol(), b.vol());
    }

    proptest! {
        #[test]
        fn euclidean_gram_is_psd(coords in proptest::collection::vec(-5.0..5.0f64, 12)) {
            let pts = DMatrix::from_row_slice(6, 2, &coords);
            let m = DMatrix::from_fn(6, 6, |a, b| (pts.row(a) - pts.row(b)).norm_squared());
            let g = gram_from_squared_distances(&m);
            let eig = g.clone().symmetric_eigen();
            let norm = g.norm().max(1e-300);
            prop_assert!(eig.eigenvalues.min() >= -1e-10 * norm);
            let sf = spectral_frame(&g, 2, DEFAULT_RANK_TOL);
            for j in 0..5 {
                let want = g[(j, j)];
                prop_assert!((sf.frame.row(j).norm_squared() - want).abs() <= 1e-8 * (1.0 + norm));
            }
        }

        #[test]
        fn volume_scales(s in 0.1..10.0f64, coords in proptest::collection::vec(-3.0..3.0f64, 8)) {
            let rows = DMatrix::from_row_slice(4, 2, &coords);
            let o = VolumeOptions::default();
            let a = neighborhood_volume(&rows, &o);
            let b = neighborhood_volume(&(rows * s), &o);
            prop_assert!((b.value - s * s * a.value).abs() <= 1e-9 * b.value.max(1e-300));
        }
    }
}
