//! Discrete 1-forms on the graph and the operators acting on them.
//!
//! A 1-form is stored as an edge function `Z` in the adjacency pattern,
//! `Z(i,j)` being its coefficient on the edge `v_i → v_j`. Projecting against
//! the inverse frames gives the per-vertex coordinates
//! `h_k(Z)[i] = Σ_j F_k(i,j) Z(i,j)`, from which the inner product, the
//! divergence and the Laplacian follow.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::frames::LocalFrameSet;
use crate::sparse::CsrMatrix;

/// Per-vertex `N × N` blocks, e.g. the projection tensor `a[i,k,m]`.
pub type VertexMatrices = Vec<DMatrix<f64>>;

/// `D_k = F_k − diag(rowsum F_k)` for each inverse-frame component, so that
/// `(D_k f)[i] = h_k(df)[i]`.
#[derive(Debug, Clone)]
pub struct DeviationStack {
    d: Vec<CsrMatrix>,
    dt: Vec<CsrMatrix>,
}

impl DeviationStack {
    pub fn new(frames: &LocalFrameSet) -> Self {
        let d: Vec<CsrMatrix> = frames
            .frm_inv()
            .iter()
            .map(|f| {
                let sums = f.row_sums();
                let n = f.nrows();
                let diag =
                    CsrMatrix::from_parts(n, n, (0..=n).collect(), (0..n).collect(), sums.iter().map(|s| -s).collect())
                        .expect("diagonal is well formed");
                f.add(&diag)
            })
            .collect();
        let dt = d.iter().map(CsrMatrix::transpose).collect();
        Self { d, dt }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn components(&self) -> &[CsrMatrix] {
        &self.d
    }

    /// `D_k f`.
    pub fn apply(&self, k: usize, f: &[f64]) -> Vec<f64> {
        self.d[k].mul_vec(f)
    }

    /// `D_kᵀ h`.
    pub fn apply_transpose(&self, k: usize, h: &[f64]) -> Vec<f64> {
        self.dt[k].mul_vec(h)
    }
}

/// `h[i] = Σ_j F(i,j) Z(i,j)`; `Z` must live inside the pattern of `F`.
pub fn edge_projection(z: &CsrMatrix, f: &CsrMatrix) -> Result<Vec<f64>> {
    if z.nrows() != f.nrows() || z.ncols() != f.ncols() {
        return Err(Error::PatternMismatch);
    }
    if z.same_pattern(f) {
        return Ok((0..f.nrows())
            .map(|i| {
                let r = f.row_range(i);
                f.data()[r.clone()].iter().zip(&z.data()[r]).map(|(a, b)| a * b).sum()
            })
            .collect());
    }
    if !z.pattern_within(f) {
        return Err(Error::PatternMismatch);
    }
    Ok((0..f.nrows())
        .map(|i| {
            let (cols, vals) = z.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * f.get(i, j).unwrap_or(0.0)).sum()
        })
        .collect())
}

fn projections(z: &CsrMatrix, frames: &LocalFrameSet) -> Result<Vec<Vec<f64>>> {
    frames.frm_inv().iter().map(|f| edge_projection(z, f)).collect()
}

/// Pointwise inner product `⟨η,ζ⟩[i] = Σ_k h_k(H)[i] h_k(Z)[i]`.
pub fn inner_product_field(h: &CsrMatrix, z: &CsrMatrix, frames: &LocalFrameSet) -> Result<Vec<f64>> {
    let ph = projections(h, frames)?;
    let pz = projections(z, frames)?;
    let mut out = vec![0.0; frames.n_vertices()];
    for (a, b) in ph.iter().zip(&pz) {
        for i in 0..out.len() {
            out[i] += a[i] * b[i];
        }
    }
    Ok(out)
}

/// `div ζ = Σ_k D_kᵀ h_k(Z)`, the dual of the differential.
pub fn divergence(z: &CsrMatrix, frames: &LocalFrameSet, dev: &DeviationStack) -> Result<Vec<f64>> {
    let pz = projections(z, frames)?;
    let mut out = vec![0.0; frames.n_vertices()];
    for (k, h) in pz.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(dev.apply_transpose(k, h)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Edge function of the differential of a vertex function: `Z(i,j) = f(j) − f(i)`.
pub fn differential(pattern: &CsrMatrix, f: &[f64]) -> CsrMatrix {
    let data = (0..pattern.nrows())
        .flat_map(|i| pattern.row(i).0.iter().map(move |&j| f[j] - f[i]))
        .collect();
    pattern.with_values(data)
}

/// `L = Σ_k D_kᵀ D_k`: symmetric, positive semidefinite, constants in the kernel.
pub fn assemble_laplacian(dev: &DeviationStack) -> CsrMatrix {
    let mut terms = dev.dt.iter().zip(&dev.d).map(|(dt, d)| dt.matmul(d));
    let first = terms.next().expect("at least one component");
    terms.fold(first, |acc, t| acc.add(&t))
}

/// `a[i][(k,m)] = Σ_j FrmInv_k(i,j) Frm_m(i,j)`.
pub fn alpha_projection(frames: &LocalFrameSet) -> VertexMatrices {
    let dim = frames.dim();
    let (inv, frm) = (frames.frm_inv(), frames.frm());
    (0..frames.n_vertices())
        .map(|i| {
            let r = inv[0].row_range(i);
            DMatrix::from_fn(dim, dim, |k, m| {
                inv[k].data()[r.clone()].iter().zip(&frm[m].data()[r.clone()]).map(|(a, b)| a * b).sum()
            })
        })
        .collect()
}
