//! Sparse solver for the singular graph Laplacian.
//!
//! A thresholded incomplete Cholesky factor of the diagonally shifted matrix
//! preconditions conjugate gradients; the constant kernel is deflated by
//! keeping right-hand side, residuals and iterates at zero mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_DROP_TOL: f64 = 1e-3;
pub const DEFAULT_SHIFT: f64 = 1e-8;
pub const DEFAULT_PCG_TOL: f64 = 1e-10;
const MAX_RETRIES: usize = 8;

/// Lower-triangular incomplete factor `L` with `A + σ·diag(A) ≈ L Lᵀ`,
/// stored by columns with the diagonal first.
#[derive(Debug, Clone)]
pub struct IctFactor {
    n: usize,
    colptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    shift: f64,
    retries: usize,
    compensated: bool,
}

impl IctFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The relative diagonal shift that produced this factor.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Number of shift increases needed after breakdowns.
    pub fn retries(&self) -> usize {
        self.retries
    }

    /// Whether dropped entries were compensated on the diagonal after the
    /// shift retries were exhausted.
    pub fn compensated(&self) -> bool {
        self.compensated
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Dense copy of `L`, for tests and diagnostics.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                m[(self.rows[p], j)] = self.vals[p];
            }
        }
        m
    }

    /// `z = (L Lᵀ)⁻¹ r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for j in 0..self.n {
            let (s, e) = (self.colptr[j], self.colptr[j + 1]);
            z[j] /= self.vals[s];
            let zj = z[j];
            for p in (s + 1)..e {
                z[self.rows[p]] -= self.vals[p] * zj;
            }
        }
        for j in (0..self.n).rev() {
            let (s, e) = (self.colptr[j], self.colptr[j + 1]);
            let mut acc = z[j];
            for p in (s + 1)..e {
                acc -= self.vals[p] * z[self.rows[p]];
            }
            z[j] = acc / self.vals[s];
        }
    }
}

/// Thresholded incomplete Cholesky of a symmetric matrix.
///
/// `shift` is relative: `σ·A(j,j)` is added to each pivot. A non-positive
/// pivot restarts the factorization with the shift doubled (or set to
/// [`DEFAULT_SHIFT`] when it was zero), at most eight times.
pub fn ict_factor(a: &CsrMatrix, drop_tol: f64, shift: f64) -> Result<IctFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    if !(drop_tol >= 0.0 && shift >= 0.0) {
        return Err(Error::InvalidInput("drop tolerance and shift must be nonnegative".into()));
    }
    let mut sigma = shift;
    for retry in 0..=MAX_RETRIES {
        if let Ok(mut f) = try_ict(a, drop_tol, sigma, false) {
            f.retries = retry;
            return Ok(f);
        }
        if retry < MAX_RETRIES {
            sigma = if sigma == 0.0 { DEFAULT_SHIFT } else { 2.0 * sigma };
        }
    }
    // dropped fill compensated on the diagonal keeps the remainder semidefinite
    match try_ict(a, drop_tol, sigma, true) {
        Ok(mut f) => {
            f.retries = MAX_RETRIES + 1;
            f.compensated = true;
            Ok(f)
        }
        Err(column) => Err(Error::FactorizationBreakdown { column, shift: sigma }),
    }
}

fn try_ict(a: &CsrMatrix, drop_tol: f64, sigma: f64, compensate: bool) -> std::result::Result<IctFactor, usize> {
    let n = a.nrows();
    let mut colptr = vec![0usize];
    let mut rows: Vec<usize> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    // entries L(i,k), k < i, grouped by row i
    let mut row_lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    // per column: position of the first stored row not yet passed
    let mut cursor: Vec<usize> = Vec::with_capacity(n);

    let mut w = vec![0.0; n];
    let mut used = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut extra = vec![0.0; n];
    let diag = a.diagonal();

    for j in 0..n {
        let (cols, avals) = a.row(j);
        let mut col_norm2 = 0.0;
        for (&i, &v) in cols.iter().zip(avals) {
            if i >= j {
                w[i] = v;
                used[i] = true;
                touched.push(i);
                col_norm2 += v * v;
            }
        }
        if !used[j] {
            used[j] = true;
            touched.push(j);
        }
        let ajj = w[j];
        w[j] += sigma * ajj.abs() + extra[j];

        for &(k, ljk) in &row_lists[j] {
            let end = colptr[k + 1];
            let mut p = cursor[k];
            while p < end && rows[p] < j {
                p += 1;
            }
            cursor[k] = p;
            for q in p..end {
                let i = rows[q];
                if !used[i] {
                    used[i] = true;
                    touched.push(i);
                    w[i] = 0.0;
                }
                w[i] -= vals[q] * ljk;
            }
        }

        let thresh = drop_tol * col_norm2.sqrt();
        if compensate {
            for &i in &touched {
                if i > j && w[i] != 0.0 && w[i].abs() < thresh {
                    let gamma = (diag[i].abs() / diag[j].abs().max(f64::MIN_POSITIVE)).sqrt().max(f64::MIN_POSITIVE);
                    extra[i] += w[i].abs() * gamma;
                    w[j] += w[i].abs() / gamma;
                }
            }
        }
        let pivot = w[j];
        if !(pivot.is_finite() && pivot > 0.0) {
            for &i in &touched {
                used[i] = false;
                w[i] = 0.0;
            }
            return Err(j);
        }
        let d = pivot.sqrt();
        touched.sort_unstable();
        rows.push(j);
        vals.push(d);
        for &i in &touched {
            if i > j && w[i].abs() >= thresh && w[i] != 0.0 {
                let v = w[i] / d;
                rows.push(i);
                vals.push(v);
                row_lists[i].push((j, v));
            }
            used[i] = false;
            w[i] = 0.0;
        }
        touched.clear();
        cursor.push(colptr[j] + 1);
        colptr.push(rows.len());
    }
    Ok(IctFactor { n, colptr, rows, vals, shift: sigma, retries: 0, compensated: compensate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgOptions {
    /// Relative residual target on the mean-free right-hand side.
    pub tol: f64,
    /// `None` selects `10·√n`.
    pub maxit: Option<usize>,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_PCG_TOL, maxit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub iterations: usize,
    /// Final `‖b − Lx‖ / ‖b‖` on the deflated system.
    pub relative_residual: f64,
    pub converged: bool,
    /// Mean removed from the right-hand side.
    pub rhs_mean: f64,
}

fn remove_mean(v: &mut [f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `L x = P b` with `P` the zero-mean projector, starting from `x0`
/// (or zero). The returned `x` has zero mean. Reaching `maxit` is not an
/// error: the best iterate is returned with `converged = false`.
pub fn pcg_solve(
    l: &CsrMatrix,
    b: &[f64],
    m: &IctFactor,
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveStatus)> {
    pcg_impl(l, b, m, x0, opts, |_| {})
}

pub(crate) fn pcg_impl(
    l: &CsrMatrix,
    b: &[f64],
    m: &IctFactor,
    x0: Option<&[f64]>,
    opts: &PcgOptions,
    on_iterate: impl FnMut(&[f64]),
) -> Result<(Vec<f64>, SolveStatus)> {
    pcg_core(l, b, m, x0, opts, true, on_iterate)
}

/// Plain preconditioned CG for a nonsingular SPD system, without deflation.
pub(crate) fn pcg_spd(
    l: &CsrMatrix,
    b: &[f64],
    m: &IctFactor,
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveStatus)> {
    pcg_core(l, b, m, x0, opts, false, |_| {})
}

fn pcg_core(
    l: &CsrMatrix,
    b: &[f64],
    m: &IctFactor,
    x0: Option<&[f64]>,
    opts: &PcgOptions,
    deflate: bool,
    mut on_iterate: impl FnMut(&[f64]),
) -> Result<(Vec<f64>, SolveStatus)> {
    let project = |v: &mut [f64]| if deflate { remove_mean(v) } else { 0.0 };
    let n = l.nrows();
    if b.len() != n || m.n() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::InvalidInput("dimension mismatch in solve".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side".into()));
    }
    let maxit = opts.maxit.unwrap_or_else(|| ((10.0 * (n as f64).sqrt()).ceil() as usize).max(1));
    let mut rhs = b.to_vec();
    let rhs_mean = project(&mut rhs);
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        let st = SolveStatus { iterations: 0, relative_residual: 0.0, converged: true, rhs_mean };
        return Ok((vec![0.0; n], st));
    }

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    project(&mut x);
    let mut r = rhs.clone();
    let ax = l.mul_vec(&x);
    for (ri, a) in r.iter_mut().zip(&ax) {
        *ri -= a;
    }
    project(&mut r);
    let mut rnorm = dot(&r, &r).sqrt();
    let mut best = (rnorm, x.clone());
    on_iterate(&x);
    if rnorm <= opts.tol * bnorm {
        let st = SolveStatus { iterations: 0, relative_residual: rnorm / bnorm, converged: true, rhs_mean };
        return Ok((x, st));
    }

    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        l.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rz.is_finite() {
            return Err(Error::NonFinite("conjugate gradient iteration".into()));
        }
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        on_iterate(&x);
        rnorm = dot(&r, &r).sqrt();
        if !rnorm.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual".into()));
        }
        if rnorm < best.0 {
            best.0 = rnorm;
            best.1.copy_from_slice(&x);
        }
        if rnorm <= opts.tol * bnorm {
            project(&mut x);
            let st = SolveStatus { iterations: it, relative_residual: rnorm / bnorm, converged: true, rhs_mean };
            return Ok((x, st));
        }
        m.apply(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let (res, mut xb) = best;
    project(&mut xb);
    let st = SolveStatus { iterations: maxit, relative_residual: res / bnorm, converged: false, rhs_mean };
    Ok((xb, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{build_frame_field, FrameOptions};
    use crate::graph::DistanceGraph;
    use crate::operators::{assemble_laplacian, DeviationStack};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn grid_laplacian(w: usize) -> CsrMatrix {
        let mut e = Vec::new();
        for i in 0..w * w {
            let (x, y) = (i % w, i / w);
            if x + 1 < w {
                e.push((i, i + 1, 1.0));
            }
            if y + 1 < w {
                e.push((i, i + w, 1.0));
            }
            if x + 1 < w && y + 1 < w {
                e.push((i, i + w + 1, 2f64.sqrt()));
            }
        }
        let g = DistanceGraph::symmetrize(w * w, &e).unwrap();
        let fs = build_frame_field(&g, &FrameOptions::new(2)).unwrap();
        assemble_laplacian(&DeviationStack::new(&fs))
    }

    #[test]
    fn diagonal_factor_is_exact() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 4.0), (1, 1, 9.0), (2, 2, 2.0)]);
        let f = ict_factor(&a, 1e-3, 0.0).unwrap();
        let l = f.to_dense();
        assert_eq!(l, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 2f64.sqrt()])));
    }

    #[test]
    fn tridiagonal_exact_factor_one_iteration() {
        let a = tridiag(20);
        let f = ict_factor(&a, 0.0, 0.0).unwrap();
        let dense = a.to_dense();
        let chol = dense.clone().cholesky().unwrap().l();
        assert!((f.to_dense() - chol).norm() < 1e-12);

        // a nonsingular system: solve directly through the preconditioned iteration
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut z = vec![0.0; 20];
        f.apply(&a.mul_vec(&y), &mut z);
        for (u, v) in z.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_retries_then_fails() {
        // indefinite beyond what small shifts or compensation can repair
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        match ict_factor(&a, 0.0, 0.0) {
            Err(Error::FactorizationBreakdown { column, .. }) => assert_eq!(column, 1),
            other => panic!("{other:?}"),
        }
        // singular Laplacian of a path: zero shift breaks down, retry succeeds
        let mut t = Vec::new();
        for i in 0..5 {
            let d = if i == 0 || i == 4 { 1.0 } else { 2.0 };
            t.push((i, i, d));
            if i + 1 < 5 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let f = ict_factor(&CsrMatrix::from_triplets(5, 5, &t), 0.0, 0.0).unwrap();
        assert!(f.retries() >= 1 && f.shift() > 0.0);
    }

    #[test]
    fn laplacian_solves() {
        let l = grid_laplacian(20);
        let n = l.nrows();
        let f = ict_factor(&l, DEFAULT_DROP_TOL, DEFAULT_SHIFT).unwrap();
        let (x, st) = pcg_solve(&l, &vec![0.0; n], &f, None, &PcgOptions::default()).unwrap();
        assert!(st.converged && x.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        remove_mean(&mut y);
        let b = l.mul_vec(&y);
        let (x, st) = pcg_solve(&l, &b, &f, None, &PcgOptions::default()).unwrap();
        assert!(st.converged, "{st:?}");
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ny = dot(&y, &y).sqrt();
        assert!(err / ny < 1e-6, "{}", err / ny);
        assert!(x.iter().sum::<f64>().abs() < 1e-10 * n as f64);

        // constant shifts of b are deflated away exactly
        let shifted: Vec<f64> = b.iter().map(|v| v + 3.5).collect();
        let (xs, st2) = pcg_solve(&l, &shifted, &f, None, &PcgOptions::default()).unwrap();
        assert!((st2.rhs_mean - 3.5).abs() < 1e-10);
        let diff = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8 * ny);
    }

    #[test]
    fn energy_error_is_monotone() {
        let l = grid_laplacian(12);
        let n = l.nrows();
        let f = ict_factor(&l, 1e-2, DEFAULT_SHIFT).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        remove_mean(&mut y);
        let b = l.mul_vec(&y);
        let mut energies = Vec::new();
        let opts = PcgOptions { tol: 1e-12, maxit: Some(500) };
        pcg_impl(&l, &b, &f, None, &opts, |x| {
            let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            energies.push(dot(&e, &l.mul_vec(&e)));
        })
        .unwrap();
        assert!(energies.len() > 3);
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14 * energies[0], "{energies:?}");
        }
    }

    #[test]
    fn maxit_returns_best_iterate() {
        let l = grid_laplacian(15);
        let n = l.nrows();
        let f = ict_factor(&l, 0.5, DEFAULT_SHIFT).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, st) = pcg_solve(&l, &b, &f, None, &PcgOptions { tol: 1e-14, maxit: Some(2) }).unwrap();
        assert!(!st.converged && st.iterations == 2);
        assert!(x.iter().all(|v| v.is_finite()));
        let nan = vec![f64::NAN; n];
        assert!(matches!(pcg_solve(&l, &nan, &f, None, &PcgOptions::default()), Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn preconditioner_is_symmetric(seed in any::<u64>(), drop in prop::sample::select(vec![0.0, 1e-3, 1e-1])) {
            let l = grid_laplacian(6);
            let n = l.nrows();
            let f = ict_factor(&l, drop, DEFAULT_SHIFT).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut mx, mut my) = (vec![0.0; n], vec![0.0; n]);
            f.apply(&x, &mut mx);
            f.apply(&y, &mut my);
            let (a, b) = (dot(&y, &mx), dot(&x, &my));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        }
    }
}
