//! Volume of the convex hull of `{0} ∪ rows`, the per-vertex weight of the
//! on-graph inner product.
//!
//! Exact hulls are used up to three dimensions. Above that the volume is a
//! seeded Monte Carlo rejection estimate inside the bounding box, with hull
//! membership decided by a phase-one simplex feasibility test.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    Exact,
    MonteCarlo,
    /// Hull was degenerate; singular-value simplex proxy used instead.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    pub method: VolumeMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeOptions {
    /// Target relative standard error of the Monte Carlo estimate.
    pub rel_se: f64,
    pub seed: u64,
    pub min_samples: usize,
    pub max_samples: usize,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        Self { rel_se: 0.02, seed: 0x5eed_f00d, min_samples: 2_000, max_samples: 2_000_000 }
    }
}

/// Relative singular-value floor below which a point set counts as flat.
const FLAT_TOL: f64 = 1e-10;

pub fn neighborhood_volume(rows: &DMatrix<f64>, opts: &VolumeOptions) -> VolumeEstimate {
    let dim = rows.ncols();
    let mut pts = DMatrix::zeros(rows.nrows() + 1, dim);
    pts.rows_mut(1, rows.nrows()).copy_from(rows);

    let exact = if dim == 0 || pts.nrows() <= dim || is_flat(&pts) {
        None
    } else {
        match dim {
            1 => Some(interval_length(&pts)),
            2 => Some(polygon_area(&hull_2d(&points_2d(&pts)))),
            3 => Some(hull_volume_3d(&pts)),
            _ => None,
        }
    };
    if let Some(v) = exact {
        if v > 0.0 {
            return VolumeEstimate { value: v, method: VolumeMethod::Exact };
        }
    }
    if dim >= 4 && pts.nrows() > dim && !is_flat(&pts) {
        let v = monte_carlo_volume(&pts, opts);
        if v > 0.0 {
            return VolumeEstimate { value: v, method: VolumeMethod::MonteCarlo };
        }
    }
    VolumeEstimate { value: fallback_volume(rows), method: VolumeMethod::Fallback }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Product of the singular values of `rows` over `N!`, floored by a
/// radius-based simplex scale so the result stays positive.
pub fn fallback_volume(rows: &DMatrix<f64>) -> f64 {
    let dim = rows.ncols();
    let mut sv: Vec<f64> = rows.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.resize(dim, 0.0);
    let prod: f64 = sv.iter().product::<f64>() / factorial(dim);
    if prod > 0.0 {
        return prod;
    }
    let mean_norm = rows.row_iter().map(|r| r.norm()).sum::<f64>() / rows.nrows().max(1) as f64;
    let proxy = mean_norm.powi(dim as i32) / factorial(dim);
    if proxy > 0.0 {
        proxy
    } else {
        f64::MIN_POSITIVE
    }
}

fn is_flat(pts: &DMatrix<f64>) -> bool {
    let dim = pts.ncols();
    let mean = pts.row_mean();
    let mut c = pts.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let sv = c.svd(false, false).singular_values;
    if sv.len() < dim {
        return true;
    }
    let max = sv.max();
    max <= 0.0 || sv.min() <= FLAT_TOL * max
}

fn interval_length(pts: &DMatrix<f64>) -> f64 {
    let col = pts.column(0);
    col.max() - col.min()
}

fn points_2d(pts: &DMatrix<f64>) -> Vec<[f64; 2]> {
    pts.row_iter().map(|r| [r[0], r[1]]).collect()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
pub(crate) fn hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    twice.abs() / 2.0
}

/// Exact 3-d hull volume by enumerating supporting planes of point triples.
///
/// Each distinct facet is identified by its set of coplanar points, its
/// polygon area is taken from a planar hull, and the volume is the sum of the
/// pyramids from the centroid. Point counts here are small (one neighborhood).
fn hull_volume_3d(pts: &DMatrix<f64>) -> f64 {
    let p: Vec<Vector3<f64>> = pts.row_iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect();
    let m = p.len();
    let centroid = p.iter().fold(Vector3::zeros(), |a, b| a + b) / m as f64;
    let diam = p.iter().map(|q| (q - centroid).norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut seen = std::collections::HashSet::new();
    let mut vol = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                let n = (p[j] - p[i]).cross(&(p[k] - p[i]));
                let nn = n.norm();
                if nn <= 1e-12 * diam * diam {
                    continue;
                }
                let tol = 1e-10 * nn * diam;
                let side: Vec<f64> = p.iter().map(|q| n.dot(&(q - p[i]))).collect();
                let above = side.iter().any(|&s| s > tol);
                let below = side.iter().any(|&s| s < -tol);
                if above && below {
                    continue;
                }
                let face: Vec<usize> = (0..m).filter(|&l| side[l].abs() <= tol).collect();
                if !seen.insert(face.clone()) {
                    continue;
                }
                let u = n / nn;
                let e1 = (p[j] - p[i]).normalize();
                let e2 = u.cross(&e1);
                let planar: Vec<[f64; 2]> = face
                    .iter()
                    .map(|&l| {
                        let d = p[l] - p[i];
                        [d.dot(&e1), d.dot(&e2)]
                    })
                    .collect();
                let area = polygon_area(&hull_2d(&planar));
                let h = u.dot(&(p[i] - centroid)).abs();
                vol += area * h / 3.0;
            }
        }
    }
    vol
}

fn monte_carlo_volume(pts: &DMatrix<f64>, opts: &VolumeOptions) -> f64 {
    let dim = pts.ncols();
    let lo: Vec<f64> = (0..dim).map(|c| pts.column(c).min()).collect();
    let hi: Vec<f64> = (0..dim).map(|c| pts.column(c).max()).collect();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    if box_vol <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = vec![0.0; dim];
    let (mut hits, mut total) = (0usize, 0usize);
    while total < opts.max_samples {
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = lo[c] + (hi[c] - lo[c]) * rng.random::<f64>();
        }
        if in_hull(pts, &x) {
            hits += 1;
        }
        total += 1;
        if total >= opts.min_samples && total % 500 == 0 && hits > 0 {
            let p = hits as f64 / total as f64;
            let rel_se = ((1.0 - p) / (p * total as f64)).sqrt();
            if rel_se <= opts.rel_se {
                break;
            }
        }
    }
    box_vol * hits as f64 / total as f64
}

/// Whether `x` is a convex combination of the rows of `pts`.
///
/// Phase-one simplex on `[ptsᵀ; 1ᵀ] λ = [x; 1]`, `λ ≥ 0`, with Bland's rule.
fn in_hull(pts: &DMatrix<f64>, x: &[f64]) -> bool {
    let m = pts.nrows();
    let rows = pts.ncols() + 1;
    let cols = m + rows; // structural + artificial
    // tableau: rows × (cols + 1), last column is the rhs
    let mut t = vec![0.0; rows * (cols + 1)];
    let at = |r: usize, c: usize| r * (cols + 1) + c;
    for r in 0..rows {
        let b = if r + 1 < rows { x[r] } else { 1.0 };
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..m {
            let a = if r + 1 < rows { pts[(j, r)] } else { 1.0 };
            t[at(r, j)] = sign * a;
        }
        t[at(r, m + r)] = 1.0;
        t[at(r, cols)] = sign * b;
    }
    let mut basis: Vec<usize> = (m..m + rows).collect();
    let scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let eps = 1e-12 * scale;
    for _ in 0..(50 * cols) {
        // reduced costs of the phase-one objective (sum of artificials)
        let mut entering = None;
        for j in 0..cols {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = if j >= m { 1.0 } else { 0.0 };
            for r in 0..rows {
                if basis[r] >= m {
                    rc -= t[at(r, j)];
                }
            }
            if rc < -eps {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let a = t[at(r, e)];
            if a > eps {
                let ratio = t[at(r, cols)] / a;
                match leave {
                    Some((lr, best)) if ratio > best || (ratio == best && basis[r] > basis[lr]) => {}
                    _ => leave = Some((r, ratio)),
                }
            }
        }
        let Some((pr, _)) = leave else { break };
        let piv = t[at(pr, e)];
        for c in 0..=cols {
            t[at(pr, c)] /= piv;
        }
        for r in 0..rows {
            if r != pr {
                let f = t[at(r, e)];
                if f != 0.0 {
                    for c in 0..=cols {
                        t[at(r, c)] -= f * t[at(pr, c)];
                    }
                }
            }
        }
        basis[pr] = e;
    }
    let infeas: f64 = (0..rows).filter(|&r| basis[r] >= m).map(|r| t[at(r, cols)]).sum();
    infeas <= 1e-9 * scale
}
