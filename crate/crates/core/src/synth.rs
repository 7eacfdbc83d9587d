//! Synthetic manifold samples with known parameterizations, and the TwoNN
//! intrinsic-dimension estimator.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{knn_lists, DistanceGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    SwissRoll,
    KleinBottle,
    FlatTorus,
}

impl Manifold {
    pub fn name(self) -> &'static str {
        match self {
            Manifold::SwissRoll => "swiss_roll",
            Manifold::KleinBottle => "klein_bottle",
            Manifold::FlatTorus => "flat_torus",
        }
    }

    pub fn sample(self, n: usize, seed: u64) -> Result<SampledManifold> {
        match self {
            Manifold::SwissRoll => swiss_roll(n, seed),
            Manifold::KleinBottle => klein_bottle(n, seed),
            Manifold::FlatTorus => flat_torus(n, seed),
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Manifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swiss_roll" => Ok(Manifold::SwissRoll),
            "klein_bottle" => Ok(Manifold::KleinBottle),
            "flat_torus" => Ok(Manifold::FlatTorus),
            other => Err(Error::InvalidInput(format!(
                "unknown dataset '{other}' (expected swiss_roll, klein_bottle or flat_torus)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledManifold {
    pub name: Manifold,
    /// `n × D` ambient coordinates.
    pub points: DMatrix<f64>,
    /// `n × d` ground-truth parameters.
    pub params: DMatrix<f64>,
    /// Flat torus only: the short embedding in ℝ³.
    pub short_embedding: Option<DMatrix<f64>>,
}

pub const SWISS_T_MIN: f64 = 1.5 * PI;
pub const SWISS_T_MAX: f64 = 4.5 * PI;
pub const SWISS_HEIGHT: f64 = 21.0;

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidInput("sample size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Arc length of the spiral `t ↦ (t cos t, t sin t)` from 0 to `t`.
fn spiral_arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

/// `(t cos t, h, t sin t)` with `t ∈ [1.5π, 4.5π]`, `h ∈ [0, 21]`; params are
/// the arc length from `t = 1.5π` and `h`.
pub fn swiss_roll(n: usize, seed: u64) -> Result<SampledManifold> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = spiral_arc_length(SWISS_T_MIN);
    let mut points = DMatrix::zeros(n, 3);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let t = rng.random_range(SWISS_T_MIN..SWISS_T_MAX);
        let h = rng.random_range(0.0..SWISS_HEIGHT);
        points[(i, 0)] = t * t.cos();
        points[(i, 1)] = h;
        points[(i, 2)] = t * t.sin();
        params[(i, 0)] = spiral_arc_length(t) - s0;
        params[(i, 1)] = h;
    }
    Ok(SampledManifold { name: Manifold::SwissRoll, points, params, short_embedding: None })
}

/// The figure-eight style bottle in ℝ³ with the branch split at `u = π`.
pub fn klein_point(u: f64, v: f64) -> [f64; 3] {
    let (su, cu) = u.sin_cos();
    let first = u <= PI;
    let x_tube = if first { cu * v.cos() } else { (v + PI).cos() };
    let y_tube = if first { su * v.cos() } else { 0.0 };
    [
        6.0 * cu * (1.0 + su) + 4.0 * (1.0 - 0.5 * su) * x_tube,
        16.0 * su + 4.0 * (1.0 - 0.5 * cu) * y_tube,
        4.0 * (1.0 - 0.5 * cu) * v.sin(),
    ]
}

pub fn klein_bottle(n: usize, seed: u64) -> Result<SampledManifold> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n, 3);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let u = rng.random_range(0.0..2.0 * PI);
        let v = rng.random_range(0.0..2.0 * PI);
        let p = klein_point(u, v);
        for c in 0..3 {
            points[(i, c)] = p[c];
        }
        params[(i, 0)] = u;
        params[(i, 1)] = v;
    }
    Ok(SampledManifold { name: Manifold::KleinBottle, points, params, short_embedding: None })
}

pub fn torus_point(u: f64, v: f64) -> [f64; 4] {
    [2.0 * u.cos(), 2.0 * u.sin(), v.cos(), v.sin()]
}

pub fn torus_short_point(u: f64, v: f64) -> [f64; 3] {
    [u.cos() * (2.0 + v.sin()), u.sin() * (2.0 + v.sin()), v.cos()]
}

/// Flat torus in ℝ⁴ together with its short embedding in ℝ³.
pub fn flat_torus(n: usize, seed: u64) -> Result<SampledManifold> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n, 4);
    let mut short = DMatrix::zeros(n, 3);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let u = rng.random_range(0.0..2.0 * PI);
        let v = rng.random_range(0.0..2.0 * PI);
        let p = torus_point(u, v);
        let s = torus_short_point(u, v);
        for c in 0..4 {
            points[(i, c)] = p[c];
        }
        for c in 0..3 {
            short[(i, c)] = s[c];
        }
        params[(i, 0)] = u;
        params[(i, 1)] = v;
    }
    Ok(SampledManifold { name: Manifold::FlatTorus, points, params, short_embedding: Some(short) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoNnMethod {
    /// `d̂ = n / Σ ln μ_i`.
    #[default]
    Mle,
    /// Least-squares slope of `−ln(1 − F(μ))` against `ln μ` through the
    /// origin, discarding the largest 10% of ratios.
    Fit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoNnEstimate {
    pub dimension: f64,
    pub rounded: usize,
    pub method: TwoNnMethod,
}

const TWONN_MIN_SAMPLES: usize = 10;

fn twonn_from_ratios(mut mu: Vec<f64>, method: TwoNnMethod) -> Result<TwoNnEstimate> {
    let n = mu.len();
    let dimension = match method {
        TwoNnMethod::Mle => {
            let s: f64 = mu.iter().map(|m| m.ln()).sum();
            if s <= 0.0 {
                return Err(Error::Degenerate("all nearest-neighbor ratios equal one".into()));
            }
            n as f64 / s
        }
        TwoNnMethod::Fit => {
            mu.sort_by(f64::total_cmp);
            let keep = ((n as f64) * 0.9).floor() as usize;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, m) in mu.iter().take(keep).enumerate() {
                let x = m.ln();
                let y = -(1.0 - (i + 1) as f64 / n as f64).ln();
                sxy += x * y;
                sxx += x * x;
            }
            if sxx <= 0.0 {
                return Err(Error::Degenerate("all nearest-neighbor ratios equal one".into()));
            }
            sxy / sxx
        }
    };
    Ok(TwoNnEstimate { dimension, rounded: dimension.round().max(1.0) as usize, method })
}

/// TwoNN estimate from point coordinates (brute-force neighbors).
pub fn twonn_dimension(points: &DMatrix<f64>, method: TwoNnMethod) -> Result<TwoNnEstimate> {
    let n = points.nrows();
    if n < TWONN_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!("TwoNN needs at least {TWONN_MIN_SAMPLES} samples, got {n}")));
    }
    let lists = knn_lists(points, 2);
    let mut mu = Vec::with_capacity(n);
    for (i, l) in lists.iter().enumerate() {
        let (r1, r2) = (l[0].1, l[1].1);
        if r1 == 0.0 {
            return Err(Error::DuplicatePoints { a: i.min(l[0].0), b: i.max(l[0].0) });
        }
        mu.push(r2 / r1);
    }
    twonn_from_ratios(mu, method)
}

/// TwoNN estimate from a distance graph, using each vertex's two shortest
/// incident edges. Vertices of degree one are skipped.
pub fn twonn_from_graph(g: &DistanceGraph, method: TwoNnMethod) -> Result<TwoNnEstimate> {
    let mut mu = Vec::new();
    for v in 0..g.n_vertices() {
        let (_, ws) = g.neighbors(v);
        if ws.len() < 2 {
            continue;
        }
        let (mut r1, mut r2) = (f64::INFINITY, f64::INFINITY);
        for &w in ws {
            if w < r1 {
                r2 = r1;
                r1 = w;
            } else if w < r2 {
                r2 = w;
            }
        }
        mu.push(r2 / r1);
    }
    if mu.len() < TWONN_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "TwoNN needs at least {TWONN_MIN_SAMPLES} vertices of degree two or more"
        )));
    }
    twonn_from_ratios(mu, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swiss_roll_identities() {
        let a = swiss_roll(1, 3).unwrap();
        let b = swiss_roll(1, 3).unwrap();
        assert_eq!(a, b);
        let s = swiss_roll(500, 4).unwrap();
        for i in 0..500 {
            let (x, z) = (s.points[(i, 0)], s.points[(i, 2)]);
            let r = (x * x + z * z).sqrt();
            assert!((SWISS_T_MIN..=SWISS_T_MAX).contains(&r));
            assert!((spiral_arc_length(r) - spiral_arc_length(SWISS_T_MIN) - s.params[(i, 0)]).abs() < 1e-9);
            assert_eq!(s.points[(i, 1)], s.params[(i, 1)]);
        }
        assert_eq!(swiss_roll(1500, 7).unwrap().points.nrows(), 1500);
        assert!(swiss_roll(0, 1).is_err());
    }

    #[test]
    fn arc_length_matches_quadrature() {
        let (a, b) = (SWISS_T_MIN, 2.0 * PI);
        let steps = 100_000;
        let h = (b - a) / steps as f64;
        let quad: f64 = (0..steps).map(|i| (1.0 + (a + (i as f64 + 0.5) * h).powi(2)).sqrt() * h).sum();
        assert!((spiral_arc_length(b) - spiral_arc_length(a) - quad).abs() < 1e-6);
    }

    #[test]
    fn klein_examples() {
        let p = klein_point(0.0, 0.0);
        assert!((p[0] - 10.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
        for (u, v) in [(0.3, 1.1), (4.0, 2.5), (PI, 0.2)] {
            let (a, b) = (klein_point(u, v), klein_point(u, v + 2.0 * PI));
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn torus_examples() {
        assert_eq!(torus_point(0.0, 0.0), [2.0, 0.0, 1.0, 0.0]);
        let s = torus_short_point(0.0, PI / 2.0);
        assert!((s[0] - 3.0).abs() < 1e-12 && s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
        let t = flat_torus(300, 5).unwrap();
        for r in t.points.row_iter() {
            assert!((r[0] * r[0] + r[1] * r[1] - 4.0).abs() < 1e-12);
            assert!((r[2] * r[2] + r[3] * r[3] - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.short_embedding.as_ref().unwrap().nrows(), 300);
    }

    #[test]
    fn twonn_known_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let seg = DMatrix::from_fn(2000, 1, |_, _| rng.random::<f64>());
        let d1 = twonn_dimension(&seg, TwoNnMethod::Mle).unwrap();
        assert!((0.8..=1.2).contains(&d1.dimension), "{d1:?}");
        let sq = DMatrix::from_fn(2000, 2, |_, _| rng.random::<f64>());
        let d2 = twonn_dimension(&sq, TwoNnMethod::Mle).unwrap();
        assert!((1.7..=2.3).contains(&d2.dimension), "{d2:?}");
        assert_eq!(d2.rounded, 2);
        let f2 = twonn_dimension(&sq, TwoNnMethod::Fit).unwrap();
        assert!((1.7..=2.3).contains(&f2.dimension), "{f2:?}");
        let scaled = twonn_dimension(&(sq * 37.5), TwoNnMethod::Mle).unwrap();
        assert!((scaled.dimension - d2.dimension).abs() < 1e-12);
    }

    #[test]
    fn twonn_rejects_duplicates_and_small_samples() {
        let mut pts = DMatrix::from_fn(20, 2, |i, c| (i * 3 + c) as f64 * 0.37);
        pts[(5, 0)] = pts[(4, 0)];
        pts[(5, 1)] = pts[(4, 1)];
        assert!(matches!(twonn_dimension(&pts, TwoNnMethod::Mle), Err(Error::DuplicatePoints { .. })));
        assert!(twonn_dimension(&DMatrix::zeros(5, 2), TwoNnMethod::Mle).is_err());
    }

    #[test]
    fn klein_sample_is_two_dimensional() {
        let k = klein_bottle(1500, 2).unwrap();
        let d = twonn_dimension(&k.points, TwoNnMethod::Mle).unwrap();
        assert_eq!(d.rounded, 2, "{d:?}");
    }
}
