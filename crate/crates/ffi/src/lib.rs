//! C ABI over `distembed`.
//!
//! Graphs and embeddings are opaque handles created and released through
//! this API. Every fallible call returns a [`DeStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`de_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use distembed::embed::{run_embedding, Acceleration, EmbedOptions, EmbedResult, InitRule, StopReason};
use distembed::graph::DistanceGraph;
use distembed::linsolve::PcgOptions;
use distembed::synth::{twonn_dimension, TwoNnMethod};
use distembed::Error;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeInit {
    Identity = 0,
    TreeSync = 1,
    Spectral = 2,
    GeodesicMds = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeStop {
    Converged = 0,
    Stagnated = 1,
    MaxIterations = 2,
}

/// Embedding parameters; obtain defaults from [`de_embed_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DeEmbedOptions {
    pub dim: usize,
    pub tol: f64,
    pub var_tol: f64,
    pub maxit: usize,
    pub drop_tol: f64,
    pub shift: f64,
    pub pcg_tol: f64,
    /// Zero selects the default cap.
    pub pcg_maxit: usize,
    pub init: DeInit,
    pub landmarks: usize,
    /// Zero disables acceleration.
    pub accel_depth: usize,
    pub seed: u64,
    pub deterministic: bool,
}

/// Opaque distance graph.
pub struct DeGraph(DistanceGraph);

/// Opaque embedding result.
pub struct DeEmbedding(EmbedResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: &Error) -> DeStatus {
    set_error(&e.to_string());
    if e.is_numerical() {
        DeStatus::Numerical
    } else {
        DeStatus::InvalidInput
    }
}

fn guard(f: impl FnOnce() -> DeStatus) -> DeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            DeStatus::Panic
        }
    }
}

fn null() -> DeStatus {
    set_error("null pointer argument");
    DeStatus::NullPointer
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn de_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn de_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a symmetrized graph from `m` weighted edges on `n` vertices.
///
/// # Safety
/// `src`, `dst` and `weight` must each point to `m` readable elements and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn de_graph_from_edges(
    n: usize,
    src: *const usize,
    dst: *const usize,
    weight: *const f64,
    m: usize,
    out: *mut *mut DeGraph,
) -> DeStatus {
    if out.is_null() || (m > 0 && (src.is_null() || dst.is_null() || weight.is_null())) {
        return null();
    }
    guard(|| {
        let (s, d, w) = if m == 0 {
            (&[][..], &[][..], &[][..])
        } else {
            (slice::from_raw_parts(src, m), slice::from_raw_parts(dst, m), slice::from_raw_parts(weight, m))
        };
        let edges: Vec<_> = (0..m).map(|i| (s[i], d[i], w[i])).collect();
        match DistanceGraph::symmetrize(n, &edges) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(DeGraph(g)));
                DeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Builds the max-symmetrized `k`-nearest-neighbor graph of `n` points in
/// `d` dimensions, stored row-major.
///
/// # Safety
/// `points` must point to `n * d` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn de_graph_from_points(
    points: *const f64,
    n: usize,
    d: usize,
    k: usize,
    out: *mut *mut DeGraph,
) -> DeStatus {
    if points.is_null() || out.is_null() {
        return null();
    }
    guard(|| {
        let pts = DMatrix::from_row_slice(n, d, slice::from_raw_parts(points, n * d));
        match DistanceGraph::knn_graph(&pts, k) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(DeGraph(g)));
                DeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `g` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_graph_n_vertices(g: *const DeGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_vertices())
}

/// Undirected edge count.
///
/// # Safety
/// `g` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_graph_n_edges(g: *const DeGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_edges())
}

/// # Safety
/// `g` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn de_graph_free(g: *mut DeGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

#[no_mangle]
pub extern "C" fn de_embed_options_default(dim: usize) -> DeEmbedOptions {
    let o = EmbedOptions::new(dim);
    DeEmbedOptions {
        dim,
        tol: o.tol,
        var_tol: o.var_tol,
        maxit: o.maxit,
        drop_tol: o.drop_tol,
        shift: o.shift,
        pcg_tol: o.pcg.tol,
        pcg_maxit: 0,
        init: DeInit::GeodesicMds,
        landmarks: o.landmarks,
        accel_depth: match o.acceleration {
            Acceleration::Anderson { depth } => depth,
            Acceleration::None => 0,
        },
        seed: o.frames.volume.seed,
        deterministic: o.deterministic,
    }
}

fn to_options(c: &DeEmbedOptions) -> EmbedOptions {
    let mut o = EmbedOptions::new(c.dim);
    o.tol = c.tol;
    o.var_tol = c.var_tol;
    o.maxit = c.maxit;
    o.drop_tol = c.drop_tol;
    o.shift = c.shift;
    o.pcg = PcgOptions { tol: c.pcg_tol, maxit: (c.pcg_maxit > 0).then_some(c.pcg_maxit) };
    o.init = match c.init {
        DeInit::Identity => InitRule::Identity,
        DeInit::TreeSync => InitRule::TreeSync,
        DeInit::Spectral => InitRule::Spectral,
        DeInit::GeodesicMds => InitRule::GeodesicMds,
    };
    o.landmarks = c.landmarks;
    o.acceleration = if c.accel_depth == 0 { Acceleration::None } else { Acceleration::Anderson { depth: c.accel_depth } };
    o.frames.volume.seed = c.seed;
    o.deterministic = c.deterministic;
    o.frames.sequential = c.deterministic;
    o
}

/// Embeds `g`; on success `*out` receives a handle to free with
/// [`de_embedding_free`].
///
/// # Safety
/// `g` must be a live graph handle, `opts` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn de_embed(g: *const DeGraph, opts: *const DeEmbedOptions, out: *mut *mut DeEmbedding) -> DeStatus {
    let (Some(g), Some(opts)) = (g.as_ref(), opts.as_ref()) else {
        return null();
    };
    if out.is_null() {
        return null();
    }
    guard(|| match run_embedding(&g.0, &to_options(opts)) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(DeEmbedding(r)));
            DeStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// # Safety
/// `e` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_rows(e: *const DeEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.0.embedding.coords.nrows())
}

/// # Safety
/// `e` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_cols(e: *const DeEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.0.embedding.coords.ncols())
}

/// Copies the coordinates row-major into `buf`, which must hold
/// `rows * cols` values.
///
/// # Safety
/// `e` must be a live handle and `buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_copy_coords(e: *const DeEmbedding, buf: *mut f64, len: usize) -> DeStatus {
    let Some(e) = e.as_ref() else {
        return null();
    };
    if buf.is_null() {
        return null();
    }
    let c = &e.0.embedding.coords;
    if len != c.len() {
        set_error(&format!("buffer holds {len} values, {} needed", c.len()));
        return DeStatus::InvalidInput;
    }
    let out = slice::from_raw_parts_mut(buf, len);
    for r in 0..c.nrows() {
        for k in 0..c.ncols() {
            out[r * c.ncols() + k] = c[(r, k)];
        }
    }
    DeStatus::Ok
}

/// Iterations performed.
///
/// # Safety
/// `e` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_iterations(e: *const DeEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.0.report.records.len())
}

/// Objective after the last solve, NaN for a null handle.
///
/// # Safety
/// `e` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_objective(e: *const DeEmbedding) -> f64 {
    e.as_ref().and_then(|e| e.0.report.records.last()).map_or(f64::NAN, |r| r.j)
}

/// Convergence error of the last iteration, NaN for a null handle.
///
/// # Safety
/// `e` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_error(e: *const DeEmbedding) -> f64 {
    e.as_ref().and_then(|e| e.0.report.records.last()).map_or(f64::NAN, |r| r.err)
}

/// # Safety
/// `e` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_stop(e: *const DeEmbedding, out: *mut DeStop) -> DeStatus {
    let Some(e) = e.as_ref() else {
        return null();
    };
    if out.is_null() {
        return null();
    }
    *out = match e.0.report.stop {
        StopReason::Converged => DeStop::Converged,
        StopReason::Stagnated => DeStop::Stagnated,
        StopReason::MaxIterations => DeStop::MaxIterations,
    };
    DeStatus::Ok
}

/// # Safety
/// `e` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn de_embedding_free(e: *mut DeEmbedding) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// TwoNN intrinsic dimension of `n` row-major points in `d` dimensions.
///
/// # Safety
/// `points` must point to `n * d` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn de_twonn_dimension(points: *const f64, n: usize, d: usize, out: *mut f64) -> DeStatus {
    if points.is_null() || out.is_null() {
        return null();
    }
    guard(|| {
        let pts = DMatrix::from_row_slice(n, d, slice::from_raw_parts(points, n * d));
        match twonn_dimension(&pts, TwoNnMethod::Mle) {
            Ok(est) => {
                *out = est.dimension;
                DeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
