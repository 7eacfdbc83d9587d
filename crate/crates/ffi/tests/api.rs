use std::ffi::CStr;
use std::ptr;

use distembed_ffi::*;

fn last_error() -> String {
    let p = de_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn two_vertex_round_trip() {
    let (src, dst, w) = ([0usize], [1usize], [3.0f64]);
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(de_graph_from_edges(2, src.as_ptr(), dst.as_ptr(), w.as_ptr(), 1, &mut g), DeStatus::Ok);
        assert_eq!(de_graph_n_vertices(g), 2);
        assert_eq!(de_graph_n_edges(g), 1);
        let opts = de_embed_options_default(1);
        let mut e = ptr::null_mut();
        assert_eq!(de_embed(g, &opts, &mut e), DeStatus::Ok);
        assert_eq!((de_embedding_rows(e), de_embedding_cols(e)), (2, 1));
        let mut buf = [0.0; 2];
        assert_eq!(de_embedding_copy_coords(e, buf.as_mut_ptr(), 2), DeStatus::Ok);
        assert!(((buf[0] - buf[1]).abs() - 3.0).abs() < 1e-8);
        assert!((buf[0] + buf[1]).abs() < 1e-10);
        let mut stop = DeStop::MaxIterations;
        assert_eq!(de_embedding_stop(e, &mut stop), DeStatus::Ok);
        assert_ne!(stop, DeStop::MaxIterations);
        assert!(de_embedding_iterations(e) >= 1);
        assert!(de_embedding_objective(e) >= 0.0);
        assert_eq!(de_embedding_copy_coords(e, buf.as_mut_ptr(), 1), DeStatus::InvalidInput);
        de_embedding_free(e);
        de_graph_free(g);
    }
}

#[test]
fn grid_points_embed_close_to_truth() {
    let w = 8;
    let pts: Vec<f64> = (0..w * w).flat_map(|i| [(i % w) as f64, (i / w) as f64]).collect();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(de_graph_from_points(pts.as_ptr(), w * w, 2, 8, &mut g), DeStatus::Ok);
        let mut opts = de_embed_options_default(2);
        opts.deterministic = true;
        let mut e = ptr::null_mut();
        assert_eq!(de_embed(g, &opts, &mut e), DeStatus::Ok);
        let mut buf = vec![0.0; w * w * 2];
        assert_eq!(de_embedding_copy_coords(e, buf.as_mut_ptr(), buf.len()), DeStatus::Ok);
        // neighboring grid points stay about one unit apart
        let d = ((buf[2] - buf[0]).powi(2) + (buf[3] - buf[1]).powi(2)).sqrt();
        assert!((d - 1.0).abs() < 0.2, "{d}");
        de_embedding_free(e);
        de_graph_free(g);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut g = ptr::null_mut();
    let (src, dst, w) = ([0usize], [0usize], [1.0f64]);
    unsafe {
        assert_eq!(de_graph_from_edges(2, src.as_ptr(), dst.as_ptr(), w.as_ptr(), 1, &mut g), DeStatus::InvalidInput);
        assert!(g.is_null());
        assert!(last_error().contains("self-loop"));
        let neg = [-1.0f64];
        let one = [1usize];
        assert_eq!(de_graph_from_edges(2, src.as_ptr(), one.as_ptr(), neg.as_ptr(), 1, &mut g), DeStatus::InvalidInput);
        assert_eq!(de_graph_from_edges(2, ptr::null(), dst.as_ptr(), w.as_ptr(), 1, &mut g), DeStatus::NullPointer);
        assert_eq!(de_embed(ptr::null(), ptr::null(), ptr::null_mut()), DeStatus::NullPointer);
        assert_eq!(de_graph_n_vertices(ptr::null()), 0);
        assert!(de_embedding_objective(ptr::null()).is_nan());
        de_graph_free(ptr::null_mut());
        de_embedding_free(ptr::null_mut());
    }
}

#[test]
fn disconnected_graph_is_rejected() {
    let (src, dst, w) = ([0usize, 2], [1usize, 3], [1.0f64, 1.0]);
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(de_graph_from_edges(4, src.as_ptr(), dst.as_ptr(), w.as_ptr(), 2, &mut g), DeStatus::Ok);
        let mut e = ptr::null_mut();
        let st = de_embed(g, &de_embed_options_default(1), &mut e);
        assert_ne!(st, DeStatus::Ok);
        assert!(e.is_null());
        assert!(!last_error().is_empty());
        de_graph_free(g);
    }
}

#[test]
fn twonn_of_a_square() {
    let mut s: u64 = 0x9e3779b97f4a7c15;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let pts: Vec<f64> = (0..4000).map(|_| next()).collect();
    let mut d = 0.0;
    unsafe {
        assert_eq!(de_twonn_dimension(pts.as_ptr(), 2000, 2, &mut d), DeStatus::Ok);
        assert_eq!(de_twonn_dimension(pts.as_ptr(), 3, 2, &mut d), DeStatus::InvalidInput);
    }
    assert!((1.7..2.3).contains(&d), "{d}");
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(de_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/distembed.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("size_t dim;"));
}
