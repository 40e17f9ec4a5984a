use std::ffi::{CStr, CString};
use std::ptr;

use attrakt_ffi::*;

fn cloud(dim: usize, data: &[f64]) -> *mut AtCloud {
    let mut out = ptr::null_mut();
    let st = unsafe { at_cloud_new(data.as_ptr(), dim, data.len() / dim, &mut out) };
    assert_eq!(st, AtStatus::Ok);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(at_last_error()) }.to_str().unwrap().to_owned()
}

#[test]
fn cloud_queries() {
    let a = cloud(2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
    let b = cloud(2, &[0.0, 0.0]);
    let (mut n, mut d) = (0usize, 0usize);
    unsafe {
        assert_eq!(at_cloud_len(a, &mut n), AtStatus::Ok);
        assert_eq!(at_cloud_dim(a, &mut d), AtStatus::Ok);
    }
    assert_eq!((n, d), (3, 2));

    let mut p = [0.0; 2];
    assert_eq!(unsafe { at_cloud_point(a, 2, p.as_mut_ptr()) }, AtStatus::Ok);
    assert_eq!(p, [0.0, 2.0]);
    assert_eq!(unsafe { at_cloud_point(a, 3, p.as_mut_ptr()) }, AtStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let (mut idx, mut dist) = (0usize, 0.0);
    let q = [0.9, 0.1];
    assert_eq!(unsafe { at_cloud_nearest(a, q.as_ptr(), &mut idx, &mut dist) }, AtStatus::Ok);
    assert_eq!(idx, 1);
    assert!((dist - 0.02f64.sqrt()).abs() < 1e-15);

    let (mut ab, mut ba, mut h) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(at_semidistance(a, b, &mut ab), AtStatus::Ok);
        assert_eq!(at_semidistance(b, a, &mut ba), AtStatus::Ok);
        assert_eq!(at_hausdorff(a, b, &mut h), AtStatus::Ok);
    }
    assert_eq!((ab, ba, h), (2.0, 0.0, 2.0));
    assert_eq!(last_error(), "");

    unsafe {
        at_cloud_free(a);
        at_cloud_free(b);
        at_cloud_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_are_reported() {
    let mut out = ptr::null_mut();
    let nan = [f64::NAN, 0.0];
    assert_eq!(unsafe { at_cloud_new(nan.as_ptr(), 2, 1, &mut out) }, AtStatus::Other);
    assert!(out.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { at_cloud_new(nan.as_ptr(), 0, 1, &mut out) }, AtStatus::Other);
    assert_eq!(unsafe { at_cloud_new(ptr::null(), 2, 1, &mut out) }, AtStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(unsafe { at_cloud_len(ptr::null(), &mut n) }, AtStatus::NullPointer);
    assert!(last_error().contains("cloud"));
}

#[test]
fn save_and_load_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
    let c = cloud(3, &data);
    for (name, binary) in [("c.csv", 0), ("c.bin", 1)] {
        let path = CString::new(dir.path().join(name).to_str().unwrap()).unwrap();
        assert_eq!(unsafe { at_cloud_save(c, path.as_ptr(), binary) }, AtStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(unsafe { at_cloud_load(path.as_ptr(), &mut back) }, AtStatus::Ok);
        let mut h = 1.0;
        assert_eq!(unsafe { at_hausdorff(c, back, &mut h) }, AtStatus::Ok);
        assert_eq!(h, 0.0);
        let mut p = [0.0; 3];
        assert_eq!(unsafe { at_cloud_point(back, 9, p.as_mut_ptr()) }, AtStatus::Ok);
        assert_eq!(&p, &data[27..30]);
        unsafe { at_cloud_free(back) };
    }
    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { at_cloud_load(missing.as_ptr(), &mut back) }, AtStatus::Other);
    unsafe { at_cloud_free(c) };
}

#[test]
fn modulus_and_osgood() {
    // γ = 1, C0 = 1, C_L_eff = 1: ω(r) = r ln(1/r) below r_c = 1/e, and
    // ∫_ε^{r_c} dr / (r ln(1/r)) = ln ln(1/ε).
    let m = AtModulus { c0: 1.0, c_l_eff: 1.0, gamma: 1.0 };
    let mut w = 0.0;
    assert_eq!(unsafe { at_modulus_eval(&m, 0.01, &mut w) }, AtStatus::Ok);
    assert!((w - 0.01 * 100f64.ln()).abs() < 1e-15);
    for eps in [1e-2, 1e-4, 1e-8] {
        let mut v = 0.0;
        assert_eq!(unsafe { at_osgood_integral(&m, eps, &mut v) }, AtStatus::Ok);
        let exact = (1.0 / eps as f64).ln().ln();
        assert!((v - exact).abs() < 1e-9, "eps {eps}: {v} vs {exact}");
    }
    let bad = AtModulus { gamma: 2.0, ..m };
    assert_eq!(unsafe { at_modulus_eval(&bad, 0.1, &mut w) }, AtStatus::Other);
    assert!(last_error().contains("gamma"));
}

fn run(config: &str) -> (AtStatus, serde_json::Value) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(config).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { at_run(cfg.as_ptr(), out.as_ptr(), &mut s) };
    if s.is_null() {
        return (st, serde_json::Value::Null);
    }
    let v = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    unsafe { at_string_free(s) };
    (st, v)
}

#[test]
fn run_point_sink() {
    let (st, summary) = run("[system]\nkind = \"point_sink\"\n");
    assert_eq!(st, AtStatus::Ok, "{}", last_error());
    assert_eq!(summary["status"], "ok");
}

#[test]
fn run_reports_stage_failures() {
    let (st, summary) = run("[system]\nkind = \"planar_cycle\"\n[embedding]\nm = 6\n");
    assert_eq!(st, AtStatus::Gate);
    assert_eq!(summary["status"], "failed");

    let (st, summary) = run("[sampling]\nbogus = 1\n");
    assert_eq!(st, AtStatus::Config);
    assert!(summary.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/attrakt.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
