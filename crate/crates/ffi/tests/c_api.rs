use std::ffi::{CStr, CString};
use std::ptr;

use docsynth_ffi::*;

fn last_error() -> String {
    let p = ds_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_pool() -> *mut DsPool {
    let mut pool = ptr::null_mut();
    assert_eq!(unsafe { ds_pool_synthetic(4, 5, 0, &mut pool) }, DsStatus::Ok);
    assert!(!pool.is_null());
    pool
}

#[test]
fn pool_generate_inspect_free() {
    let pool = small_pool();
    assert_eq!(unsafe { ds_pool_len(pool) }, 20);

    let page = ds_page_spec_default();
    let cfg = ds_engine_config_default();
    assert_eq!(cfg.n_max, 15);
    assert_eq!(cfg.mini_num, 5);
    assert_eq!(cfg.fr_thr, 1e-4);

    let mut layout = ptr::null_mut();
    let st = unsafe { ds_generate_layout(pool, &page, &cfg, DS_METHOD_BESTFIT, 42, &mut layout) };
    assert_eq!(st, DsStatus::Ok);
    let n = unsafe { ds_layout_len(layout) };
    assert!((1..=15).contains(&n));

    let mut elems = Vec::new();
    for i in 0..n {
        let mut e = DsPlacedElement::default();
        assert_eq!(unsafe { ds_layout_get(layout, i, &mut e) }, DsStatus::Ok);
        assert!(e.w >= 1 && e.h >= 1);
        assert!(e.x >= page.margin_px && e.x + e.w <= page.width_px - page.margin_px);
        elems.push(e);
    }
    for (i, a) in elems.iter().enumerate() {
        for b in &elems[i + 1..] {
            let ow = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x));
            let oh = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y));
            assert_eq!(ow * oh, 0);
        }
    }

    let mut e = DsPlacedElement::default();
    assert_eq!(unsafe { ds_layout_get(layout, n, &mut e) }, DsStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let mut m = DsMetrics::default();
    assert_eq!(unsafe { ds_layout_metrics(layout, &mut m) }, DsStatus::Ok);
    assert_eq!(m.n_elements, n);
    assert!(m.density > 0.0 && m.align_sum >= 0.0);

    let mut got_page = DsPageSpec { width_px: 0, height_px: 0, margin_px: 0 };
    assert_eq!(unsafe { ds_layout_page(layout, &mut got_page) }, DsStatus::Ok);
    assert_eq!(got_page, page);

    unsafe {
        ds_layout_free(layout);
        ds_pool_free(pool);
    }
}

#[test]
fn json_matches_library_and_is_deterministic() {
    let pool = small_pool();
    let json = |seed| unsafe {
        let mut layout = ptr::null_mut();
        assert_eq!(
            ds_generate_layout(pool, ptr::null(), ptr::null(), DS_METHOD_RANDOM, seed, &mut layout),
            DsStatus::Ok
        );
        let mut s = ptr::null_mut();
        assert_eq!(ds_layout_to_json(layout, &mut s), DsStatus::Ok);
        let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
        ds_string_free(s);
        ds_layout_free(layout);
        out
    };
    let a = json(7);
    assert_eq!(a, json(7));
    let parsed = docsynth::layout::Layout::from_json(&a).unwrap();
    assert_eq!(parsed.seed, 7);
    unsafe { ds_pool_free(pool) };
}

#[test]
fn null_and_bad_arguments_are_reported() {
    let mut layout = ptr::null_mut();
    let st = unsafe { ds_generate_layout(ptr::null(), ptr::null(), ptr::null(), 0, 0, &mut layout) };
    assert_eq!(st, DsStatus::NullPointer);
    assert!(last_error().contains("pool is null"));

    let pool = small_pool();
    let st = unsafe { ds_generate_layout(pool, ptr::null(), ptr::null(), 9, 0, &mut layout) };
    assert_eq!(st, DsStatus::InvalidArgument);

    let mut cfg = ds_engine_config_default();
    cfg.fr_thr = 0.0;
    let st = unsafe { ds_generate_layout(pool, ptr::null(), &cfg, DS_METHOD_BESTFIT, 0, &mut layout) };
    assert_eq!(st, DsStatus::InvalidArgument);
    assert!(last_error().contains("fr_thr"));

    let bad_page = DsPageSpec { width_px: 40, height_px: 40, margin_px: 20 };
    let st = unsafe { ds_generate_layout(pool, &bad_page, ptr::null(), DS_METHOD_BESTFIT, 0, &mut layout) };
    assert_eq!(st, DsStatus::InvalidArgument);

    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ds_pool_synthetic(0, 5, 0, &mut p) }, DsStatus::InvalidArgument);
    assert_eq!(unsafe { ds_pool_synthetic(1, 1, 0, ptr::null_mut()) }, DsStatus::NullPointer);

    let missing = CString::new("/nonexistent/pool").unwrap();
    assert_eq!(unsafe { ds_pool_load_dir(missing.as_ptr(), &mut p) }, DsStatus::Io);
    assert_eq!(unsafe { ds_pool_load_dir(ptr::null(), &mut p) }, DsStatus::NullPointer);
    assert_eq!(unsafe { ds_pool_load_manifest(missing.as_ptr(), &mut p) }, DsStatus::Io);

    assert_eq!(unsafe { ds_pool_len(ptr::null()) }, 0);
    assert_eq!(unsafe { ds_layout_len(ptr::null()) }, 0);
    unsafe {
        ds_pool_free(ptr::null_mut());
        ds_layout_free(ptr::null_mut());
        ds_string_free(ptr::null_mut());
        ds_pool_free(pool);
    }
}

#[test]
fn saved_pool_loads_through_the_c_api() {
    let dir = tempfile::tempdir().unwrap();
    let pool = docsynth::pool::make_synthetic_pool(&docsynth::pool::SyntheticPoolSpec::new(2, 3, 1)).unwrap();
    pool.save(dir.path()).unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { ds_pool_load_dir(path.as_ptr(), &mut handle) }, DsStatus::Ok);
    assert_eq!(unsafe { ds_pool_len(handle) }, 6);
    unsafe { ds_pool_free(handle) };
}

#[test]
fn selfcheck_passes() {
    assert_eq!(ds_crm_selfcheck(3, 0), DsStatus::Ok);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ds_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/docsynth.h")).unwrap();
    for name in [
        "ds_pool_synthetic",
        "ds_pool_load_dir",
        "ds_pool_load_manifest",
        "ds_pool_free",
        "ds_generate_layout",
        "ds_layout_get",
        "ds_layout_to_json",
        "ds_layout_metrics",
        "ds_layout_free",
        "ds_string_free",
        "ds_crm_selfcheck",
        "ds_last_error_message",
        "typedef struct DsPool DsPool",
        "DS_STATUS_NULL_POINTER",
        "DS_METHOD_RANDOM",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a C program against the generated header when a C compiler is
/// available. (Linking needs the static library, which `cargo test` does
/// not rebuild; `cargo build -p docsynth-ffi` produces it.)
#[test]
fn c_program_compiles_against_header() {
    if std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-o")
        .arg(tmp.path().join("smoke.o"))
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
}
