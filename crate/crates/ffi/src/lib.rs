//! C ABI for the docsynth layout engine.
//!
//! Pools and layouts are opaque heap handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`DsStatus`]; on failure a message is available from
//! [`ds_last_error_message`] on the same thread. Panics never cross the
//! boundary: they are reported as `DS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use docsynth::crm::{run_selfcheck, SelfCheckOptions};
use docsynth::layout::{generate_layout, generate_random_layout, EngineConfig, Layout, PageSpec};
use docsynth::metrics::evaluate;
use docsynth::pool::{load_pool, make_synthetic_pool, ElementPool, SyntheticPoolSpec};

pub const DS_METHOD_BESTFIT: u32 = 0;
pub const DS_METHOD_RANDOM: u32 = 1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Layout = 5,
    CheckFailed = 6,
    Panic = 7,
}

/// Opaque element pool.
pub struct DsPool(ElementPool);

/// Opaque generated layout.
pub struct DsLayout(Layout);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DsPageSpec {
    pub width_px: u32,
    pub height_px: u32,
    pub margin_px: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsEngineConfig {
    pub n_max: usize,
    pub fr_thr: f64,
    pub mini_num: usize,
    pub small_area_frac: f64,
    pub candidate_set_size: usize,
    pub strata: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub gutter_px: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DsPlacedElement {
    pub element_id: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub scale: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DsMetrics {
    pub align_sum: f64,
    pub align_mean: f64,
    pub density: f64,
    pub density_union: f64,
    pub n_elements: usize,
}

impl From<DsPageSpec> for PageSpec {
    fn from(p: DsPageSpec) -> Self {
        PageSpec {
            width_px: p.width_px,
            height_px: p.height_px,
            margin_px: p.margin_px,
        }
    }
}

impl From<PageSpec> for DsPageSpec {
    fn from(p: PageSpec) -> Self {
        DsPageSpec {
            width_px: p.width_px,
            height_px: p.height_px,
            margin_px: p.margin_px,
        }
    }
}

impl DsEngineConfig {
    fn to_config(self, seed: u64) -> EngineConfig {
        EngineConfig {
            n_max: self.n_max,
            fr_thr: self.fr_thr,
            mini_num: self.mini_num,
            small_area_frac: self.small_area_frac,
            candidate_set_size: self.candidate_set_size,
            strata: self.strata,
            scale_range: [self.scale_min, self.scale_max],
            gutter_px: self.gutter_px,
            seed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Failure = (DsStatus, String);

fn fail(status: DsStatus, msg: impl Into<String>) -> Failure {
    (status, msg.into())
}

fn status_of(e: &docsynth::Error) -> DsStatus {
    use docsynth::Error;
    match e {
        Error::Config(_) => DsStatus::InvalidArgument,
        Error::Io { .. } | Error::Image { .. } | Error::Json { .. } => DsStatus::Io,
        Error::Layout(_) => DsStatus::Layout,
        _ => DsStatus::Data,
    }
}

fn lib_err(e: docsynth::Error) -> Failure {
    (status_of(&e), e.to_string())
}

/// Runs `f`, records any failure message and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DsStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(fail(DsStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DsStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DsStatus::NullPointer, "output pointer is null"));
    }
    Ok(())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    check_out(out)?;
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn ds_page_spec_default() -> DsPageSpec {
    PageSpec::default().into()
}

#[no_mangle]
pub extern "C" fn ds_engine_config_default() -> DsEngineConfig {
    let d = EngineConfig::default();
    DsEngineConfig {
        n_max: d.n_max,
        fr_thr: d.fr_thr,
        mini_num: d.mini_num,
        small_area_frac: d.small_area_frac,
        candidate_set_size: d.candidate_set_size,
        strata: d.strata,
        scale_min: d.scale_range[0],
        scale_max: d.scale_range[1],
        gutter_px: d.gutter_px,
    }
}

/// Builds a procedural pool of `categories × per_category` elements.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_synthetic(
    categories: usize,
    per_category: usize,
    seed: u64,
    out: *mut *mut DsPool,
) -> DsStatus {
    guard(|| {
        check_out(out)?;
        if categories == 0 || per_category == 0 {
            return Err(fail(DsStatus::InvalidArgument, "pool dimensions must be >= 1"));
        }
        let pool = make_synthetic_pool(&SyntheticPoolSpec::new(categories, per_category, seed))
            .map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(DsPool(pool))))
    })
}

/// Loads a pool directory written by `docsynth pool`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` a valid handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_load_dir(dir: *const c_char, out: *mut *mut DsPool) -> DsStatus {
    guard(|| {
        check_out(out)?;
        let dir = path_arg(dir)?;
        let pool = ElementPool::load_dir(dir).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(DsPool(pool))))
    })
}

/// Crops a pool from a COCO manifest; images resolve against the
/// manifest's directory.
///
/// # Safety
/// `manifest` must be a NUL-terminated string; `out` a valid handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_load_manifest(
    manifest: *const c_char,
    out: *mut *mut DsPool,
) -> DsStatus {
    guard(|| {
        check_out(out)?;
        let path = path_arg(manifest)?;
        let loaded = load_pool(path).map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(DsPool(loaded.pool))))
    })
}

/// Number of elements, or 0 for a null handle.
///
/// # Safety
/// `pool` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_len(pool: *const DsPool) -> usize {
    pool.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `pool` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_free(pool: *mut DsPool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

/// Generates one layout. `page` and `cfg` may be null for defaults;
/// `method` is `DS_METHOD_BESTFIT` or `DS_METHOD_RANDOM`.
///
/// # Safety
/// Pointers must be null (where allowed) or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_generate_layout(
    pool: *const DsPool,
    page: *const DsPageSpec,
    cfg: *const DsEngineConfig,
    method: u32,
    seed: u64,
    out: *mut *mut DsLayout,
) -> DsStatus {
    guard(|| {
        let pool = pool
            .as_ref()
            .ok_or_else(|| fail(DsStatus::NullPointer, "pool is null"))?;
        check_out(out)?;
        let page: PageSpec = page.as_ref().map_or_else(PageSpec::default, |p| (*p).into());
        page.validate().map_err(lib_err)?;
        let cfg = cfg
            .as_ref()
            .copied()
            .unwrap_or_else(|| ds_engine_config_default())
            .to_config(seed);
        let layout = match method {
            DS_METHOD_BESTFIT => generate_layout(&pool.0, &page, &cfg, seed),
            DS_METHOD_RANDOM => generate_random_layout(&pool.0, &page, &cfg, seed),
            m => return Err(fail(DsStatus::InvalidArgument, format!("unknown method {m}"))),
        }
        .map_err(lib_err)?;
        write_out(out, Box::into_raw(Box::new(DsLayout(layout))))
    })
}

/// Number of placed elements, or 0 for a null handle.
///
/// # Safety
/// `layout` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_len(layout: *const DsLayout) -> usize {
    layout.as_ref().map_or(0, |l| l.0.placed.len())
}

/// Copies placed element `index` into `out`.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_get(
    layout: *const DsLayout,
    index: usize,
    out: *mut DsPlacedElement,
) -> DsStatus {
    guard(|| {
        let l = layout
            .as_ref()
            .ok_or_else(|| fail(DsStatus::NullPointer, "layout is null"))?;
        let p = l.0.placed.get(index).ok_or_else(|| {
            fail(
                DsStatus::InvalidArgument,
                format!("index {index} out of range ({} elements)", l.0.placed.len()),
            )
        })?;
        write_out(
            out,
            DsPlacedElement {
                element_id: p.element_id.0,
                x: p.x,
                y: p.y,
                w: p.w,
                h: p.h,
                scale: p.scale,
            },
        )
    })
}

/// Page geometry of a layout.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_page(layout: *const DsLayout, out: *mut DsPageSpec) -> DsStatus {
    guard(|| {
        let l = layout
            .as_ref()
            .ok_or_else(|| fail(DsStatus::NullPointer, "layout is null"))?;
        write_out(out, l.0.page.into())
    })
}

/// Serializes the layout to JSON. Release the string with `ds_string_free`.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_to_json(layout: *const DsLayout, out: *mut *mut c_char) -> DsStatus {
    guard(|| {
        let l = layout
            .as_ref()
            .ok_or_else(|| fail(DsStatus::NullPointer, "layout is null"))?;
        check_out(out)?;
        let s = CString::new(l.0.to_json())
            .map_err(|_| fail(DsStatus::Data, "layout JSON contains NUL"))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Align/Density scores of a layout.
///
/// # Safety
/// `layout` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_metrics(layout: *const DsLayout, out: *mut DsMetrics) -> DsStatus {
    guard(|| {
        let l = layout
            .as_ref()
            .ok_or_else(|| fail(DsStatus::NullPointer, "layout is null"))?;
        let m = evaluate(&l.0).map_err(lib_err)?;
        write_out(
            out,
            DsMetrics {
                align_sum: m.align_sum,
                align_mean: m.align_mean,
                density: m.density,
                density_union: m.density_union,
                n_elements: m.n_elements,
            },
        )
    })
}

/// # Safety
/// `layout` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_layout_free(layout: *mut DsLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Runs the receptive-module self-check on both presets. Returns
/// `DS_STATUS_CHECK_FAILED` when any check fails.
#[no_mangle]
pub extern "C" fn ds_crm_selfcheck(cases: usize, seed: u64) -> DsStatus {
    guard(|| {
        let report = run_selfcheck(&SelfCheckOptions {
            cases,
            seed,
            ..SelfCheckOptions::default()
        })
        .map_err(lib_err)?;
        match report.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(fail(
                DsStatus::CheckFailed,
                format!("{} deviates by {:e} (tolerance {:e})", c.name, c.max_deviation, c.tolerance),
            )),
        }
    })
}
