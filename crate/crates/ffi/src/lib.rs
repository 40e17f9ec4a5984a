//! C ABI over the attrakt library.
//!
//! Every function returns an [`AtStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`at_last_error`]. Clouds are
//! opaque [`AtCloud`] handles owned by the caller and released with
//! [`at_cloud_free`]. Strings handed out by the library are released with
//! [`at_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use attrakt::config::ExperimentConfig;
use attrakt::extension::{self, Modulus};
use attrakt::geometry::{self, io};
use attrakt::pipeline::{self, Stage};
use attrakt::{Error, PointCloud};

/// Status codes. Pipeline failures reuse the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtStatus {
    Ok = 0,
    Other = 1,
    Config = 2,
    NullPointer = 3,
    InvalidArgument = 4,
    Panic = 5,
    Gate = 10,
    Injectivity = 11,
    BetaLadder = 12,
    Settling = 13,
    Integrator = 14,
}

impl AtStatus {
    fn from_exit_code(code: i32) -> Self {
        match code {
            0 => AtStatus::Ok,
            2 => AtStatus::Config,
            10 => AtStatus::Gate,
            11 => AtStatus::Injectivity,
            12 => AtStatus::BetaLadder,
            13 => AtStatus::Settling,
            14 => AtStatus::Integrator,
            _ => AtStatus::Other,
        }
    }
}

/// Opaque point cloud.
pub struct AtCloud {
    inner: PointCloud,
}

/// Parameters of the modulus `ω(r) = C0 r ln(C_L_eff / r)^γ`, flat past its knee.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AtModulus {
    pub c0: f64,
    pub c_l_eff: f64,
    pub gamma: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(AtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(AtStatus::from_exit_code(e.exit_code()), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AtStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Fail {
    Fail(AtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside attrakt");
            AtStatus::Panic
        }
    }
}

unsafe fn cloud_ref<'a>(c: *const AtCloud, what: &str) -> Result<&'a PointCloud, Fail> {
    c.as_ref().map(|c| &c.inner).ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

fn boxed(cloud: PointCloud) -> *mut AtCloud {
    Box::into_raw(Box::new(AtCloud { inner: cloud }))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn at_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a cloud from `count * dim` row-major doubles.
///
/// # Safety
/// `data` must point to `count * dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_new(data: *const f64, dim: usize, count: usize, out: *mut *mut AtCloud) -> AtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = dim.checked_mul(count).ok_or_else(|| invalid("dim * count overflows"))?;
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let buf = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(data, len).to_vec() };
        *out = boxed(PointCloud::new(dim, buf)?);
        Ok(())
    })
}

/// Release a cloud. Null is ignored.
///
/// # Safety
/// `cloud` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_free(cloud: *mut AtCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_len(cloud: *const AtCloud, out: *mut usize) -> AtStatus {
    guard(|| write_out(out, cloud_ref(cloud, "cloud")?.len(), "out"))
}

/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_dim(cloud: *const AtCloud, out: *mut usize) -> AtStatus {
    guard(|| write_out(out, cloud_ref(cloud, "cloud")?.dim(), "out"))
}

/// Copy point `index` into `out`, which holds `dim` doubles.
///
/// # Safety
/// `cloud` must be a live handle; `out` must hold `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_point(cloud: *const AtCloud, index: usize, out: *mut f64) -> AtStatus {
    guard(|| {
        let c = cloud_ref(cloud, "cloud")?;
        if index >= c.len() {
            return Err(invalid(format!("index {index} out of range for {} points", c.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, c.dim()).copy_from_slice(c.point(index));
        Ok(())
    })
}

/// Nearest point to `query` (`dim` doubles): its index and distance.
///
/// # Safety
/// `query` must hold `dim` doubles; `index` and `distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_nearest(
    cloud: *const AtCloud,
    query: *const f64,
    index: *mut usize,
    distance: *mut f64,
) -> AtStatus {
    guard(|| {
        let c = cloud_ref(cloud, "cloud")?;
        if query.is_null() {
            return Err(null("query"));
        }
        let q = std::slice::from_raw_parts(query, c.dim());
        let hit = c.nearest(q, 1)?.into_iter().next().ok_or_else(|| invalid("cloud is empty"))?;
        write_out(index, hit.index, "index")?;
        write_out(distance, hit.distance, "distance")
    })
}

/// `sup_{x in a} dist(x, b)`.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_semidistance(a: *const AtCloud, b: *const AtCloud, out: *mut f64) -> AtStatus {
    guard(|| {
        let d = geometry::semidistance(cloud_ref(a, "a")?, cloud_ref(b, "b")?)?;
        write_out(out, d, "out")
    })
}

/// Symmetric Hausdorff distance.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_hausdorff(a: *const AtCloud, b: *const AtCloud, out: *mut f64) -> AtStatus {
    guard(|| {
        let d = geometry::hausdorff_distance(cloud_ref(a, "a")?, cloud_ref(b, "b")?)?;
        write_out(out, d, "out")
    })
}

/// Load a cloud from CSV or the binary format, chosen by content.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_load(path: *const c_char, out: *mut *mut AtCloud) -> AtStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = boxed(io::load(p.as_ref())?);
        Ok(())
    })
}

/// Save as CSV, or as binary when `binary` is nonzero.
///
/// # Safety
/// `cloud` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn at_cloud_save(cloud: *const AtCloud, path: *const c_char, binary: i32) -> AtStatus {
    guard(|| {
        let c = cloud_ref(cloud, "cloud")?;
        let p = str_arg(path, "path")?;
        if binary != 0 {
            io::save_bin(p.as_ref(), c)?;
        } else {
            io::save_csv(p.as_ref(), c)?;
        }
        Ok(())
    })
}

fn modulus(m: *const AtModulus) -> Result<Modulus, Fail> {
    let m = unsafe { m.as_ref() }.ok_or_else(|| null("modulus"))?;
    Ok(Modulus::from_parts(m.c0, m.c_l_eff, m.gamma)?)
}

/// `ω(r)`.
///
/// # Safety
/// `m` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_modulus_eval(m: *const AtModulus, r: f64, out: *mut f64) -> AtStatus {
    guard(|| write_out(out, modulus(m)?.eval(r), "out"))
}

/// `∫_eps^{min(1, r_c)} dr / ω(r)`.
///
/// # Safety
/// `m` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn at_osgood_integral(m: *const AtModulus, eps: f64, out: *mut f64) -> AtStatus {
    guard(|| write_out(out, extension::osgood_integral(&modulus(m)?, eps)?, "out"))
}

/// Run every stage for the TOML config `config` into `out_dir` and hand back
/// the summary JSON in `summary` (free with [`at_string_free`]). A stage
/// failure still yields the summary and returns that stage's status.
///
/// # Safety
/// `config` and `out_dir` must be NUL-terminated strings; `summary` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn at_run(config: *const c_char, out_dir: *const c_char, summary: *mut *mut c_char) -> AtStatus {
    guard(|| {
        let text = str_arg(config, "config")?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        if summary.is_null() {
            return Err(null("summary"));
        }
        *summary = ptr::null_mut();
        let cfg = ExperimentConfig::parse(text)?;
        let run = pipeline::run_stages(&cfg, &dir, Stage::Sample, Stage::Verify)?;
        let json = serde_json::to_string(&run.summary).map_err(|e| Fail(AtStatus::Other, e.to_string()))?;
        *summary = CString::new(json).map_err(|e| Fail(AtStatus::Other, e.to_string()))?.into_raw();
        match run.failure {
            None => Ok(()),
            Some(f) => Err(Fail(AtStatus::from_exit_code(f.exit_code), f.message)),
        }
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn at_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
