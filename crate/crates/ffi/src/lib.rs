//! C ABI over the staged pipeline.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns an [`RwStatus`];
//! on failure the message is available from [`rw_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use renewwatch::pipeline::{run_stage, PipelineConfig, PipelineError, RunManifest, Stage};

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad configuration value or unreadable config file.
    Config = 3,
    /// A stage ran before the stage it depends on.
    Dependency = 4,
    /// Input data missing or malformed.
    Data = 5,
    /// The library panicked; the handle that was passed in should be freed.
    Internal = 6,
}

/// Pipeline configuration.
pub struct RwConfig {
    inner: PipelineConfig,
}

/// Manifest returned by a stage run.
pub struct RwManifest {
    inner: RunManifest,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: RwStatus, msg: impl Into<String>) -> RwStatus {
    set_error(msg);
    status
}

fn from_pipeline(e: PipelineError) -> RwStatus {
    let status = match e {
        PipelineError::Config(_) => RwStatus::Config,
        PipelineError::Dependency { .. } => RwStatus::Dependency,
        PipelineError::Data(_) => RwStatus::Data,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`RwStatus::Internal`].
fn guard(f: impl FnOnce() -> RwStatus) -> RwStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        fail(RwStatus::Internal, format!("internal error: {msg}"))
    })
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RwStatus> {
    if p.is_null() {
        return Err(fail(RwStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RwStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration holding the defaults. Never null.
#[no_mangle]
pub extern "C" fn rw_config_default() -> *mut RwConfig {
    Box::into_raw(Box::new(RwConfig { inner: PipelineConfig::default() }))
}

/// Reads a TOML configuration file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rw_config_load(path: *const c_char, out: *mut *mut RwConfig) -> RwStatus {
    guard(|| {
        if out.is_null() {
            return fail(RwStatus::NullArgument, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match PipelineConfig::load(path.as_ref()) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(RwConfig { inner: c }));
                RwStatus::Ok
            }
            Err(e) => from_pipeline(e),
        }
    })
}

/// Parses configuration text into `*out`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rw_config_parse(toml: *const c_char, out: *mut *mut RwConfig) -> RwStatus {
    guard(|| {
        if out.is_null() {
            return fail(RwStatus::NullArgument, "out is null");
        }
        let text = match str_arg(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match PipelineConfig::from_toml(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(RwConfig { inner: c }));
                RwStatus::Ok
            }
            Err(e) => from_pipeline(e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rw_config_free(cfg: *mut RwConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rw_config_set_stage_dir(cfg: *mut RwConfig, dir: *const c_char) -> RwStatus {
    let Some(cfg) = cfg.as_mut() else {
        return fail(RwStatus::NullArgument, "cfg is null");
    };
    match str_arg(dir, "dir") {
        Ok(d) => {
            cfg.inner.stage_dir = PathBuf::from(d);
            RwStatus::Ok
        }
        Err(s) => s,
    }
}

/// Worker threads; 0 uses every core.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_config_set_workers(cfg: *mut RwConfig, workers: usize) -> RwStatus {
    let Some(cfg) = cfg.as_mut() else {
        return fail(RwStatus::NullArgument, "cfg is null");
    };
    cfg.inner.workers = workers;
    RwStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_config_set_seed(cfg: *mut RwConfig, seed: u64) -> RwStatus {
    let Some(cfg) = cfg.as_mut() else {
        return fail(RwStatus::NullArgument, "cfg is null");
    };
    cfg.inner.seed = seed;
    RwStatus::Ok
}

/// Checks every range and path in the configuration.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_config_validate(cfg: *const RwConfig) -> RwStatus {
    guard(|| match cfg.as_ref() {
        None => fail(RwStatus::NullArgument, "cfg is null"),
        Some(c) => c.inner.validate().map_or_else(from_pipeline, |()| RwStatus::Ok),
    })
}

/// Effective configuration as TOML. Release with [`rw_string_free`].
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_config_to_toml(cfg: *const RwConfig) -> *mut c_char {
    match cfg.as_ref() {
        None => {
            set_error("cfg is null");
            ptr::null_mut()
        }
        Some(c) => to_c_string(c.inner.to_toml()),
    }
}

/// Runs one stage by its CLI name (`synth`, `train-scorer`, ... `bench`)
/// and stores its manifest in `*out`. `out` may be null when the manifest
/// is not wanted.
///
/// # Safety
/// `cfg` must be a live handle, `stage` a NUL-terminated string and `out`
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn rw_run_stage(cfg: *const RwConfig, stage: *const c_char, out: *mut *mut RwManifest) -> RwStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(RwStatus::NullArgument, "cfg is null");
        };
        let stage: Stage = match str_arg(stage, "stage").map(str::parse) {
            Ok(Ok(s)) => s,
            Ok(Err(e)) => return from_pipeline(e),
            Err(s) => return s,
        };
        match run_stage(stage, &cfg.inner) {
            Ok(m) => {
                if !out.is_null() {
                    *out = Box::into_raw(Box::new(RwManifest { inner: m }));
                }
                RwStatus::Ok
            }
            Err(e) => from_pipeline(e),
        }
    })
}

/// Number of output files recorded in the manifest.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_manifest_file_count(m: *const RwManifest) -> usize {
    m.as_ref().map_or(0, |m| m.inner.files.len())
}

/// Quads scored per second, or a negative value when the stage scores none.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_manifest_quads_per_second(m: *const RwManifest) -> f64 {
    m.as_ref().and_then(|m| m.inner.quads_per_second).unwrap_or(-1.0)
}

/// Manifest as JSON, the same document the stage wrote to disk. Release
/// with [`rw_string_free`].
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rw_manifest_json(m: *const RwManifest) -> *mut c_char {
    match m.as_ref() {
        None => {
            set_error("manifest is null");
            ptr::null_mut()
        }
        Some(m) => to_c_string(serde_json::to_string_pretty(&m.inner).expect("manifest serializes")),
    }
}

/// # Safety
/// `m` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rw_manifest_free(m: *mut RwManifest) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn rw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// F2 score from precision and recall; 0 when both are 0.
#[no_mangle]
pub extern "C" fn rw_f2(precision: f64, recall: f64) -> f64 {
    renewwatch::metrics::f2(precision, recall)
}
