//! C ABI for skewlab. Objects cross the boundary as opaque handles that the
//! caller releases with the matching `*_free`; structured results are JSON
//! strings released with `skewlab_string_free`. Every entry point returns a
//! [`SkewlabStatus`]; the message of the last failure on the calling thread is
//! available from `skewlab_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use skewlab::covers::{rescaled_lift, CoverIndex};
use skewlab::dynamics::Dynamics;
use skewlab::engine::{self, RunConfig, StageState};
use skewlab::maps::Program;
use skewlab::spectral::{eigenvalue_amplitude, Observable};
use skewlab::Error;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    CertificateFailure = 4,
    BudgetExhausted = 5,
    Io = 6,
    CorruptCheckpoint = 7,
    InvalidParams = 8,
    Panic = 9,
    Other = 10,
}

/// A construction state (all completed stages).
pub struct SkewlabState {
    inner: StageState,
}

/// A stage map, possibly a rescaled lift, ready for iteration.
pub struct SkewlabMap {
    program: Program,
    dynamics: Dynamics,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SkewlabStatus {
    match e {
        Error::Config(_) => SkewlabStatus::Config,
        Error::CertificateFailure(_) => SkewlabStatus::CertificateFailure,
        Error::BudgetExhausted { .. } | Error::WidthUnderflow { .. } => SkewlabStatus::BudgetExhausted,
        Error::Io(_) | Error::MissingArtifact(_) => SkewlabStatus::Io,
        Error::CorruptCheckpoint(_) | Error::VersionMismatch { .. } | Error::Json(_) => SkewlabStatus::CorruptCheckpoint,
        Error::InvalidParams(_) | Error::InvalidRotation(_) | Error::NotCoprime { .. } | Error::NonMonotoneFiber { .. } => {
            SkewlabStatus::InvalidParams
        }
        Error::ClusterAmbiguity { .. } => SkewlabStatus::Other,
    }
}

struct Fail(SkewlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SkewlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SkewlabStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&m);
            SkewlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SkewlabStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SkewlabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(SkewlabStatus::NullArgument, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SkewlabStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skewlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread (empty after a success). The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn skewlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn skewlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the construction. `config_json` may be null for the default
/// configuration. When `checkpoint_dir` is non-null a `stage_k.json`
/// checkpoint is written after every stage.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_construct(
    config_json: *const c_char,
    checkpoint_dir: *const c_char,
    out: *mut *mut SkewlabState,
) -> SkewlabStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg: RunConfig = if config_json.is_null() {
            RunConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(|e| Fail(SkewlabStatus::Config, e.to_string()))?
        };
        let dir = if checkpoint_dir.is_null() { None } else { Some(Path::new(str_arg(checkpoint_dir, "checkpoint_dir")?)) };
        let state = engine::run(&cfg, None, |s| {
            if let Some(d) = dir {
                engine::save_checkpoint(s, d)?;
            }
            Ok(())
        })?;
        *out = Box::into_raw(Box::new(SkewlabState { inner: state }));
        Ok(())
    })
}

/// Loads a `stage_k.json` checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_load(path: *const c_char, out: *mut *mut SkewlabState) -> SkewlabStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let state = engine::load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SkewlabState { inner: state }));
        Ok(())
    })
}

/// Writes the state as `dir/stage_k.json`.
///
/// # Safety
/// `state` must be a live handle; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_save(state: *const SkewlabState, dir: *const c_char) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        engine::save_checkpoint(&s.inner, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_free(state: *mut SkewlabState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of completed stages.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_completed(state: *const SkewlabState, out: *mut u64) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        out_arg(out, "out")?;
        *out = s.inner.completed();
        Ok(())
    })
}

/// Summary rows as a JSON array; free with `skewlab_string_free`.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_summary_json(state: *const SkewlabState, out: *mut *mut c_char) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        out_arg(out, "out")?;
        *out = to_c_string(serde_json::to_string(&engine::summary(&s.inner)).map_err(Error::from)?);
        Ok(())
    })
}

/// All certificates as a JSON array; free with `skewlab_string_free`.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_certificates_json(state: *const SkewlabState, out: *mut *mut c_char) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        out_arg(out, "out")?;
        *out = to_c_string(serde_json::to_string(&s.inner.certificates).map_err(Error::from)?);
        Ok(())
    })
}

/// Capt report for completed stage `stage` as JSON.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_capt_json(
    state: *const SkewlabState,
    stage: u64,
    orbit_n: u64,
    out: *mut *mut c_char,
) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        out_arg(out, "out")?;
        let r = engine::capt_check(&s.inner, stage, orbit_n)?;
        *out = to_c_string(serde_json::to_string(&r).map_err(Error::from)?);
        Ok(())
    })
}

/// The totally irrational map of completed stage `stage` (0 = latest), or its
/// rescaled lift to the `(l, m)` cover with deck index `(s1, s2)`; `l = m = 1`
/// gives the map itself.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_state_map(
    state: *const SkewlabState,
    stage: u64,
    l: u32,
    m: u32,
    s1: u32,
    s2: u32,
    out: *mut *mut SkewlabMap,
) -> SkewlabStatus {
    guard(|| {
        let s = ref_arg(state, "state")?;
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let k = if stage == 0 { s.inner.completed() } else { stage };
        if k == 0 || k > s.inner.completed() {
            return Err(Fail(SkewlabStatus::InvalidParams, format!("stage {k} is not completed")));
        }
        let cover = CoverIndex::new(l, m, [s1, s2])?;
        let map = rescaled_lift(&s.inner.phi_hat(k), cover)?;
        let dynamics = Dynamics::from_map(&map);
        *out = Box::into_raw(Box::new(SkewlabMap { program: map.compile(), dynamics }));
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn skewlab_map_free(map: *mut SkewlabMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Evaluates the map once at `(x, y)`.
///
/// # Safety
/// `map` must be a live handle; `out_xy` must hold 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn skewlab_map_eval(map: *const SkewlabMap, x: f64, y: f64, out_xy: *mut f64) -> SkewlabStatus {
    guard(|| {
        let m = ref_arg(map, "map")?;
        out_arg(out_xy, "out_xy")?;
        let z = m.program.eval([x, y]);
        *out_xy = z[0];
        *out_xy.add(1) = z[1];
        Ok(())
    })
}

/// Writes `n` orbit points as interleaved `x, y` into `out_xy` (2n doubles).
/// For conjugated maps the start is given in rotation coordinates.
///
/// # Safety
/// `map` must be a live handle; `out_xy` must hold `2n` doubles.
#[no_mangle]
pub unsafe extern "C" fn skewlab_map_orbit(map: *const SkewlabMap, x: f64, y: f64, n: u64, out_xy: *mut f64) -> SkewlabStatus {
    guard(|| {
        let m = ref_arg(map, "map")?;
        out_arg(out_xy, "out_xy")?;
        let buf = std::slice::from_raw_parts_mut(out_xy, 2 * n as usize);
        for (i, z) in m.dynamics.stepper([x, y]).take(n as usize).enumerate() {
            buf[2 * i] = z[0];
            buf[2 * i + 1] = z[1];
        }
        Ok(())
    })
}

/// `a_N(θ)` for the observable `e^{2πi(kx+ly)}` along one orbit.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_map_amplitude(
    map: *const SkewlabMap,
    k: i64,
    l: i64,
    theta: f64,
    x: f64,
    y: f64,
    n: u64,
    out: *mut f64,
) -> SkewlabStatus {
    guard(|| {
        let m = ref_arg(map, "map")?;
        out_arg(out, "out")?;
        if n == 0 {
            return Err(Fail(SkewlabStatus::InvalidParams, "N must be positive".into()));
        }
        *out = eigenvalue_amplitude(Observable::Exp { k, l }, &m.dynamics, theta, [x, y], n);
        Ok(())
    })
}

/// Base rotation number of the map.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skewlab_map_base_rotation(map: *const SkewlabMap, out: *mut f64) -> SkewlabStatus {
    guard(|| {
        let m = ref_arg(map, "map")?;
        out_arg(out, "out")?;
        *out = m.dynamics.base_rotation();
        Ok(())
    })
}
