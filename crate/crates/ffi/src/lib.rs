//! C ABI over `sglde`.
//!
//! Objects are opaque handles created by `sglde_*` constructors and released
//! with the matching `*_free`. Every fallible call returns an [`SgldeStatus`];
//! on failure, `sglde_last_error_message` describes the error on the calling
//! thread until its next failing call. Output pointers are written only on
//! success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sglde::em::{run_em, EmConfig, EmTrace};
use sglde::estimators::{estimate_joint, EstimatorConfig};
use sglde::io::{observations_from_csv, observations_to_csv, path_from_csv, path_to_csv};
use sglde::simulate::{sample_brownian, simulate_exact, subsample, Selection};
use sglde::{Error, ObservationSet, Params, Path, RngSeed, TimeGrid};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgldeStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is outside its domain.
    InvalidArgument = 2,
    /// The numerics failed: overflow, no root, non-convergence and so on.
    Numerical = 3,
    /// A file could not be read or written.
    Io = 4,
    /// Input could not be parsed.
    Parse = 5,
    /// A caller buffer is too small.
    BufferTooSmall = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// Sampled path on a uniform grid.
pub struct SgldePath(Path);

/// Observations at arbitrary increasing times.
pub struct SgldeObservations(ObservationSet);

/// Per-iteration EM estimates.
pub struct SgldeEmTrace(EmTrace);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgldeParams {
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SgldeEstimate {
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    /// |g(m)| at the returned m.
    pub residual: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgldeEmConfig {
    pub iterations: usize,
    pub n_bridges: usize,
    pub max_attempts: usize,
    pub fine_step: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SgldeEmRow {
    pub iter: usize,
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub fallback_fraction: f64,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SgldeStatus {
    match e.root() {
        Error::Io(_) => SgldeStatus::Io,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => SgldeStatus::Parse,
        Error::Domain { .. } | Error::Config(_) => SgldeStatus::InvalidArgument,
        _ if e.is_numerical() => SgldeStatus::Numerical,
        _ => SgldeStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (SgldeStatus, String)>) -> SgldeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgldeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SgldeStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (SgldeStatus, String)>;
}

impl<T> IntoFfi<T> for sglde::Result<T> {
    fn ffi(self) -> Result<T, (SgldeStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(name: &str) -> (SgldeStatus, String) {
    (SgldeStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (SgldeStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn file_arg(p: *const c_char) -> Result<PathBuf, (SgldeStatus, String)> {
    if p.is_null() {
        return Err(null("file"));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        (
            SgldeStatus::InvalidArgument,
            "file name is not UTF-8".into(),
        )
    })
}

unsafe fn slice<'a>(
    p: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], (SgldeStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (SgldeStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), (SgldeStatus, String)> {
    if cap < src.len() {
        return Err((
            SgldeStatus::BufferTooSmall,
            format!("buffer holds {cap} values, need {}", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Library version, including the git description of the build.
#[no_mangle]
pub extern "C" fn sglde_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(sglde::harness::version()).unwrap_or_default())
        .as_ptr()
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sglde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Exact simulation on `n` uniform steps of [t0, t_end] from `x0`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sglde_simulate(
    params: SgldeParams,
    x0: f64,
    t0: f64,
    t_end: f64,
    n: usize,
    seed: u64,
    out: *mut *mut SgldePath,
) -> SgldeStatus {
    guard(|| {
        let p = Params::new(params.alpha, params.m, params.sigma).ffi()?;
        let grid = TimeGrid::new(t0, t_end, n).ffi()?;
        let path = simulate_exact(
            &p,
            x0,
            &grid,
            &sample_brownian(&grid, RngSeed::new(seed, 0)),
        )
        .ffi()?;
        put(out, SgldePath(path))
    })
}

/// Wraps `len` values sampled uniformly on [t0, t_end].
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` as in [`sglde_simulate`].
#[no_mangle]
pub unsafe extern "C" fn sglde_path_from_values(
    t0: f64,
    t_end: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut SgldePath,
) -> SgldeStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        if len < 2 {
            return Err((
                SgldeStatus::InvalidArgument,
                "a path needs at least two values".into(),
            ));
        }
        let grid = TimeGrid::new(t0, t_end, len - 1).ffi()?;
        put(out, SgldePath(Path::new(grid, v.to_vec()).ffi()?))
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sglde_path_len(path: *const SgldePath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the samples into `buf`, which must hold `sglde_path_len` values.
///
/// # Safety
/// `path` must be a live handle and `buf` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sglde_path_values(
    path: *const SgldePath,
    buf: *mut f64,
    cap: usize,
) -> SgldeStatus {
    guard(|| copy_out(deref(path, "path")?.0.values(), buf, cap))
}

/// Copies the sample times into `buf`.
///
/// # Safety
/// As for [`sglde_path_values`].
#[no_mangle]
pub unsafe extern "C" fn sglde_path_times(
    path: *const SgldePath,
    buf: *mut f64,
    cap: usize,
) -> SgldeStatus {
    guard(|| {
        let times: Vec<f64> = deref(path, "path")?.0.grid().times().collect();
        copy_out(&times, buf, cap)
    })
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sglde_path_free(path: *mut SgldePath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Reads a `t,x` CSV file on a uniform grid.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` as in [`sglde_simulate`].
#[no_mangle]
pub unsafe extern "C" fn sglde_path_read_csv(
    file: *const c_char,
    out: *mut *mut SgldePath,
) -> SgldeStatus {
    guard(|| {
        let f = File::open(file_arg(file)?).map_err(|e| (SgldeStatus::Io, e.to_string()))?;
        put(out, SgldePath(path_from_csv(f).ffi()?))
    })
}

/// # Safety
/// `path` must be a live handle and `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sglde_path_write_csv(
    path: *const SgldePath,
    file: *const c_char,
) -> SgldeStatus {
    guard(|| {
        let p = deref(path, "path")?;
        let f = File::create(file_arg(file)?).map_err(|e| (SgldeStatus::Io, e.to_string()))?;
        path_to_csv(&p.0, f).ffi()
    })
}

/// Joint estimate of (α, m, σ) with the default root-search settings.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sglde_estimate_joint(
    path: *const SgldePath,
    out: *mut SgldeEstimate,
) -> SgldeStatus {
    guard(|| {
        let p = deref(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = estimate_joint(&p.0, &EstimatorConfig::default()).ffi()?;
        *out = SgldeEstimate {
            alpha: e.alpha_hat,
            m: e.m_hat,
            sigma: e.sigma_hat,
            residual: e.residual,
            converged: e.converged,
        };
        Ok(())
    })
}

/// Keeps a fraction of the grid points, always including both ends.
///
/// # Safety
/// `path` must be a live handle; `out` as in [`sglde_simulate`].
#[no_mangle]
pub unsafe extern "C" fn sglde_subsample(
    path: *const SgldePath,
    keep_fraction: f64,
    out: *mut *mut SgldeObservations,
) -> SgldeStatus {
    guard(|| {
        let p = deref(path, "path")?;
        put(
            out,
            SgldeObservations(subsample(&p.0, &Selection::Fraction(keep_fraction)).ffi()?),
        )
    })
}

/// Builds observations from `len` strictly increasing times and positive values.
///
/// # Safety
/// `times` and `values` must point to `len` readable doubles each.
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_from_values(
    times: *const f64,
    values: *const f64,
    len: usize,
    out: *mut *mut SgldeObservations,
) -> SgldeStatus {
    guard(|| {
        let t = slice(times, len, "times")?.to_vec();
        let x = slice(values, len, "values")?.to_vec();
        put(out, SgldeObservations(ObservationSet::new(t, x).ffi()?))
    })
}

/// # Safety
/// `obs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_len(obs: *const SgldeObservations) -> usize {
    obs.as_ref().map_or(0, |o| o.0.len())
}

/// Copies times and values into two buffers of at least `sglde_observations_len` entries.
///
/// # Safety
/// `obs` must be a live handle; both buffers writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_get(
    obs: *const SgldeObservations,
    times: *mut f64,
    values: *mut f64,
    cap: usize,
) -> SgldeStatus {
    guard(|| {
        let o = deref(obs, "obs")?;
        copy_out(o.0.times(), times, cap)?;
        copy_out(o.0.values(), values, cap)
    })
}

/// # Safety
/// `obs` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_free(obs: *mut SgldeObservations) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

/// # Safety
/// As for [`sglde_path_read_csv`].
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_read_csv(
    file: *const c_char,
    out: *mut *mut SgldeObservations,
) -> SgldeStatus {
    guard(|| {
        let f = File::open(file_arg(file)?).map_err(|e| (SgldeStatus::Io, e.to_string()))?;
        put(out, SgldeObservations(observations_from_csv(f).ffi()?))
    })
}

/// # Safety
/// As for [`sglde_path_write_csv`].
#[no_mangle]
pub unsafe extern "C" fn sglde_observations_write_csv(
    obs: *const SgldeObservations,
    file: *const c_char,
) -> SgldeStatus {
    guard(|| {
        let o = deref(obs, "obs")?;
        let f = File::create(file_arg(file)?).map_err(|e| (SgldeStatus::Io, e.to_string()))?;
        observations_to_csv(&o.0, f).ffi()
    })
}

/// Default EM settings: 10 iterations, 100 bridges per gap, 50 attempts per
/// bridge, fine step 1e-3, seed 0.
#[no_mangle]
pub extern "C" fn sglde_em_config_default() -> SgldeEmConfig {
    let d = EmConfig::default();
    SgldeEmConfig {
        iterations: d.iterations,
        n_bridges: d.n_bridges,
        max_attempts: d.max_attempts,
        fine_step: d.fine_step,
        seed: d.seed.master,
    }
}

/// Runs Monte-Carlo EM. A null `config` uses [`sglde_em_config_default`].
///
/// # Safety
/// `obs` must be a live handle, `config` null or readable, `out` as in [`sglde_simulate`].
#[no_mangle]
pub unsafe extern "C" fn sglde_em_run(
    obs: *const SgldeObservations,
    config: *const SgldeEmConfig,
    out: *mut *mut SgldeEmTrace,
) -> SgldeStatus {
    guard(|| {
        let o = deref(obs, "obs")?;
        let c = config
            .as_ref()
            .copied()
            .unwrap_or_else(|| sglde_em_config_default());
        let cfg = EmConfig {
            iterations: c.iterations,
            n_bridges: c.n_bridges,
            max_attempts: c.max_attempts,
            fine_step: c.fine_step,
            seed: RngSeed::new(c.seed, 0),
            ..EmConfig::default()
        };
        put(out, SgldeEmTrace(run_em(&o.0, &cfg).ffi()?))
    })
}

/// Number of trace rows: the initial estimate plus one per iteration.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sglde_em_trace_len(trace: *const SgldeEmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.rows.len())
}

/// # Safety
/// `trace` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sglde_em_trace_get(
    trace: *const SgldeEmTrace,
    row: usize,
    out: *mut SgldeEmRow,
) -> SgldeStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let r = t.0.rows.get(row).ok_or_else(|| {
            (
                SgldeStatus::InvalidArgument,
                format!("row {row} out of range ({} rows)", t.0.rows.len()),
            )
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = SgldeEmRow {
            iter: r.iter,
            alpha: r.alpha,
            m: r.m,
            sigma: r.sigma,
            fallback_fraction: r.fallback_fraction,
            converged: r.converged,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sglde_em_trace_free(trace: *mut SgldeEmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
