//! C ABI over `vbomi`.
//!
//! Every function returns a [`VbomiStatus`]. Objects cross the boundary as
//! opaque pointers created by a `*_new`/`*_from_*` call and released with the
//! matching `*_free`. After a non-`Ok` status, [`vbomi_last_error`] copies the
//! message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vbomi::autodiff::Tensor;
use vbomi::flops::{method_flops_by_name, ComplexityParams};
use vbomi::harness::{run_method, ExperimentConfig, MethodName};
use vbomi::mi::{estimate_mi, MiEstimatorConfig};
use vbomi::trace::{RunResult, RunStatus};
use vbomi::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbomiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Objective = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Parsed experiment configuration.
pub struct VbomiConfig {
    inner: ExperimentConfig,
}

/// Result of one optimisation run.
pub struct VbomiRun {
    inner: RunResult,
}

/// One iteration of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VbomiTraceRow {
    pub iteration: u64,
    pub mean_reward: f64,
    pub batch_max: f64,
    pub best_so_far: f64,
    pub s_t: f64,
    pub mi_estimate: f64,
    pub loss_action: f64,
    pub loss_critic: f64,
    pub model_flops: u64,
}

/// Model FLOPs of one BO iteration. Values above `u64::MAX` saturate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VbomiFlopReport {
    pub t: u64,
    pub surrogate_flops: u64,
    pub acquisition_flops: u64,
    pub total: u64,
    pub ratio_vs_vbo: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> VbomiStatus {
    match e {
        Error::Config(_) | Error::UnknownKeys(_) | Error::Unknown { .. } | Error::Io { .. } => VbomiStatus::Config,
        Error::Cholesky { .. } | Error::NonFinite(_) | Error::TrainingDiverged(_) => VbomiStatus::Numerical,
        Error::OutOfBounds { .. }
        | Error::ObjectiveNaN { .. }
        | Error::SimulationDiverged { .. }
        | Error::Unstable { .. } => VbomiStatus::Objective,
        _ => VbomiStatus::InvalidArgument,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (VbomiStatus, String)>) -> VbomiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VbomiStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VbomiStatus::Panic
        }
    }
}

fn lift<T>(r: vbomi::Result<T>) -> Result<T, (VbomiStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (VbomiStatus, String) {
    (VbomiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VbomiStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VbomiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy the calling thread's last error message into `buf` as a
/// NUL-terminated string. `*needed` receives the size including the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn vbomi_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> VbomiStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len() + 1;
        if !needed.is_null() {
            *needed = n;
        }
        if buf.is_null() || len < n {
            return VbomiStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
        *buf.add(msg.len()) = 0;
        VbomiStatus::Ok
    })
}

/// Parse an experiment configuration from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vbomi_config_from_toml(toml: *const c_char, out: *mut *mut VbomiConfig) -> VbomiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let inner = lift(ExperimentConfig::from_toml(text))?;
        *out = Box::into_raw(Box::new(VbomiConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a pointer from [`vbomi_config_from_toml`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vbomi_config_free(cfg: *mut VbomiConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run `method` (`vbo`, `gp_ucb`, `random`, `vbo_gp_exploration`,
/// `vbo_gp_exploitation`) for one seed.
///
/// # Safety
/// `cfg` must be a live config, `method` a NUL-terminated string and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vbomi_run(
    cfg: *const VbomiConfig,
    method: *const c_char,
    seed: u64,
    out: *mut *mut VbomiRun,
) -> VbomiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let m: MethodName = lift(str_arg(method, "method")?.parse())?;
        let inner = lift(run_method(&cfg.inner, m, seed))?;
        *out = Box::into_raw(Box::new(VbomiRun { inner }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a pointer from [`vbomi_run`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vbomi_run_free(run: *mut VbomiRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Counts of a run: iterations recorded, objective calls, input dimension,
/// and whether it completed (1) or hit its budget cap (0).
///
/// # Safety
/// `run` must be live; each output pointer must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn vbomi_run_info(
    run: *const VbomiRun,
    iterations: *mut usize,
    evaluations: *mut usize,
    dim: *mut usize,
    completed: *mut i32,
) -> VbomiStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.inner;
        if !iterations.is_null() {
            *iterations = r.traces.len();
        }
        if !evaluations.is_null() {
            *evaluations = r.evaluations;
        }
        if !dim.is_null() {
            *dim = r.best_x.len();
        }
        if !completed.is_null() {
            *completed = i32::from(r.status == RunStatus::Completed);
        }
        Ok(())
    })
}

/// Best observation and its input; `x` receives `dim` values.
///
/// # Safety
/// `run` must be live, `best_y` valid, and `x` valid for `x_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vbomi_run_best(
    run: *const VbomiRun,
    best_y: *mut f64,
    x: *mut f64,
    x_len: usize,
) -> VbomiStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.inner;
        if best_y.is_null() || x.is_null() {
            return Err(null("output"));
        }
        if x_len < r.best_x.len() {
            return Err((
                VbomiStatus::BufferTooSmall,
                format!("x needs {} values, got {x_len}", r.best_x.len()),
            ));
        }
        *best_y = r.best_y;
        ptr::copy_nonoverlapping(r.best_x.as_ptr(), x, r.best_x.len());
        Ok(())
    })
}

/// Row `index` (0-based) of the run's trace.
///
/// # Safety
/// `run` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vbomi_run_trace(run: *const VbomiRun, index: usize, out: *mut VbomiTraceRow) -> VbomiStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let t = r.traces.get(index).ok_or_else(|| {
            (
                VbomiStatus::InvalidArgument,
                format!("trace index {index} out of range ({} rows)", r.traces.len()),
            )
        })?;
        *out = VbomiTraceRow {
            iteration: t.iteration as u64,
            mean_reward: t.mean_reward,
            batch_max: t.batch_max,
            best_so_far: t.best_so_far,
            s_t: t.s_t,
            mi_estimate: t.mi_estimate,
            loss_action: t.loss_action,
            loss_critic: t.loss_critic,
            model_flops: t.model_flops,
        };
        Ok(())
    })
}

/// Cost model for `method` (`gp`, `hmc`, `dkl`, `lla`, `vbo`) at `t`
/// observations with the default constants.
///
/// # Safety
/// `method` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vbomi_flops(method: *const c_char, t: u64, out: *mut VbomiFlopReport) -> VbomiStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = lift(method_flops_by_name(
            str_arg(method, "method")?,
            t,
            &ComplexityParams::default(),
        ))?;
        let sat = |v: u128| u64::try_from(v).unwrap_or(u64::MAX);
        *out = VbomiFlopReport {
            t: r.t,
            surrogate_flops: sat(r.surrogate_flops),
            acquisition_flops: sat(r.acquisition_flops),
            total: sat(r.total),
            ratio_vs_vbo: r.ratio_vs_vbo,
        };
        Ok(())
    })
}

/// Estimate `I(X; Y)` in nats from `n` row-major samples with default
/// estimator settings.
///
/// # Safety
/// `x` must hold `n·dx` doubles, `y` `n·dy` doubles, and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vbomi_estimate_mi(
    x: *const f64,
    y: *const f64,
    n: usize,
    dx: usize,
    dy: usize,
    seed: u64,
    out: *mut f64,
) -> VbomiStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let (nx, ny) = match (n.checked_mul(dx), n.checked_mul(dy)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err((VbomiStatus::InvalidArgument, "sample size overflows".into())),
        };
        let xt = lift(Tensor::new(vec![n, dx], std::slice::from_raw_parts(x, nx).to_vec()))?;
        let yt = lift(Tensor::new(vec![n, dy], std::slice::from_raw_parts(y, ny).to_vec()))?;
        let cfg = MiEstimatorConfig {
            seed,
            ..MiEstimatorConfig::default()
        };
        *out = lift(estimate_mi(&xt, &yt, &cfg))?.estimate.value;
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vbomi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
