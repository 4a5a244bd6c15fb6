//! C ABI over the `molres` crate.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`
//! function and released with the matching `*_free`. Every fallible call
//! returns a [`MolresStatus`]; on failure the message is kept per thread
//! and can be read with [`molres_last_error`]. Status values match the
//! exit codes of the `molres` command-line tool.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use molres::experiment::{self, Engine, ExperimentConfig, Mode, TaskSpec};
use molres::{
    BoundFractionTrace, ChannelParams, Error, ReservoirConfig, StochasticConfig, TaskKind,
    TaskSeries,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MolresStatus {
    Ok = 0,
    /// Invalid argument, configuration or I/O failure.
    Invalid = 2,
    ResourceCap = 3,
    Numerical = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MolresTaskKind {
    ForecastMg = 0,
    SineToSquare = 1,
    MgCubed = 2,
}

impl From<MolresTaskKind> for TaskKind {
    fn from(k: MolresTaskKind) -> Self {
        match k {
            MolresTaskKind::ForecastMg => TaskKind::ForecastMg,
            MolresTaskKind::SineToSquare => TaskKind::SineToSquare,
            MolresTaskKind::MgCubed => TaskKind::MgCubed,
        }
    }
}

/// Opaque channel parameter set.
pub struct MolresParams(ChannelParams);

/// Opaque benchmark series.
pub struct MolresTask(TaskSeries);

/// Opaque bound-fraction trace.
pub struct MolresTrace(BoundFractionTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MolresStatus {
    match err.exit_code() {
        3 => MolresStatus::ResourceCap,
        4 => MolresStatus::Numerical,
        _ => MolresStatus::Invalid,
    }
}

fn invalid(msg: &str) -> MolresStatus {
    set_error(msg.to_owned());
    MolresStatus::Invalid
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> MolresStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MolresStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            MolresStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn molres_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn molres_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a parameter set. `distance` is in metres.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn molres_params_new(
    k_on: f64,
    k_off: f64,
    symbol_duration: f64,
    distance: f64,
    n_max: u32,
    diffusion: f64,
    memory_window: usize,
    out: *mut *mut MolresParams,
) -> MolresStatus {
    if out.is_null() {
        return invalid("out is NULL");
    }
    guard(|| {
        let p = ChannelParams {
            k_on,
            k_off,
            symbol_duration,
            distance,
            n_max,
            diffusion,
            memory_window,
        };
        p.validate()?;
        *out = Box::into_raw(Box::new(MolresParams(p)));
        Ok(())
    })
}

/// Preset optimum for `kind`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn molres_params_preset(
    kind: MolresTaskKind,
    out: *mut *mut MolresParams,
) -> MolresStatus {
    if out.is_null() {
        return invalid("out is NULL");
    }
    let p = match kind {
        MolresTaskKind::ForecastMg => ChannelParams::FORECASTING,
        MolresTaskKind::SineToSquare => ChannelParams::TRANSFORMATION,
        MolresTaskKind::MgCubed => ChannelParams::HYBRID,
    };
    *out = Box::into_raw(Box::new(MolresParams(p)));
    clear_error();
    MolresStatus::Ok
}

/// Dissociation constant `k_off / k_on` in m^-3, or NaN for NULL.
///
/// # Safety
/// `params` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn molres_params_dissociation_constant(params: *const MolresParams) -> f64 {
    params
        .as_ref()
        .map_or(f64::NAN, |p| p.0.dissociation_constant())
}

/// # Safety
/// `params` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn molres_params_free(params: *mut MolresParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Generate a benchmark series. `horizon` 0 selects the task default;
/// `seed` seeds the Mackey-Glass history.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn molres_task_new(
    kind: MolresTaskKind,
    num_symbols: usize,
    horizon: usize,
    seed: u64,
    out: *mut *mut MolresTask,
) -> MolresStatus {
    if out.is_null() {
        return invalid("out is NULL");
    }
    guard(|| {
        let spec = TaskSpec {
            horizon: (horizon > 0).then_some(horizon),
            num_symbols,
            mg_seed: seed,
            ..TaskSpec::new(kind.into())
        };
        *out = Box::into_raw(Box::new(MolresTask(spec.build(None)?)));
        Ok(())
    })
}

/// Number of symbols, 0 for NULL.
///
/// # Safety
/// `task` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn molres_task_len(task: *const MolresTask) -> usize {
    task.as_ref().map_or(0, |t| t.0.len())
}

/// Copy up to `cap` inputs into `buf`; returns the number copied.
///
/// # Safety
/// `task` must be a live handle and `buf` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn molres_task_inputs(
    task: *const MolresTask,
    buf: *mut f64,
    cap: usize,
) -> usize {
    match (task.as_ref(), buf.is_null()) {
        (Some(t), false) => {
            let n = cap.min(t.0.inputs.len());
            ptr::copy_nonoverlapping(t.0.inputs.as_ptr(), buf, n);
            n
        }
        _ => 0,
    }
}

/// # Safety
/// `task` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn molres_task_free(task: *mut MolresTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Deterministic bound-fraction trace for `len` inputs in `[0, 1]`.
///
/// # Safety
/// `params` must be a live handle, `inputs` must point to `len` values and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn molres_simulate(
    params: *const MolresParams,
    inputs: *const f64,
    len: usize,
    out: *mut *mut MolresTrace,
) -> MolresStatus {
    let (Some(p), false, false) = (params.as_ref(), inputs.is_null(), out.is_null()) else {
        return invalid("NULL argument");
    };
    let inputs = std::slice::from_raw_parts(inputs, len);
    guard(|| {
        let trace = molres::receptor::simulate(&p.0, inputs)?;
        *out = Box::into_raw(Box::new(MolresTrace(trace)));
        Ok(())
    })
}

/// Number of samples, 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn molres_trace_len(trace: *const MolresTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Sample spacing in seconds, NaN for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn molres_trace_dt(trace: *const MolresTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.0.dt)
}

/// Copy up to `cap` samples into `buf`; returns the number copied.
///
/// # Safety
/// `trace` must be a live handle and `buf` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn molres_trace_samples(
    trace: *const MolresTrace,
    buf: *mut f64,
    cap: usize,
) -> usize {
    match (trace.as_ref(), buf.is_null()) {
        (Some(t), false) => {
            let n = cap.min(t.0.samples.len());
            ptr::copy_nonoverlapping(t.0.samples.as_ptr(), buf, n);
            n
        }
        _ => 0,
    }
}

/// # Safety
/// `trace` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn molres_trace_free(trace: *mut MolresTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Test NRMSE of the deterministic pipeline with default reservoir
/// settings (20 virtual nodes, washout 50, ridge 1e-6, 70/30 split).
///
/// # Safety
/// `params` and `task` must be live handles; `out_nrmse` must be writable.
#[no_mangle]
pub unsafe extern "C" fn molres_evaluate(
    params: *const MolresParams,
    task: *const MolresTask,
    out_nrmse: *mut f64,
) -> MolresStatus {
    let (Some(p), Some(t), false) = (params.as_ref(), task.as_ref(), out_nrmse.is_null()) else {
        return invalid("NULL argument");
    };
    guard(|| {
        *out_nrmse = experiment::deterministic_nrmse(&p.0, &t.0, &ReservoirConfig::default())?;
        Ok(())
    })
}

/// Test NRMSE of the particle pipeline averaged over `replicates` runs
/// seeded from `seed`, with a causal moving average of `filter_window`
/// samples (0 disables it).
///
/// # Safety
/// `params` and `task` must be live handles; `out_nrmse` must be writable.
#[no_mangle]
pub unsafe extern "C" fn molres_evaluate_stochastic(
    params: *const MolresParams,
    task: *const MolresTask,
    replicates: usize,
    seed: u64,
    filter_window: usize,
    out_nrmse: *mut f64,
) -> MolresStatus {
    let (Some(p), Some(t), false) = (params.as_ref(), task.as_ref(), out_nrmse.is_null()) else {
        return invalid("NULL argument");
    };
    guard(|| {
        let engine = Engine::Stochastic(StochasticConfig {
            num_replicates: replicates,
            rng_seed: seed,
            ..Default::default()
        });
        let reservoir = ReservoirConfig {
            filter_window,
            ..Default::default()
        };
        *out_nrmse = experiment::evaluate_pipeline(&p.0, &t.0, &reservoir, &engine)?.nrmse;
        Ok(())
    })
}

/// Run an experiment configuration, as the command-line tool does.
/// `mode` is one of `evaluate`, `optimize`, `crisscross`,
/// `stochastic_compare` or `filter_sweep`.
///
/// # Safety
/// The string arguments must be NULL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn molres_run_config(
    config_path: *const c_char,
    mode: *const c_char,
    out_dir: *const c_char,
    seed: u64,
) -> MolresStatus {
    let (Some(config_path), Some(mode), Some(out_dir)) =
        (str_arg(config_path), str_arg(mode), str_arg(out_dir))
    else {
        return invalid("NULL or non-UTF-8 string argument");
    };
    guard(|| {
        let mode = parse_mode(mode)?;
        let path = Path::new(config_path);
        let config = ExperimentConfig::load(path)?;
        experiment::run(&config, mode, Path::new(out_dir), seed, path.parent())?;
        Ok(())
    })
}

fn parse_mode(s: &str) -> Result<Mode, Error> {
    match s {
        "evaluate" => Ok(Mode::Evaluate),
        "optimize" => Ok(Mode::Optimize),
        "crisscross" => Ok(Mode::Crisscross),
        "stochastic_compare" => Ok(Mode::StochasticCompare),
        "filter_sweep" => Ok(Mode::FilterSweep),
        other => Err(Error::Validation(format!("unknown mode {other}"))),
    }
}
