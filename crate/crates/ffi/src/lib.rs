//! C interface to `gfl-core`.
//!
//! Systems and trajectories are opaque handles created and released by the
//! library. Every fallible call returns a [`GflStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`gfl_last_error_message`]. Strings handed out by the library are freed
//! with [`gfl_string_free`].

use gfl_core::cli;
use gfl_core::diagnostics::edb_report;
use gfl_core::mms_solver::{run_mms, MmsOptions};
use gfl_core::model_zoo::{self, Params, ZooEntry};
use gfl_core::rate_independent::run_tims;
use gfl_core::{GflError, StateVec};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GflStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad argument: unknown system, malformed parameters, wrong length.
    InvalidArgument = 2,
    /// The solver failed to produce a step.
    Solver = 3,
    /// A scenario run ended with a hard diagnostic outside its tolerance.
    DiagnosticFailed = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// A registered model system with its parameters and initial datum.
pub struct GflSystem {
    entry: ZooEntry,
    u0: StateVec,
    t_end: f64,
    steps: usize,
}

/// Node times and states of a discrete trajectory.
pub struct GflTrajectory {
    times: Vec<f64>,
    states: Vec<StateVec>,
    mms: Option<gfl_core::mms_solver::Trajectory>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: GflStatus, msg: impl Into<String>) -> GflStatus {
    set_error(msg);
    status
}

fn from_core(e: GflError) -> GflStatus {
    let status = match e {
        GflError::InvalidParameter(_) | GflError::DimensionMismatch { .. } | GflError::GridMismatch | GflError::OutOfRange(_) => GflStatus::InvalidArgument,
        _ => GflStatus::Solver,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> GflStatus) -> GflStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into());
            fail(GflStatus::Internal, msg)
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, GflStatus> {
    if p.is_null() {
        return Err(fail(GflStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GflStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn parse_params(json: Option<&str>) -> Result<Params, GflStatus> {
    match json.map(str::trim) {
        None | Some("") => Ok(Params::new()),
        Some(s) => serde_json::from_str(s).map_err(|e| fail(GflStatus::InvalidArgument, format!("parameters: {e}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn gfl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Registered systems as a JSON array of `{"id", "description"}` objects.
///
/// # Safety
/// `out` must be a valid pointer; the string it receives is freed with
/// [`gfl_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gfl_list_systems(out: *mut *mut c_char) -> GflStatus {
    guard(|| {
        if out.is_null() {
            return fail(GflStatus::NullPointer, "out is null");
        }
        let list: Vec<_> = model_zoo::list_systems().into_iter().map(|(id, d)| serde_json::json!({ "id": id, "description": d })).collect();
        let text = serde_json::Value::Array(list).to_string();
        *out = CString::new(text).expect("no interior NUL").into_raw();
        GflStatus::Ok
    })
}

/// Builds system `id`. `params_json` is null or a JSON object of numeric
/// parameters, e.g. `{"a": 2.0}`.
///
/// # Safety
/// `id` must be a NUL-terminated string, `params_json` null or one, and
/// `out` a valid pointer. The handle is released with [`gfl_system_free`].
#[no_mangle]
pub unsafe extern "C" fn gfl_system_new(id: *const c_char, params_json: *const c_char, out: *mut *mut GflSystem) -> GflStatus {
    guard(|| {
        if out.is_null() {
            return fail(GflStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let id = match read_str(id, "id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let json = if params_json.is_null() {
            None
        } else {
            match read_str(params_json, "params_json") {
                Ok(s) => Some(s),
                Err(s) => return s,
            }
        };
        let params = match parse_params(json) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let entry = match model_zoo::build(id, &params) {
            Ok(e) => e,
            Err(e) => return from_core(e),
        };
        let (u0, t_end, steps) = match &entry {
            ZooEntry::Gradient(g) => (g.u0.clone(), g.t_end, g.steps),
            ZooEntry::Eris(e) => (e.u0.clone(), e.t_end, e.steps),
            ZooEntry::Check(_) => (StateVec::zeros(0), 0.0, 0),
        };
        *out = Box::into_raw(Box::new(GflSystem { entry, u0, t_end, steps }));
        GflStatus::Ok
    })
}

/// # Safety
/// `sys` must be null or a handle from [`gfl_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfl_system_free(sys: *mut GflSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State dimension; 0 for check entries or a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gfl_system_dim(sys: *const GflSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.u0.len())
}

/// Default horizon and step count of the system.
///
/// # Safety
/// `sys` must be a live handle; `t_end` and `steps` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gfl_system_defaults(sys: *const GflSystem, t_end: *mut f64, steps: *mut usize) -> GflStatus {
    guard(|| {
        let (Some(s), false, false) = (sys.as_ref(), t_end.is_null(), steps.is_null()) else {
            return fail(GflStatus::NullPointer, "null argument");
        };
        *t_end = s.t_end;
        *steps = s.steps;
        GflStatus::Ok
    })
}

/// Copies the default initial state into `buf` of length `len`, which
/// must equal [`gfl_system_dim`].
///
/// # Safety
/// `sys` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_system_initial_state(sys: *const GflSystem, buf: *mut f64, len: usize) -> GflStatus {
    guard(|| {
        let Some(s) = sys.as_ref() else {
            return fail(GflStatus::NullPointer, "sys is null");
        };
        if buf.is_null() {
            return fail(GflStatus::NullPointer, "buf is null");
        }
        if len != s.u0.len() {
            return fail(GflStatus::InvalidArgument, format!("buffer holds {len} values, state has {}", s.u0.len()));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(s.u0.as_slice());
        GflStatus::Ok
    })
}

/// Runs the discrete scheme on `[0, t_end]` with `n` uniform steps from
/// `u0` (length [`gfl_system_dim`]; null for the default datum). Gradient
/// systems use minimizing movements, rate-independent ones the incremental
/// minimization.
///
/// # Safety
/// `sys` must be a live handle, `u0` null or valid for `len` reads, and
/// `out` a valid pointer. The trajectory is released with
/// [`gfl_trajectory_free`].
#[no_mangle]
pub unsafe extern "C" fn gfl_run(sys: *const GflSystem, u0: *const f64, len: usize, t_end: f64, n: usize, out: *mut *mut GflTrajectory) -> GflStatus {
    guard(|| {
        let Some(s) = sys.as_ref() else {
            return fail(GflStatus::NullPointer, "sys is null");
        };
        if out.is_null() {
            return fail(GflStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let start = if u0.is_null() {
            s.u0.clone()
        } else {
            if len != s.u0.len() {
                return fail(GflStatus::InvalidArgument, format!("u0 has {len} values, state has {}", s.u0.len()));
            }
            StateVec::from_column_slice(std::slice::from_raw_parts(u0, len))
        };
        if n == 0 || !(t_end > 0.0) || !t_end.is_finite() {
            return fail(GflStatus::InvalidArgument, "need n ≥ 1 and a finite t_end > 0");
        }
        let traj = match &s.entry {
            ZooEntry::Gradient(g) => run_mms(&g.system, &start, 0.0, t_end, n, &MmsOptions::default())
                .map(|tr| GflTrajectory { times: tr.times.clone(), states: tr.states.clone(), mms: Some(tr) }),
            ZooEntry::Eris(e) => {
                let times: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
                run_tims(&e.system, &start, &times).map(|tr| GflTrajectory { times: tr.times, states: tr.states, mms: None })
            }
            ZooEntry::Check(_) => return fail(GflStatus::InvalidArgument, "check entries have no dynamics"),
        };
        match traj {
            Ok(t) => {
                *out = Box::into_raw(Box::new(t));
                GflStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `traj` must be null or a handle from [`gfl_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_free(traj: *mut GflTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_len(traj: *const GflTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.times.len())
}

/// Time and state of node `k`; `state` must hold the system dimension.
///
/// # Safety
/// `traj` must be a live handle, `time` a valid pointer and `state` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_node(traj: *const GflTrajectory, k: usize, time: *mut f64, state: *mut f64, len: usize) -> GflStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(GflStatus::NullPointer, "traj is null");
        };
        if time.is_null() || state.is_null() {
            return fail(GflStatus::NullPointer, "null output");
        }
        let Some(u) = t.states.get(k) else {
            return fail(GflStatus::InvalidArgument, format!("node {k} of {}", t.states.len()));
        };
        if len != u.len() {
            return fail(GflStatus::InvalidArgument, format!("buffer holds {len} values, state has {}", u.len()));
        }
        *time = t.times[k];
        std::slice::from_raw_parts_mut(state, len).copy_from_slice(u.as_slice());
        GflStatus::Ok
    })
}

/// Signed energy-dissipation balance residual over the whole run.
///
/// # Safety
/// `sys` and `traj` must be live handles, `traj` produced from `sys`, and
/// `residual` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gfl_edb_residual(sys: *const GflSystem, traj: *const GflTrajectory, residual: *mut f64) -> GflStatus {
    guard(|| {
        let (Some(s), Some(t)) = (sys.as_ref(), traj.as_ref()) else {
            return fail(GflStatus::NullPointer, "null handle");
        };
        if residual.is_null() {
            return fail(GflStatus::NullPointer, "residual is null");
        }
        let (ZooEntry::Gradient(g), Some(tr)) = (&s.entry, &t.mms) else {
            return fail(GflStatus::InvalidArgument, "the balance needs a gradient-system run");
        };
        if tr.states[0].len() != g.u0.len() {
            return fail(GflStatus::InvalidArgument, "trajectory belongs to another system");
        }
        let n = tr.times.len() - 1;
        match edb_report(&g.system, tr, tr.t0(), tr.t_end(), 10 * n.max(1)) {
            Ok(r) => {
                *residual = r.residual;
                GflStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Runs a scenario file as `gfl run` does and writes `trajectory.csv` and
/// `report.json` to `out_dir` (null: the scenario's own setting).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn gfl_run_scenario(path: *const c_char, out_dir: *const c_char) -> GflStatus {
    guard(|| {
        let path = match read_str(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let dir = if out_dir.is_null() {
            None
        } else {
            match read_str(out_dir, "out_dir") {
                Ok(s) => Some(Path::new(s)),
                Err(s) => return s,
            }
        };
        let mut sink = Vec::new();
        match cli::run(Path::new(path), dir, false, &mut sink) {
            Ok(cli::EXIT_OK) => GflStatus::Ok,
            Ok(_) => fail(GflStatus::DiagnosticFailed, String::from_utf8_lossy(&sink).into_owned()),
            Err(e) => {
                let status = match &e {
                    cli::CliError::Solver { .. } => GflStatus::Solver,
                    cli::CliError::Io { .. } => GflStatus::Io,
                    _ => GflStatus::InvalidArgument,
                };
                fail(status, e.to_string())
            }
        }
    })
}
