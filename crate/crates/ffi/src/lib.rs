//! C ABI over the slacksim core.
//!
//! Objects cross the boundary as opaque handles created by `*_new`-style
//! functions and released with the matching `*_free`. Fallible calls return
//! a [`SlacksimStatus`]; on failure [`slacksim_last_error`] describes the
//! most recent error on the calling thread. Strings returned to the caller
//! are owned by it and must be released with [`slacksim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use slacksim::analysis::{compare_policies, comparison_csv, smape};
use slacksim::engine::{pcu_effective_time, run_simulation, validate_workload};
use slacksim::model::{MachineModel, PhaseKind, SimResult, Workload};
use slacksim::policies::PolicySpec;
use slacksim::workloads::{generate, workload_from_json, workload_to_json, GeneratorSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlacksimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Simulation = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Opaque workload handle.
pub struct SlacksimWorkload(Workload);

/// Opaque machine model handle.
pub struct SlacksimMachine(MachineModel);

/// Opaque simulation result handle.
pub struct SlacksimResult(SimResult);

/// Per-rank phase totals in seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlacksimPhaseTotals {
    pub comp: f64,
    pub slack: f64,
    pub copy: f64,
    pub overhead: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SlacksimStatus, String);

impl Failure {
    fn new(status: SlacksimStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SlacksimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlacksimStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SlacksimStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SlacksimStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SlacksimStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(SlacksimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(SlacksimStatus::NullPointer, format!("{name} is null")));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(SlacksimStatus::NullPointer, "out is null"));
    }
    let c = CString::new(s).map_err(|e| Failure::new(SlacksimStatus::InvalidArgument, e))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slacksim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slacksim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slacksim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default machine model.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn slacksim_machine_default(out: *mut *mut SlacksimMachine) -> SlacksimStatus {
    guard(|| put(out, SlacksimMachine(MachineModel::default()), "out"))
}

/// Machine model from JSON with every field of the model, durations in
/// seconds.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_machine_from_json(
    json: *const c_char,
    out: *mut *mut SlacksimMachine,
) -> SlacksimStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let m: MachineModel = serde_json::from_str(text).map_err(|e| Failure::new(SlacksimStatus::Parse, e))?;
        m.validate()
            .map_err(|e| Failure::new(SlacksimStatus::InvalidArgument, e))?;
        put(out, SlacksimMachine(m), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slacksim_machine_free(m: *mut SlacksimMachine) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Generates a workload from a generator spec in JSON, e.g.
/// `{"pattern":"imbalanced_barrier","n_ranks":4,"n_iterations":10,"comp_mean":"5ms"}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_workload_generate(
    spec_json: *const c_char,
    out: *mut *mut SlacksimWorkload,
) -> SlacksimStatus {
    guard(|| {
        let text = str_arg(spec_json, "spec_json")?;
        let spec: GeneratorSpec = serde_json::from_str(text).map_err(|e| Failure::new(SlacksimStatus::Parse, e))?;
        let w = generate(&spec).map_err(|e| Failure::new(SlacksimStatus::InvalidArgument, e))?;
        put(out, SlacksimWorkload(w), "out")
    })
}

/// Parses a serialized workload document and checks it for deadlocks.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_workload_from_json(
    json: *const c_char,
    out: *mut *mut SlacksimWorkload,
) -> SlacksimStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let w = workload_from_json(text, "<ffi>").map_err(|e| Failure::new(SlacksimStatus::Parse, e))?;
        put(out, SlacksimWorkload(w), "out")
    })
}

/// Serializes a workload; free the string with [`slacksim_string_free`].
///
/// # Safety
/// `w` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_workload_to_json(
    w: *const SlacksimWorkload,
    out: *mut *mut c_char,
) -> SlacksimStatus {
    guard(|| {
        let w = ref_arg(w, "workload")?;
        put_string(out, workload_to_json(&w.0))
    })
}

/// Number of ranks, 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slacksim_workload_n_ranks(w: *const SlacksimWorkload) -> usize {
    w.as_ref().map_or(0, |w| w.0.n_ranks)
}

/// # Safety
/// `w` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slacksim_workload_free(w: *mut SlacksimWorkload) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Runs `w` on `m` under `policy`, given as `kind[:theta]`
/// (e.g. `countdown-slack:500us`).
///
/// # Safety
/// `w` and `m` must be live handles, `policy` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_simulate(
    w: *const SlacksimWorkload,
    m: *const SlacksimMachine,
    policy: *const c_char,
    out: *mut *mut SlacksimResult,
) -> SlacksimStatus {
    guard(|| {
        let w = ref_arg(w, "workload")?;
        let m = ref_arg(m, "machine")?;
        let p: PolicySpec = str_arg(policy, "policy")?
            .parse()
            .map_err(|e: String| Failure::new(SlacksimStatus::InvalidArgument, e))?;
        validate_workload(&w.0).map_err(|e| Failure::new(SlacksimStatus::Simulation, e))?;
        let r = run_simulation(&w.0, &m.0, &p).map_err(|e| Failure::new(SlacksimStatus::Simulation, e))?;
        put(out, SlacksimResult(r), "out")
    })
}

/// Comparison table CSV for one workload under the default policy set.
///
/// # Safety
/// `w` and `m` must be live handles, `application` a NUL-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_compare_csv(
    application: *const c_char,
    w: *const SlacksimWorkload,
    m: *const SlacksimMachine,
    out: *mut *mut c_char,
) -> SlacksimStatus {
    guard(|| {
        let app = str_arg(application, "application")?;
        let w = ref_arg(w, "workload")?;
        let m = ref_arg(m, "machine")?;
        let row = compare_policies(app, &w.0, &m.0, &PolicySpec::comparison_set())
            .map_err(|e| Failure::new(SlacksimStatus::Simulation, e))?;
        let csv = comparison_csv(&[row]).map_err(|e| Failure::new(SlacksimStatus::Simulation, e))?;
        put_string(out, csv)
    })
}

/// Makespan in seconds, NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_makespan(r: *const SlacksimResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.makespan)
}

/// Energy in joules, NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_energy(r: *const SlacksimResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.energy)
}

/// Effective P-state transitions over all ranks.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_transitions(r: *const SlacksimResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.transition_count)
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_n_ranks(r: *const SlacksimResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.ranks.len())
}

/// Phase totals of one rank, or of the whole run when `rank` is `SIZE_MAX`.
///
/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_phase_totals(
    r: *const SlacksimResult,
    rank: usize,
    out: *mut SlacksimPhaseTotals,
) -> SlacksimStatus {
    guard(|| {
        let r = ref_arg(r, "result")?;
        let totals = if rank == usize::MAX {
            &r.0.totals
        } else {
            &r.0.ranks
                .get(rank)
                .ok_or_else(|| Failure::new(SlacksimStatus::OutOfRange, format!("rank {rank} out of range")))?
                .totals
        };
        let out = out
            .as_mut()
            .ok_or_else(|| Failure::new(SlacksimStatus::NullPointer, "out is null"))?;
        *out = SlacksimPhaseTotals {
            comp: totals.get(PhaseKind::Comp),
            slack: totals.get(PhaseKind::Slack),
            copy: totals.get(PhaseKind::Copy),
            overhead: totals.get(PhaseKind::Overhead),
        };
        Ok(())
    })
}

/// Full result as JSON; free the string with [`slacksim_string_free`].
///
/// # Safety
/// `r` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_to_json(r: *const SlacksimResult, out: *mut *mut c_char) -> SlacksimStatus {
    guard(|| {
        let r = ref_arg(r, "result")?;
        let json = serde_json::to_string(&r.0).map_err(|e| Failure::new(SlacksimStatus::Parse, e))?;
        put_string(out, json)
    })
}

/// # Safety
/// `r` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slacksim_result_free(r: *mut SlacksimResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Symmetric absolute percentage error in [0, 100]; 0 when both are 0.
#[no_mangle]
pub extern "C" fn slacksim_smape(predicted: f64, actual: f64) -> f64 {
    smape(predicted, actual)
}

/// First PCU boundary at or after `request`.
#[no_mangle]
pub extern "C" fn slacksim_pcu_effective_time(request: f64, quantum: f64) -> f64 {
    if !(quantum > 0.0 && quantum.is_finite()) {
        return f64::NAN;
    }
    pcu_effective_time(request, quantum)
}
