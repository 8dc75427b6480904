//! C ABI for the dpdp planning engine.
//!
//! Scenarios are opaque handles created by the load/parse functions and
//! released with [`dpdp_scenario_free`]. Every fallible call returns a
//! [`DpdpStatus`]; on failure, [`dpdp_last_error_message`] yields a
//! human-readable description for the calling thread. Structured results
//! come back as JSON strings owned by this library; release them with
//! [`dpdp_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;

use dpdp::cli::{format_action_list, format_fitness_line};
use dpdp::error::ScenarioError;
use dpdp::fitness::Evaluator;
use dpdp::ga::{evolve, genome_to_actions, stops_for_requests, GaConfig};
use dpdp::replan::plan_context_for;
use dpdp::scenario::{load_scenario, parse_scenario, ScenarioDocument};
use dpdp::sim::{plan_seed, Simulation};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpdpStatus {
    Success = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    ParseError = 4,
    ValidationError = 5,
    UnknownAgent = 6,
    RuntimeError = 7,
    Panic = 8,
}

/// Opaque validated scenario handle.
pub struct DpdpScenario {
    doc: ScenarioDocument,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let cstring = CString::new(message.replace('\0', "?"))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: DpdpStatus, message: impl Into<String>) -> DpdpStatus {
    set_last_error(message.into());
    status
}

fn scenario_status(e: &ScenarioError) -> DpdpStatus {
    match e {
        ScenarioError::Io { .. } => DpdpStatus::IoError,
        ScenarioError::Parse(_) => DpdpStatus::ParseError,
        ScenarioError::Validation(_) => DpdpStatus::ValidationError,
    }
}

fn guarded(f: impl FnOnce() -> DpdpStatus) -> DpdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in dpdp".to_owned());
            fail(DpdpStatus::Panic, message)
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or null.
unsafe fn read_cstr<'a>(ptr: *const c_char) -> Result<&'a str, DpdpStatus> {
    if ptr.is_null() {
        return Err(DpdpStatus::NullPointer);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| DpdpStatus::InvalidUtf8)
}

fn give_string(out: *mut *mut c_char, text: String) -> DpdpStatus {
    if out.is_null() {
        return fail(DpdpStatus::NullPointer, "output pointer is null");
    }
    let cstring = match CString::new(text) {
        Ok(s) => s,
        Err(_) => return fail(DpdpStatus::RuntimeError, "output contained a NUL byte"),
    };
    unsafe { *out = cstring.into_raw() };
    DpdpStatus::Success
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn dpdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Last error message for this thread, or null when the previous call
/// succeeded. The caller owns the string; free with [`dpdp_string_free`].
#[no_mangle]
pub extern "C" fn dpdp_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn dpdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn dpdp_scenario_load_file(
    path: *const c_char,
    out: *mut *mut DpdpScenario,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return fail(DpdpStatus::NullPointer, "output pointer is null");
        }
        let path = match read_cstr(path) {
            Ok(s) => s,
            Err(status) => return fail(status, "invalid path argument"),
        };
        match load_scenario(path) {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(DpdpScenario { doc }));
                DpdpStatus::Success
            }
            Err(e) => fail(scenario_status(&e), e.to_string()),
        }
    })
}

/// Parses and validates a scenario from a JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn dpdp_scenario_parse(
    json: *const c_char,
    out: *mut *mut DpdpScenario,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return fail(DpdpStatus::NullPointer, "output pointer is null");
        }
        let json = match read_cstr(json) {
            Ok(s) => s,
            Err(status) => return fail(status, "invalid json argument"),
        };
        match parse_scenario(json) {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(DpdpScenario { doc }));
                DpdpStatus::Success
            }
            Err(e) => fail(scenario_status(&e), e.to_string()),
        }
    })
}

/// Releases a scenario handle. Null is a no-op.
///
/// # Safety
/// `scenario` must have come from a load/parse call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpdp_scenario_free(scenario: *mut DpdpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Basic counts as JSON: `{"agents":..,"requests":..,"events":..}`.
///
/// # Safety
/// `scenario` must be a live handle; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpdp_scenario_info_json(
    scenario: *const DpdpScenario,
    out_json: *mut *mut c_char,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        let Some(handle) = scenario.as_ref() else {
            return fail(DpdpStatus::NullPointer, "scenario handle is null");
        };
        let info = serde_json::json!({
            "agents": handle.doc.agents.len(),
            "requests": handle.doc.requests.len(),
            "events": handle.doc.events.len(),
        });
        give_string(out_json, info.to_string())
    })
}

/// Evolves the initial plan of one agent. `seed` below zero uses the
/// scenario default. The result JSON carries the plan listing, the fitness
/// line, and the full evolution report.
///
/// # Safety
/// `scenario` must be a live handle; `agent_id` a valid string; `out_json`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn dpdp_plan_agent(
    scenario: *const DpdpScenario,
    agent_id: *const c_char,
    seed: i64,
    out_json: *mut *mut c_char,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        let Some(handle) = scenario.as_ref() else {
            return fail(DpdpStatus::NullPointer, "scenario handle is null");
        };
        let agent = match read_cstr(agent_id) {
            Ok(s) => s,
            Err(status) => return fail(status, "invalid agent id argument"),
        };
        let doc = &handle.doc;
        let Some(spec) = doc.agent(agent) else {
            return fail(DpdpStatus::UnknownAgent, format!("unknown agent {agent}"));
        };

        let base_seed = if seed < 0 { doc.ga.config.seed } else { seed as u64 };
        let mut ids: Vec<_> = doc.agents.iter().map(|a| &a.id).collect();
        ids.sort();
        let index = ids.iter().position(|id| *id == &spec.id).expect("agent listed") as u64;

        let state = doc.initial_state();
        let stops = stops_for_requests(state.pending_requests_of(&spec.id));
        let ctx = match plan_context_for(spec, spec.start, &stops, &state, doc.ga.fitness) {
            Ok(ctx) => ctx,
            Err(e) => return fail(DpdpStatus::ValidationError, e.to_string()),
        };
        let config = GaConfig {
            seed: plan_seed(base_seed, index, 0),
            ..doc.ga.config
        };
        let report = evolve(&stops, &ctx, &config);
        let actions = genome_to_actions(&report.best, &state.requests);

        let result = serde_json::json!({
            "agent": spec.id,
            "plan": format_action_list(&actions),
            "fitness_line": format_fitness_line(&report.best_breakdown),
            "report": report,
        });
        give_string(out_json, result.to_string())
    })
}

/// Evaluates one agent's pending stop order as given, without evolving.
/// Exposed so bindings can score hand-built plans.
///
/// # Safety
/// Pointer arguments as in [`dpdp_plan_agent`].
#[no_mangle]
pub unsafe extern "C" fn dpdp_evaluate_pending(
    scenario: *const DpdpScenario,
    agent_id: *const c_char,
    out_json: *mut *mut c_char,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        let Some(handle) = scenario.as_ref() else {
            return fail(DpdpStatus::NullPointer, "scenario handle is null");
        };
        let agent = match read_cstr(agent_id) {
            Ok(s) => s,
            Err(status) => return fail(status, "invalid agent id argument"),
        };
        let doc = &handle.doc;
        let Some(spec) = doc.agent(agent) else {
            return fail(DpdpStatus::UnknownAgent, format!("unknown agent {agent}"));
        };
        let state = doc.initial_state();
        let stops = stops_for_requests(state.pending_requests_of(&spec.id));
        let ctx = match plan_context_for(spec, spec.start, &stops, &state, doc.ga.fitness) {
            Ok(ctx) => ctx,
            Err(e) => return fail(DpdpStatus::ValidationError, e.to_string()),
        };
        let breakdown = ctx.evaluate(&stops);
        give_string(out_json, serde_json::json!({ "breakdown": breakdown }).to_string())
    })
}

/// Runs the scenario to termination. `seed`/`max_ticks` below zero use the
/// scenario defaults. `out_results_json` receives metrics, termination, and
/// reports; `out_trace_csv` (optional, may be null) receives the tick trace.
/// A stalled or tick-limited run still returns `Success`; inspect the
/// termination field.
///
/// # Safety
/// `scenario` must be a live handle; output pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dpdp_run(
    scenario: *const DpdpScenario,
    seed: i64,
    max_ticks: i64,
    out_results_json: *mut *mut c_char,
    out_trace_csv: *mut *mut c_char,
) -> DpdpStatus {
    guarded(|| {
        clear_last_error();
        let Some(handle) = scenario.as_ref() else {
            return fail(DpdpStatus::NullPointer, "scenario handle is null");
        };
        if out_results_json.is_null() {
            return fail(DpdpStatus::NullPointer, "results output pointer is null");
        }
        let doc = &handle.doc;
        let mut sim = Simulation::from_scenario(doc);
        if seed >= 0 {
            sim = sim.with_seed(seed as u64);
        }
        if max_ticks >= 0 {
            sim = sim.with_max_ticks(max_ticks as u64);
        }
        let outcome = match sim.run() {
            Ok(outcome) => outcome,
            Err(e) => return fail(DpdpStatus::RuntimeError, e.to_string()),
        };

        if !out_trace_csv.is_null() {
            let status = give_string(out_trace_csv, dpdp::cli::trace_csv(&outcome));
            if status != DpdpStatus::Success {
                return status;
            }
        }
        give_string(out_results_json, dpdp::cli::results_json(&outcome))
    })
}
