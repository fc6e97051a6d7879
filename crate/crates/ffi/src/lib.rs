//! C interface to the refiner.
//!
//! Every entry point returns a [`RefinerStatus`]. On failure the message is
//! available from [`refiner_last_error`] on the same thread until the next
//! call. Strings handed out by the library must be released with
//! [`refiner_string_free`]; units with [`refiner_unit_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use refiner_core::depgraph::{analyze, BuiltinTable};
use refiner_core::equivalence::{check_equivalence, EquivConfig, EquivalenceVerdict};
use refiner_core::frontend::{parse_unit, render_unit, SourceUnit};
use refiner_core::llm_bridge::{EditSet, MockProvider};
use refiner_core::pipeline::{Engine, RunConfig};
use refiner_core::typecheck;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinerStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    AnalysisFailed = 4,
    EquivalenceFailed = 5,
    UnknownFunction = 6,
    Panic = 7,
}

/// Outcome class of an equivalence check.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinerVerdict {
    Equivalent = 0,
    NonEquivalent = 1,
    Inconclusive = 2,
}

/// A parsed pseudocode unit.
pub struct RefinerUnit {
    unit: SourceUnit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

type Failure = (RefinerStatus, String);

/// Clears the error slot, runs `body` and converts panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RefinerStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RefinerStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RefinerStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((RefinerStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (RefinerStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn unit_arg<'a>(p: *const RefinerUnit, what: &str) -> Result<&'a SourceUnit, Failure> {
    p.as_ref().map(|u| &u.unit).ok_or_else(|| (RefinerStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err((RefinerStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(text.replace('\0', " ")).expect("nul bytes removed");
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err((RefinerStatus::NullArgument, "output pointer is null".into()));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn refiner_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn refiner_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn refiner_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses pseudocode text. Functions that fail to parse are skipped and
/// listed by [`refiner_unit_skipped_count`].
///
/// # Safety
/// `name` and `text` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_unit_parse(name: *const c_char, text: *const c_char, out: *mut *mut RefinerUnit) -> RefinerStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let text = str_arg(text, "text")?;
        check_out(out)?;
        *out = Box::into_raw(Box::new(RefinerUnit { unit: parse_unit(name, text) }));
        Ok(())
    })
}

/// Releases a unit. Null is ignored.
///
/// # Safety
/// `unit` must come from [`refiner_unit_parse`] or [`refiner_optimize_mock`].
#[no_mangle]
pub unsafe extern "C" fn refiner_unit_free(unit: *mut RefinerUnit) {
    if !unit.is_null() {
        drop(Box::from_raw(unit));
    }
}

/// Number of functions that parsed, or 0 for a null unit.
///
/// # Safety
/// `unit` must be null or a live unit.
#[no_mangle]
pub unsafe extern "C" fn refiner_unit_function_count(unit: *const RefinerUnit) -> usize {
    unit.as_ref().map_or(0, |u| u.unit.functions.len())
}

/// Number of functions skipped by the parser, or 0 for a null unit.
///
/// # Safety
/// `unit` must be null or a live unit.
#[no_mangle]
pub unsafe extern "C" fn refiner_unit_skipped_count(unit: *const RefinerUnit) -> usize {
    unit.as_ref().map_or(0, |u| u.unit.skipped.len())
}

/// Canonical rendering of the unit.
///
/// # Safety
/// `unit` must be a live unit and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_unit_render(unit: *const RefinerUnit, out: *mut *mut c_char) -> RefinerStatus {
    guard(|| put_string(out, render_unit(unit_arg(unit, "unit")?)))
}

/// Dependency graph of the unit as JSON.
///
/// # Safety
/// `unit` must be a live unit and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_analyze_json(unit: *const RefinerUnit, out: *mut *mut c_char) -> RefinerStatus {
    guard(|| {
        let a = analyze(unit_arg(unit, "unit")?, BuiltinTable::shipped()).map_err(|e| (RefinerStatus::AnalysisFailed, e.to_string()))?;
        put_string(out, a.dg.to_json())
    })
}

/// Type violations of the unit as a JSON report; `count` receives their number.
///
/// # Safety
/// `unit` must be a live unit; `count` and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_typecheck(unit: *const RefinerUnit, count: *mut usize, out: *mut *mut c_char) -> RefinerStatus {
    guard(|| {
        let r = typecheck::check(unit_arg(unit, "unit")?, BuiltinTable::shipped());
        check_out(count)?;
        put_string(out, r.to_json())?;
        *count = r.len();
        Ok(())
    })
}

/// Checks one function of two units for equivalence. `config_json` may be
/// null for defaults. `witness_json` receives the full verdict as JSON and
/// may be null when not wanted.
///
/// # Safety
/// Units must be live; strings NUL-terminated or null where allowed;
/// `verdict` writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_check_equivalence(
    original: *const RefinerUnit,
    optimized: *const RefinerUnit,
    function: *const c_char,
    config_json: *const c_char,
    verdict: *mut RefinerVerdict,
    witness_json: *mut *mut c_char,
) -> RefinerStatus {
    guard(|| {
        let original = unit_arg(original, "original")?;
        let optimized = unit_arg(optimized, "optimized")?;
        let function = str_arg(function, "function")?;
        check_out(verdict)?;
        let config: EquivConfig = if config_json.is_null() {
            EquivConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config")?).map_err(|e| (RefinerStatus::InvalidConfig, e.to_string()))?
        };
        if original.function(function).is_none() {
            return Err((RefinerStatus::UnknownFunction, format!("function `{function}` is missing")));
        }
        let v = check_equivalence(original, optimized, function, &EditSet::default(), &config)
            .map_err(|e| (RefinerStatus::EquivalenceFailed, e.to_string()))?;
        *verdict = match v {
            EquivalenceVerdict::Equivalent => RefinerVerdict::Equivalent,
            EquivalenceVerdict::NonEquivalent { .. } => RefinerVerdict::NonEquivalent,
            EquivalenceVerdict::Inconclusive { .. } => RefinerVerdict::Inconclusive,
        };
        if !witness_json.is_null() {
            put_string(witness_json, serde_json::to_string(&v).expect("verdict serializes"))?;
        }
        Ok(())
    })
}

/// Runs the refinement loop with a scripted provider. `scenario_json` maps
/// target ids to reply lists; `config_json` may be null for defaults. The
/// run report is written to `report_json` and the final unit to `refined`.
///
/// # Safety
/// `unit` must be live; strings NUL-terminated or null where allowed;
/// outputs writable.
#[no_mangle]
pub unsafe extern "C" fn refiner_optimize_mock(
    unit: *const RefinerUnit,
    scenario_json: *const c_char,
    config_json: *const c_char,
    report_json: *mut *mut c_char,
    refined: *mut *mut RefinerUnit,
) -> RefinerStatus {
    guard(|| {
        let unit = unit_arg(unit, "unit")?.clone();
        let mock = MockProvider::from_json(str_arg(scenario_json, "scenario")?).map_err(|e| (RefinerStatus::InvalidConfig, format!("scenario: {e}")))?;
        let config = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(str_arg(config_json, "config")?).map_err(|e| (RefinerStatus::InvalidConfig, e.to_string()))?
        };
        check_out(refined)?;
        let engine = Engine::new(&mock, config).map_err(|e| (RefinerStatus::InvalidConfig, e.to_string()))?;
        let path = format!("{}.dsol", unit.file_id);
        let (report, last) = engine.run_source(unit, Path::new(&path));
        if let Some(e) = &report.error {
            return Err((RefinerStatus::AnalysisFailed, e.clone()));
        }
        let last = last.map(|u| (*u).clone()).ok_or_else(|| (RefinerStatus::AnalysisFailed, "no final revision".to_string()))?;
        put_string(report_json, report.to_json())?;
        *refined = Box::into_raw(Box::new(RefinerUnit { unit: last }));
        Ok(())
    })
}
