//! C interface to the elapsed-time model library.
//!
//! Every function returns an [`ElapsedStatus`]; on failure the message is
//! kept per thread and read with [`elapsed_last_error_message`]. Handles
//! are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use elapsed_core::harness::{preset, run_experiment};
use elapsed_core::{
    builtin_model, evolve_activity, steady_states, ActivityTrace, BranchPolicy, Error, FiringModel, InitialDensity,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElapsedStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid parameters or configuration.
    Config = 2,
    /// A solver could not continue (e.g. an unsolvable level).
    Solver = 3,
    /// A result failed its verification.
    Verification = 4,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque firing-rate model.
pub struct ElapsedModel {
    inner: FiringModel,
}

/// Opaque activity trace.
pub struct ElapsedTrace {
    inner: ActivityTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(err: Error) -> ElapsedStatus {
    let status = match err.exit_code() {
        2 => ElapsedStatus::Config,
        4 => ElapsedStatus::Verification,
        _ => ElapsedStatus::Solver,
    };
    set_error(err.to_string());
    status
}

fn guard<F: FnOnce() -> ElapsedStatus>(f: F) -> ElapsedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            ElapsedStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ElapsedStatus> {
    if s.is_null() {
        set_error("null string".into());
        return Err(ElapsedStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string is not UTF-8".into());
        ElapsedStatus::Config
    })
}

unsafe fn read_slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], ElapsedStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        set_error("null array".into());
        return Err(ElapsedStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_slice(values: &[f64], out: *mut f64, capacity: usize, len: *mut usize) -> ElapsedStatus {
    if len.is_null() {
        set_error("null length pointer".into());
        return ElapsedStatus::NullPointer;
    }
    *len = values.len();
    if values.len() > capacity {
        set_error(format!("buffer holds {capacity} values, {} needed", values.len()));
        return ElapsedStatus::BufferTooSmall;
    }
    if !values.is_empty() {
        if out.is_null() {
            set_error("null output buffer".into());
            return ElapsedStatus::NullPointer;
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    ElapsedStatus::Ok
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn elapsed_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a catalog model.
///
/// # Safety
/// `name` must be a NUL-terminated string, `params` must point to
/// `n_params` doubles (or be NULL when `n_params` is 0), and `out` must be
/// a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn elapsed_model_new(
    name: *const c_char,
    params: *const f64,
    n_params: usize,
    sigma: f64,
    out: *mut *mut ElapsedModel,
) -> ElapsedStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output handle".into());
            return ElapsedStatus::NullPointer;
        }
        let name = match read_str(name) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let params = match read_slice(params, n_params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match builtin_model(name, params, sigma) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(ElapsedModel { inner }));
                ElapsedStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`elapsed_model_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn elapsed_model_free(model: *mut ElapsedModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes `phi(u)`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_model_phi(model: *const ElapsedModel, u: f64, out: *mut f64) -> ElapsedStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null pointer".into());
            return ElapsedStatus::NullPointer;
        }
        match (*model).inner.phi(u) {
            Ok(v) => {
                *out = v;
                ElapsedStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes `psi(u) = u / phi(u)`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_model_psi(model: *const ElapsedModel, u: f64, out: *mut f64) -> ElapsedStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null pointer".into());
            return ElapsedStatus::NullPointer;
        }
        match (*model).inner.psi(u) {
            Ok(v) => {
                *out = v;
                ElapsedStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the steady states in increasing order. `*len` receives the
/// number of roots even when the buffer is too small.
///
/// # Safety
/// `model` must be a live handle, `out` must hold `capacity` doubles and
/// `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_steady_states(
    model: *const ElapsedModel,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ElapsedStatus {
    guard(|| {
        if model.is_null() {
            set_error("null model".into());
            return ElapsedStatus::NullPointer;
        }
        write_slice(&steady_states(&(*model).inner).roots, out, capacity, len)
    })
}

/// Solves the delay equation from a catalog initial density on the given
/// 1-based branch.
///
/// # Safety
/// `model` must be a live handle, `density` a NUL-terminated string,
/// `params` must point to `n_params` doubles (or be NULL when `n_params`
/// is 0), and `out` a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn elapsed_evolve_activity(
    model: *const ElapsedModel,
    density: *const c_char,
    params: *const f64,
    n_params: usize,
    horizon: f64,
    dt: f64,
    branch: usize,
    out: *mut *mut ElapsedTrace,
) -> ElapsedStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null pointer".into());
            return ElapsedStatus::NullPointer;
        }
        let name = match read_str(density) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let params = match read_slice(params, n_params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let n0 = match InitialDensity::builtin(name, params) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        match evolve_activity(&(*model).inner, &n0, horizon, dt, &BranchPolicy::branch(branch)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(ElapsedTrace { inner }));
                ElapsedStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs a named preset and returns its activity trace. A failed
/// verification still returns the trace, with status `Verification`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_run_preset(name: *const c_char, out: *mut *mut ElapsedTrace) -> ElapsedStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output handle".into());
            return ElapsedStatus::NullPointer;
        }
        let name = match read_str(name) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let bundle = match preset(name).and_then(|c| run_experiment(&c)) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        let pass = bundle.verification.pass;
        *out = Box::into_raw(Box::new(ElapsedTrace { inner: bundle.trace }));
        if pass {
            ElapsedStatus::Ok
        } else {
            set_error(format!("verification failed: {:?}", bundle.verification));
            ElapsedStatus::Verification
        }
    })
}

/// # Safety
/// `trace` must be NULL or a handle returned by this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn elapsed_trace_free(trace: *mut ElapsedTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn elapsed_trace_len(trace: *const ElapsedTrace) -> usize {
    if trace.is_null() {
        0
    } else {
        (*trace).inner.len()
    }
}

/// Copies the activity samples `N(k dt)`.
///
/// # Safety
/// `trace` must be a live handle, `out` must hold `capacity` doubles and
/// `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_trace_values(
    trace: *const ElapsedTrace,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ElapsedStatus {
    guard(|| {
        if trace.is_null() {
            set_error("null trace".into());
            return ElapsedStatus::NullPointer;
        }
        write_slice(&(*trace).inner.values, out, capacity, len)
    })
}

/// Copies the times of the recorded branch jumps.
///
/// # Safety
/// `trace` must be a live handle, `out` must hold `capacity` doubles and
/// `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn elapsed_trace_jump_times(
    trace: *const ElapsedTrace,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ElapsedStatus {
    guard(|| {
        if trace.is_null() {
            set_error("null trace".into());
            return ElapsedStatus::NullPointer;
        }
        write_slice(&(*trace).inner.jump_times(), out, capacity, len)
    })
}
