use std::ffi::{CStr, CString};
use std::ptr;

use elapsed_ffi::*;

fn model(name: &str, params: &[f64], sigma: f64) -> *mut ElapsedModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { elapsed_model_new(name.as_ptr(), params.as_ptr(), params.len(), sigma, &mut m) };
    assert_eq!(status, ElapsedStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = elapsed_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn model_evaluation_matches_the_library() {
    let m = model("sigmoid", &[9.0, 3.5], 0.5);
    let reference = elapsed_core::builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
    let (mut phi, mut psi) = (0.0, 0.0);
    unsafe {
        assert_eq!(elapsed_model_phi(m, 0.7, &mut phi), ElapsedStatus::Ok);
        assert_eq!(elapsed_model_psi(m, 0.7, &mut psi), ElapsedStatus::Ok);
        elapsed_model_free(m);
    }
    assert_eq!(phi, reference.phi(0.7).unwrap());
    assert_eq!(psi, reference.psi(0.7).unwrap());
}

#[test]
fn steady_states_report_required_length() {
    let m = model("sigmoid", &[9.0, 3.5], 0.5);
    let mut len = 0usize;
    let mut small = [0.0; 1];
    let status = unsafe { elapsed_steady_states(m, small.as_mut_ptr(), small.len(), &mut len) };
    assert_eq!(status, ElapsedStatus::BufferTooSmall);
    assert_eq!(len, 3);
    assert!(last_error().contains("3 needed"));

    let mut roots = [0.0; 3];
    let status = unsafe { elapsed_steady_states(m, roots.as_mut_ptr(), roots.len(), &mut len) };
    assert_eq!(status, ElapsedStatus::Ok);
    let reference = elapsed_core::builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
    assert_eq!(roots.to_vec(), elapsed_core::steady_states(&reference).roots);
    unsafe { elapsed_model_free(m) };
}

#[test]
fn bad_input_sets_status_and_message() {
    let name = CString::new("no_such_model").unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { elapsed_model_new(name.as_ptr(), ptr::null(), 0, 1.0, &mut m) };
    assert_eq!(status, ElapsedStatus::Config);
    assert!(m.is_null());
    assert!(last_error().contains("no_such_model"));

    let mut out = 0.0;
    assert_eq!(unsafe { elapsed_model_phi(ptr::null(), 0.1, &mut out) }, ElapsedStatus::NullPointer);
    let status = unsafe { elapsed_model_new(ptr::null(), ptr::null(), 0, 1.0, &mut m) };
    assert_eq!(status, ElapsedStatus::NullPointer);
    assert_eq!(unsafe { elapsed_trace_len(ptr::null()) }, 0);
    unsafe {
        elapsed_model_free(ptr::null_mut());
        elapsed_trace_free(ptr::null_mut());
    }
}

#[test]
fn evolved_trace_matches_the_library() {
    let m = model("sigmoid", &[9.0, 3.5], 0.5);
    let density = CString::new("exponential").unwrap();
    let params = [0.5];
    let mut trace = ptr::null_mut();
    let status = unsafe {
        elapsed_evolve_activity(m, density.as_ptr(), params.as_ptr(), 1, 2.5, 0.0025, 3, &mut trace)
    };
    assert_eq!(status, ElapsedStatus::Ok);

    let reference = {
        let rm = elapsed_core::builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
        let n0 = elapsed_core::InitialDensity::builtin("exponential", &[0.5]).unwrap();
        elapsed_core::evolve_activity(&rm, &n0, 2.5, 0.0025, &elapsed_core::BranchPolicy::branch(3)).unwrap()
    };
    let n = unsafe { elapsed_trace_len(trace) };
    assert_eq!(n, reference.values.len());
    let mut values = vec![0.0; n];
    let mut len = 0;
    assert_eq!(unsafe { elapsed_trace_values(trace, values.as_mut_ptr(), n, &mut len) }, ElapsedStatus::Ok);
    assert_eq!(values, reference.values);

    let mut jumps = [0.0; 4];
    assert_eq!(unsafe { elapsed_trace_jump_times(trace, jumps.as_mut_ptr(), 4, &mut len) }, ElapsedStatus::Ok);
    assert_eq!(len, 1);
    assert!(jumps[0] > 0.0 && jumps[0] < 0.5);
    unsafe {
        elapsed_trace_free(trace);
        elapsed_model_free(m);
    }
}

#[test]
fn failed_verification_still_returns_the_trace() {
    let name = CString::new("example3_2").unwrap();
    let mut trace = ptr::null_mut();
    let status = unsafe { elapsed_run_preset(name.as_ptr(), &mut trace) };
    assert_eq!(status, ElapsedStatus::Verification);
    assert!(unsafe { elapsed_trace_len(trace) } > 0);
    assert!(last_error().starts_with("verification failed"));
    unsafe { elapsed_trace_free(trace) };
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/elapsed.h")).unwrap();
    for symbol in [
        "ELAPSED_H",
        "ELAPSED_STATUS_BUFFER_TOO_SMALL",
        "typedef struct ElapsedModel ElapsedModel",
        "elapsed_model_new",
        "elapsed_steady_states",
        "elapsed_evolve_activity",
        "elapsed_run_preset",
        "elapsed_trace_jump_times",
        "elapsed_last_error_message",
    ] {
        assert!(header.contains(symbol), "{symbol} missing from the header");
    }
}
