use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use rankfolio_ffi::*;

fn last_error() -> String {
    let p = rf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn kendall_tau_through_the_abi() {
    let a = [0usize, 1, 2, 3];
    let b = [3usize, 2, 1, 0];
    let mut out = -1.0;
    assert_eq!(unsafe { rf_kendall_tau(a.as_ptr(), b.as_ptr(), 4, &mut out) }, RfStatus::Ok);
    assert_eq!(out, 1.0);
    assert!(rf_last_error_message().is_null());
}

#[test]
fn invalid_orders_report_an_error() {
    let a = [0usize, 0, 2];
    let b = [0usize, 1, 2];
    let mut out = 0.0;
    let s = unsafe { rf_kendall_tau(a.as_ptr(), b.as_ptr(), 3, &mut out) };
    assert_eq!(s, RfStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let s = unsafe { rf_kendall_tau(ptr::null(), b.as_ptr(), 3, &mut out) };
    assert_eq!(s, RfStatus::NullPointer);
}

#[test]
fn profile_handle_aggregates() {
    // Two of three orders put asset 2 first.
    let seqs = [2usize, 0, 1, 2, 1, 0, 0, 1, 2];
    let mut h: *mut RfProfile = ptr::null_mut();
    unsafe {
        assert_eq!(rf_profile_new(seqs.as_ptr(), 3, 3, &mut h), RfStatus::Ok);
        let mut out = [9usize; 3];
        for m in [RfAggregation::Borda, RfAggregation::Kemeny, RfAggregation::Copeland] {
            assert_eq!(rf_aggregate(h, m, true, out.as_mut_ptr()), RfStatus::Ok);
            assert_eq!(out[0], 2, "{m:?}");
        }
        assert_eq!(rf_aggregate(ptr::null(), RfAggregation::Borda, false, out.as_mut_ptr()), RfStatus::NullPointer);
        rf_profile_free(h);
        rf_profile_free(ptr::null_mut());
    }
}

#[test]
fn scenario_handle_solves() {
    let mus = [0.02, 0.01, 0.01, 0.02];
    let sigma = [0.04, 0.0, 0.0, 0.04];
    let mut h: *mut RfScenarioSet = ptr::null_mut();
    unsafe {
        assert_eq!(rf_scenarios_new(mus.as_ptr(), 2, sigma.as_ptr(), 2, 3.0, &mut h), RfStatus::Ok);
        let mut w = [0.0; 2];
        let mut obj = 0.0;
        assert_eq!(rf_solve(h, RfSolver::Maxmin, 0.0, w.as_mut_ptr(), &mut obj), RfStatus::Ok);
        // Symmetric scenarios: equal weights.
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
        // 0.015 - (3/2)·0.04·(0.25 + 0.25)
        assert!((obj + 0.015).abs() < 1e-12);
        assert_eq!(rf_solve(h, RfSolver::Soft, 0.5, w.as_mut_ptr(), ptr::null_mut()), RfStatus::Ok);
        assert_eq!(rf_solve(h, RfSolver::Soft, 1.5, w.as_mut_ptr(), ptr::null_mut()), RfStatus::InvalidArgument);
        rf_scenarios_free(h);
    }
    let bad = [1.0, 2.0, 2.0, 1.0];
    let mut h: *mut RfScenarioSet = ptr::null_mut();
    let s = unsafe { rf_scenarios_new(mus.as_ptr(), 2, bad.as_ptr(), 2, 3.0, &mut h) };
    assert_eq!(s, RfStatus::NotPositiveDefinite);
    assert!(h.is_null());
}

#[test]
fn posterior_through_the_abi() {
    let pi = [0.01, 0.01];
    let sigma = [0.04, 0.01, 0.01, 0.04];
    let seq = [1usize, 0];
    let (mut mu, mut se) = ([0.0; 2], [0.0; 2]);
    let s = unsafe {
        rf_posterior(pi.as_ptr(), sigma.as_ptr(), 2, seq.as_ptr(), 0.5, 0.5, 3.0, 4000, 1, mu.as_mut_ptr(), se.as_mut_ptr())
    };
    assert_eq!(s, RfStatus::Ok);
    assert!(mu[1] > mu[0], "view puts asset 1 first: {mu:?}");
    assert!(se.iter().all(|&x| x > 0.0));
    let s = unsafe {
        rf_posterior(pi.as_ptr(), sigma.as_ptr(), 2, seq.as_ptr(), 0.5, 0.5, 3.0, 10, 1, mu.as_mut_ptr(), se.as_mut_ptr())
    };
    assert_eq!(s, RfStatus::InvalidArgument);
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rankfolio.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["rf_kendall_tau", "rf_profile_new", "rf_aggregate", "rf_solve", "rf_posterior", "rf_last_error_message"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99"]).arg(&header).status() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
