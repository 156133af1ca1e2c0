//! C ABI for rankfolio.
//!
//! Every function returns an [`RfStatus`]; on failure the message is kept in
//! a thread-local slot readable through [`rf_last_error_message`]. Orders
//! cross the boundary as asset sequences (best first, 0-based), matrices as
//! row-major `double` arrays. Handles are opaque and freed with their
//! matching `*_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be valid for the stated lengths for the duration
//! of the call. Null pointers are rejected with `RF_STATUS_NULL_POINTER`.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use rankfolio::aggregation::{aggregate, AggregationMethod, Mc4Config, OrderProfile};
use rankfolio::estimator::{ebl_posterior_seeded, SamplerConfig};
use rankfolio::ordinal::kendall_tau;
use rankfolio::solvers::{ScenarioSet, SolveMethod, SolverOptions};
use rankfolio::{CovarianceMatrix, Error, ModelConfig, PriorVector, TotalOrder};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotPositiveDefinite = 4,
    NotConverged = 5,
    Capability = 6,
    Numerical = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfAggregation {
    Borda = 0,
    Footrule = 1,
    Copeland = 2,
    BestOfK = 3,
    Mc4 = 4,
    Kemeny = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfSolver {
    Mvo = 0,
    Maxmin = 1,
    MinRegret = 2,
    /// Uses the `gamma` argument of [`rf_solve`].
    Soft = 3,
}

/// Opaque profile of total orders.
pub struct RfProfile(OrderProfile);

/// Opaque scenario set with its covariance and risk aversion.
pub struct RfScenarioSet(ScenarioSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RfStatus {
    match e {
        Error::Dimension(_) => RfStatus::Dimension,
        Error::InvalidArgument(_) | Error::Parse(_) => RfStatus::InvalidArgument,
        Error::NotPositiveDefinite(_) => RfStatus::NotPositiveDefinite,
        Error::NotConverged { .. } | Error::Mc4NotConverged { .. } => RfStatus::NotConverged,
        Error::Capability(_) => RfStatus::Capability,
        Error::Period { source, .. } => status_of(source),
        _ => RfStatus::Numerical,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), RfStatus>) -> RfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RfStatus::Panic
        }
    }
}

fn fail(e: Error) -> RfStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> RfStatus {
    set_error("null pointer argument".into());
    RfStatus::NullPointer
}

unsafe fn input<'a, T>(p: *const T, len: usize) -> Result<&'a [T], RfStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], RfStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn order(seq: &[usize]) -> Result<TotalOrder, RfStatus> {
    TotalOrder::from_sequence(seq.to_vec()).map_err(fail)
}

fn covariance(sigma: &[f64], n: usize) -> Result<CovarianceMatrix, RfStatus> {
    CovarianceMatrix::new(DMatrix::from_row_slice(n, n, sigma)).map_err(fail)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Normalized Kendall-Tau distance between two orders of `n` assets.
#[no_mangle]
pub unsafe extern "C" fn rf_kendall_tau(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let a = order(input(a, n)?)?;
        let b = order(input(b, n)?)?;
        let out = output(out, 1)?;
        out[0] = kendall_tau(&a, &b).map_err(fail)?;
        Ok(())
    })
}

/// Builds a profile from `n_orders` sequences of length `n_assets`, stored
/// back to back.
#[no_mangle]
pub unsafe extern "C" fn rf_profile_new(
    sequences: *const usize,
    n_assets: usize,
    n_orders: usize,
    out: *mut *mut RfProfile,
) -> RfStatus {
    guard(|| {
        let flat = input(sequences, n_assets * n_orders)?;
        let out = output(out, 1)?;
        if n_assets == 0 {
            return Err(fail(Error::InvalidArgument("profile needs at least one asset".into())));
        }
        let orders = flat.chunks(n_assets).map(order).collect::<Result<Vec<_>, _>>()?;
        let profile = OrderProfile::new(orders).map_err(fail)?;
        out[0] = Box::into_raw(Box::new(RfProfile(profile)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rf_profile_free(profile: *mut RfProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Consensus order written to `out_sequence` (length = number of assets).
#[no_mangle]
pub unsafe extern "C" fn rf_aggregate(
    profile: *const RfProfile,
    method: RfAggregation,
    local_improve: bool,
    out_sequence: *mut usize,
) -> RfStatus {
    guard(|| {
        let profile = &profile.as_ref().ok_or_else(null)?.0;
        let out = output(out_sequence, profile.n_assets())?;
        let method = match method {
            RfAggregation::Borda => AggregationMethod::Borda,
            RfAggregation::Footrule => AggregationMethod::Footrule,
            RfAggregation::Copeland => AggregationMethod::Copeland,
            RfAggregation::BestOfK => AggregationMethod::BestOfK,
            RfAggregation::Mc4 => AggregationMethod::Mc4,
            RfAggregation::Kemeny => AggregationMethod::Kemeny,
        };
        let o = aggregate(profile, method, &Mc4Config::default(), local_improve).map_err(fail)?;
        out.copy_from_slice(o.sequence());
        Ok(())
    })
}

/// Scenario set from `k` expected-return vectors (`k × n`, row-major) and an
/// `n × n` covariance.
#[no_mangle]
pub unsafe extern "C" fn rf_scenarios_new(
    mus: *const f64,
    k: usize,
    sigma: *const f64,
    n: usize,
    delta: f64,
    out: *mut *mut RfScenarioSet,
) -> RfStatus {
    guard(|| {
        let flat = input(mus, k * n)?;
        let sigma = covariance(input(sigma, n * n)?, n)?;
        let out = output(out, 1)?;
        if n == 0 {
            return Err(fail(Error::InvalidArgument("scenario set needs at least one asset".into())));
        }
        let mus = flat.chunks(n).map(<[f64]>::to_vec).collect();
        let scen = ScenarioSet::new(mus, sigma, delta).map_err(fail)?;
        out[0] = Box::into_raw(Box::new(RfScenarioSet(scen)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rf_scenarios_free(scenarios: *mut RfScenarioSet) {
    if !scenarios.is_null() {
        drop(Box::from_raw(scenarios));
    }
}

/// Solves over the scenario set. `gamma` is read only by `RF_SOLVER_SOFT`;
/// `RF_SOLVER_MVO` uses the first scenario. Weights go to `out_weights`
/// (length n), the objective to `out_objective` (may be null).
#[no_mangle]
pub unsafe extern "C" fn rf_solve(
    scenarios: *const RfScenarioSet,
    method: RfSolver,
    gamma: f64,
    out_weights: *mut f64,
    out_objective: *mut f64,
) -> RfStatus {
    guard(|| {
        let scen = &scenarios.as_ref().ok_or_else(null)?.0;
        let w = output(out_weights, scen.n_assets())?;
        let method = match method {
            RfSolver::Mvo => SolveMethod::Mvo,
            RfSolver::Maxmin => SolveMethod::Maxmin,
            RfSolver::MinRegret => SolveMethod::MinRegret,
            RfSolver::Soft => SolveMethod::Soft(gamma),
        };
        let rep = method.solve(scen, &SolverOptions::default()).map_err(fail)?;
        w.copy_from_slice(rep.w.weights());
        if !out_objective.is_null() {
            *out_objective = rep.objective;
        }
        Ok(())
    })
}

/// Posterior expected returns for one ordinal view `sequence` given prior
/// `pi` and covariance `sigma`. Writes `n` means and standard errors.
#[no_mangle]
pub unsafe extern "C" fn rf_posterior(
    pi: *const f64,
    sigma: *const f64,
    n: usize,
    sequence: *const usize,
    c: f64,
    tau: f64,
    delta: f64,
    n_samples: usize,
    seed: u64,
    out_mu: *mut f64,
    out_se: *mut f64,
) -> RfStatus {
    guard(|| {
        let pi = PriorVector::new(input(pi, n)?.to_vec()).map_err(fail)?;
        let sigma = covariance(input(sigma, n * n)?, n)?;
        let view = order(input(sequence, n)?)?;
        let mu = output(out_mu, n)?;
        let se = output(out_se, n)?;
        let cfg = ModelConfig::new(delta, c, tau).map_err(fail)?;
        let sampler = SamplerConfig::with_samples(n_samples);
        let post = ebl_posterior_seeded(&pi, &sigma, &view, &cfg, &sampler, seed).map_err(fail)?;
        mu.copy_from_slice(&post.mu);
        se.copy_from_slice(&post.se);
        Ok(())
    })
}
