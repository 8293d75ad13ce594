//! C ABI over the `mbcr` library.
//!
//! Callers fit a model from flat arrays, query it, and free it through an
//! opaque handle. Every fallible call returns an [`MbcrStatus`]; on failure
//! a thread-local message is kept and readable via [`mbcr_last_error`]. All
//! entry points catch panics, so no unwinding ever crosses the boundary.
//!
//! The matching header is generated into `include/mbcr.h` by the build
//! script.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mbcr::core::{Dataset, ModelState, PriorConfig, ProposalConfig};
use mbcr::predict::{posterior_band, posterior_mean};
use mbcr::sampler::{run_chain, ChainConfig, PosteriorSamples};
use mbcr::solvers::minimize_surrogate;

use nalgebra::{DMatrix, DVector};

/// Result code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbcrStatus {
    /// Success.
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// Sizes, bounds, or configuration were rejected.
    InvalidInput = 2,
    /// The sampler or a solver failed at runtime.
    RuntimeError = 3,
}

/// Fitted posterior: an opaque handle created by `mbcr_fit` and released by
/// `mbcr_model_free`.
pub struct MbcrModel {
    samples: PosteriorSamples,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    // Interior NULs cannot come from our error formats, but don't trust that.
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: MbcrStatus, message: &str) -> MbcrStatus {
    set_error(message);
    status
}

fn fail_with(err: &mbcr::Error) -> MbcrStatus {
    let status = if err.is_input_error() {
        MbcrStatus::InvalidInput
    } else {
        MbcrStatus::RuntimeError
    };
    fail(status, &err.to_string())
}

/// Runs `body` with panics converted to `RuntimeError`.
fn guarded(body: impl FnOnce() -> MbcrStatus) -> MbcrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(MbcrStatus::RuntimeError, "internal panic"),
    }
}

/// Last error message for this thread, NUL-terminated. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn mbcr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fits the posterior to `n` observations of dimension `p`.
///
/// `x` is row-major `n × p`, `y` has length `n`. `lambda` is the prior mean
/// piece count (must be positive); the remaining hyperparameters use the
/// library's stock settings. On success `*out` owns the fitted model.
///
/// # Safety
/// `x` and `y` must point to `n * p` and `n` readable doubles, and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbcr_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    lambda: f64,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    out: *mut *mut MbcrModel,
) -> MbcrStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        return fail(MbcrStatus::NullArgument, "x, y, and out must be non-null");
    }
    if n == 0 || p == 0 {
        return fail(MbcrStatus::InvalidInput, "n and p must be positive");
    }
    let xs = unsafe { std::slice::from_raw_parts(x, n * p) };
    let ys = unsafe { std::slice::from_raw_parts(y, n) };
    guarded(|| {
        let data = match Dataset::new(
            DMatrix::from_row_slice(n, p, xs),
            DVector::from_column_slice(ys),
        ) {
            Ok(d) => d,
            Err(e) => return fail_with(&e),
        };
        let stock = PriorConfig::default_for_dim(p);
        let prior = match PriorConfig::new(stock.nig.clone(), lambda, stock.truncation) {
            Ok(pr) => pr,
            Err(e) => return fail_with(&e),
        };
        let proposal = ProposalConfig::from_prior(&prior, 5, 0.4);
        let chain = match ChainConfig::new(iterations, burn_in, thin, seed) {
            Ok(c) => c,
            Err(e) => return fail_with(&e),
        };
        match run_chain(&data, &prior, &proposal, &chain) {
            Ok((samples, _)) => {
                let handle = Box::new(MbcrModel { samples });
                unsafe { out.write(Box::into_raw(handle)) };
                MbcrStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a model created by `mbcr_fit`. A null `model` is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by `mbcr_fit` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mbcr_model_free(model: *mut MbcrModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Covariate dimension of a fitted model; 0 if `model` is null.
///
/// # Safety
/// `model` must be null or a live pointer from `mbcr_fit`.
#[no_mangle]
pub unsafe extern "C" fn mbcr_model_dim(model: *const MbcrModel) -> usize {
    match unsafe { model.as_ref() } {
        Some(m) => m.samples.dim(),
        None => 0,
    }
}

/// Number of retained posterior draws; 0 if `model` is null.
///
/// # Safety
/// `model` must be null or a live pointer from `mbcr_fit`.
#[no_mangle]
pub unsafe extern "C" fn mbcr_model_draw_count(model: *const MbcrModel) -> usize {
    match unsafe { model.as_ref() } {
        Some(m) => m.samples.len(),
        None => 0,
    }
}

/// Posterior-mean prediction at a point of the model's dimension.
///
/// # Safety
/// `x` must point to `mbcr_model_dim(model)` readable doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbcr_predict_mean(
    model: *const MbcrModel,
    x: *const f64,
    out: *mut f64,
) -> MbcrStatus {
    let Some(handle) = (unsafe { model.as_ref() }) else {
        return fail(MbcrStatus::NullArgument, "model must be non-null");
    };
    if x.is_null() || out.is_null() {
        return fail(MbcrStatus::NullArgument, "x and out must be non-null");
    }
    let xs = unsafe { std::slice::from_raw_parts(x, handle.samples.dim()) };
    guarded(|| match posterior_mean(&handle.samples, xs) {
        Ok(mean) => {
            unsafe { out.write(mean) };
            MbcrStatus::Ok
        }
        Err(e) => fail_with(&e),
    })
}

/// Central credible band at a point; `level` is the band mass in (0, 1).
///
/// # Safety
/// `x` must point to `mbcr_model_dim(model)` readable doubles; `out_lo` and
/// `out_hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbcr_predict_band(
    model: *const MbcrModel,
    x: *const f64,
    level: f64,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> MbcrStatus {
    let Some(handle) = (unsafe { model.as_ref() }) else {
        return fail(MbcrStatus::NullArgument, "model must be non-null");
    };
    if x.is_null() || out_lo.is_null() || out_hi.is_null() {
        return fail(MbcrStatus::NullArgument, "x, out_lo, and out_hi must be non-null");
    }
    let xs = unsafe { std::slice::from_raw_parts(x, handle.samples.dim()) };
    guarded(|| match posterior_band(&handle.samples, xs, level) {
        Ok((lo, hi)) => {
            unsafe {
                out_lo.write(lo);
                out_hi.write(hi);
            }
            MbcrStatus::Ok
        }
        Err(e) => fail_with(&e),
    })
}

/// Minimizes the model's surrogate over the box `[lower, upper]`, writing
/// the minimizer to `out_x` and its value to `out_value`. At most 100
/// evenly spaced draws enter the surrogate.
///
/// # Safety
/// `lower`, `upper`, and `out_x` must point to `mbcr_model_dim(model)`
/// doubles (the first two readable, `out_x` writable); `out_value` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mbcr_minimize(
    model: *const MbcrModel,
    lower: *const f64,
    upper: *const f64,
    out_x: *mut f64,
    out_value: *mut f64,
) -> MbcrStatus {
    let Some(handle) = (unsafe { model.as_ref() }) else {
        return fail(MbcrStatus::NullArgument, "model must be non-null");
    };
    if lower.is_null() || upper.is_null() || out_x.is_null() || out_value.is_null() {
        return fail(MbcrStatus::NullArgument, "bounds and outputs must be non-null");
    }
    let p = handle.samples.dim();
    let lo = unsafe { std::slice::from_raw_parts(lower, p) };
    let up = unsafe { std::slice::from_raw_parts(upper, p) };
    guarded(|| {
        let draws = handle.samples.draws();
        let step = draws.len().div_ceil(100).max(1);
        let states: Vec<ModelState> = draws.iter().step_by(step).cloned().collect();
        match minimize_surrogate(&states, lo, up) {
            Ok(sol) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(sol.x_star.as_ptr(), out_x, p);
                    out_value.write(sol.value);
                }
                MbcrStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}
