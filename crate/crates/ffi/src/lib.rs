//! C ABI for nodesplit.
//!
//! Objects are opaque handles created by `ns_*_new`/`ns_*_from_*` and
//! released with the matching `ns_*_free`. Every fallible call returns an
//! [`NsStatus`]; on failure [`ns_last_error`] describes the cause. Strings
//! are NUL-terminated UTF-8.

use nodesplit::conflict::{self, ConflictResult, KdeConfig, Method, Selection};
use nodesplit::corpus;
use nodesplit::graph::io as model_io;
use nodesplit::graph::DagModel;
use nodesplit::inference::{run_mcmc, SamplerConfig, Trace};
use nodesplit::split::{delta_samples, split_node, DeltaSamples, SplitModel, SplitSpec};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Model = 4,
    Split = 5,
    Inference = 6,
    Conflict = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsMethod {
    Auto = 0,
    Discrete = 1,
    OneSidedLower = 2,
    OneSidedUpper = 3,
    TwoSided = 4,
    Kde = 5,
    Chi2 = 6,
    Mahalanobis = 7,
    KdeMultivariate = 8,
}

impl NsMethod {
    fn selection(self) -> Selection {
        let m = match self {
            NsMethod::Auto => return Selection::Auto,
            NsMethod::Discrete => Method::Discrete,
            NsMethod::OneSidedLower => Method::OneSidedLower,
            NsMethod::OneSidedUpper => Method::OneSidedUpper,
            NsMethod::TwoSided => Method::TwoSided,
            NsMethod::Kde => Method::Kde,
            NsMethod::Chi2 => Method::Chi2,
            NsMethod::Mahalanobis => Method::Mahalanobis,
            NsMethod::KdeMultivariate => Method::KdeMultivariate,
        };
        Selection::Fixed(m)
    }

    fn from_method(m: Method) -> NsMethod {
        match m {
            Method::Discrete => NsMethod::Discrete,
            Method::OneSidedLower => NsMethod::OneSidedLower,
            Method::OneSidedUpper => NsMethod::OneSidedUpper,
            Method::TwoSided => NsMethod::TwoSided,
            Method::Kde => NsMethod::Kde,
            Method::Chi2 => NsMethod::Chi2,
            Method::Mahalanobis => NsMethod::Mahalanobis,
            Method::KdeMultivariate => NsMethod::KdeMultivariate,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NsSamplerConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    /// Post-burn-in iterations per chain, before thinning.
    pub retained: usize,
    pub thin: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NsConflict {
    pub p_value: f64,
    pub mc_se: f64,
    /// Effective sample size, or NaN when not applicable.
    pub ess: f64,
    pub n_draws: usize,
    /// Method actually used (never `Auto`).
    pub method: NsMethod,
}

impl From<&ConflictResult> for NsConflict {
    fn from(r: &ConflictResult) -> Self {
        NsConflict {
            p_value: r.p_value,
            mc_se: r.mc_se,
            ess: r.ess.unwrap_or(f64::NAN),
            n_draws: r.n_draws,
            method: NsMethod::from_method(r.method),
        }
    }
}

pub struct NsModel(DagModel);
pub struct NsSplit(SplitModel);
pub struct NsTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NsStatus, String);

fn fail(status: NsStatus, e: impl ToString) -> Failure {
    Failure(status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NsStatus {
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(NsStatus::Panic, msg))
    });
    match r {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NsStatus::Ok
        }
        Err(Failure(status, msg)) => {
            let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
            status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(NsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(NsStatus::InvalidUtf8, e))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(NsStatus::NullPointer, "null handle"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(NsStatus::NullPointer, "null output pointer"))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn ns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_model_from_json(json: *const c_char, out: *mut *mut NsModel) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let model = model_io::from_json_str(str_arg(json)?).map_err(|e| fail(NsStatus::Model, e))?;
        let report = model.validate();
        if !report.is_ok() {
            return Err(fail(NsStatus::Model, report));
        }
        *out = Box::into_raw(Box::new(NsModel(model)));
        Ok(())
    })
}

/// Loads a built-in model (`hiv`, `hiv-jeffreys`, `rats`).
///
/// # Safety
/// `id` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_model_from_corpus(id: *const c_char, out: *mut *mut NsModel) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let model = corpus::model(str_arg(id)?).map_err(|e| fail(NsStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(NsModel(model)));
        Ok(())
    })
}

/// Content hash of the model, written as a hex string of 64 characters plus NUL
/// into `buf` of length `len`.
///
/// # Safety
/// `model` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ns_model_hash(model: *const NsModel, buf: *mut c_char, len: usize) -> NsStatus {
    guard(|| {
        let model = ref_arg(model)?;
        if buf.is_null() {
            return Err(fail(NsStatus::NullPointer, "null buffer"));
        }
        let hash = model.0.hash();
        if len < hash.len() + 1 {
            return Err(fail(NsStatus::BufferTooSmall, format!("need {} bytes", hash.len() + 1)));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_model_free(model: *mut NsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Splits `model` by `spec`, which is either split-spec JSON or a corpus
/// split id such as `hiv-b:2`.
///
/// # Safety
/// `model` must be a live handle, `spec` a valid C string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_split_new(model: *const NsModel, spec: *const c_char, out: *mut *mut NsSplit) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let model = ref_arg(model)?;
        let text = str_arg(spec)?;
        let spec = if text.trim_start().starts_with('{') {
            SplitSpec::from_json_str(text).map_err(|e| fail(NsStatus::Split, e))?
        } else {
            corpus::split(text).map_err(|e| fail(NsStatus::InvalidArgument, e))?
        };
        let split = split_node(&model.0, &spec).map_err(|e| fail(NsStatus::Split, e))?;
        *out = Box::into_raw(Box::new(NsSplit(split)));
        Ok(())
    })
}

/// Number of components of δ for this split.
///
/// # Safety
/// `split` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_split_dim(split: *const NsSplit) -> usize {
    split.as_ref().map_or(0, |s| s.0.delta_spec.len())
}

/// # Safety
/// `split` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_split_free(split: *mut NsSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Runs the sampler on `model`, or on the split model when `split` is not NULL.
///
/// # Safety
/// `model` must be a live handle, `split` NULL or live, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_sample(
    model: *const NsModel,
    split: *const NsSplit,
    config: NsSamplerConfig,
    out: *mut *mut NsTrace,
) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let target = match split.as_ref() {
            Some(s) => &s.0.model,
            None => &ref_arg(model)?.0,
        };
        let cfg = SamplerConfig {
            thin: config.thin,
            ..SamplerConfig::new(config.n_chains, config.burn_in, config.retained, config.seed)
        };
        let trace = run_mcmc(target, &cfg).map_err(|e| fail(NsStatus::Inference, e))?;
        *out = Box::into_raw(Box::new(NsTrace(trace)));
        Ok(())
    })
}

/// Total retained draws over all chains.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_trace_len(trace: *const NsTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.n_chains() * t.0.n_draws())
}

/// Copies column `name`, chains concatenated, into `buf` of length `len`.
/// `written` receives the column length, also when the buffer is too small.
///
/// # Safety
/// `trace` must be live, `name` a valid C string, `buf` valid for `len`
/// doubles and `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_trace_column(
    trace: *const NsTrace,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> NsStatus {
    guard(|| {
        let trace = ref_arg(trace)?;
        let written = out_arg(written)?;
        let values = trace.0.pooled(str_arg(name)?).map_err(|e| fail(NsStatus::InvalidArgument, e))?;
        *written = values.len();
        if len < values.len() {
            return Err(fail(NsStatus::BufferTooSmall, format!("need {} doubles", values.len())));
        }
        if buf.is_null() {
            return Err(fail(NsStatus::NullPointer, "null buffer"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_trace_free(trace: *mut NsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn kde_config(bandwidth: f64) -> KdeConfig {
    if bandwidth > 0.0 {
        KdeConfig::fixed(bandwidth)
    } else {
        KdeConfig::default()
    }
}

fn compute(delta: &DeltaSamples, method: NsMethod, bandwidth: f64) -> Result<NsConflict, Failure> {
    let m = method.selection().resolve(delta);
    let r = conflict::conflict(delta, m, &kde_config(bandwidth)).map_err(|e| fail(NsStatus::Conflict, e))?;
    Ok(NsConflict::from(&r))
}

/// Conflict p-value for a trace sampled from `split`. A `bandwidth` ≤ 0
/// selects Silverman's rule for the KDE methods.
///
/// # Safety
/// `split` and `trace` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_conflict(
    split: *const NsSplit,
    trace: *const NsTrace,
    method: NsMethod,
    bandwidth: f64,
    out: *mut NsConflict,
) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let delta = delta_samples(&ref_arg(trace)?.0, &ref_arg(split)?.0).map_err(|e| fail(NsStatus::Split, e))?;
        *out = compute(&delta, method, bandwidth)?;
        Ok(())
    })
}

/// Conflict p-value for raw δ draws: `n` rows of `k` components, row-major,
/// treated as a single chain.
///
/// # Safety
/// `draws` must be valid for `n * k` doubles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_conflict_draws(
    draws: *const f64,
    n: usize,
    k: usize,
    method: NsMethod,
    bandwidth: f64,
    out: *mut NsConflict,
) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        if draws.is_null() {
            return Err(fail(NsStatus::NullPointer, "null draws"));
        }
        if k == 0 {
            return Err(fail(NsStatus::InvalidArgument, "k must be positive"));
        }
        let flat = std::slice::from_raw_parts(draws, n.checked_mul(k).ok_or_else(|| fail(NsStatus::InvalidArgument, "n * k overflows"))?);
        let rows: Vec<Vec<f64>> = flat.chunks(k).map(<[f64]>::to_vec).collect();
        let delta = if k == 1 { DeltaSamples::scalar(flat.to_vec()) } else { DeltaSamples::from_rows(&rows) };
        *out = compute(&delta, method, bandwidth)?;
        Ok(())
    })
}

/// Conflict for discrete posteriors `pa` and `pb` over the same `n` states.
///
/// # Safety
/// `pa` and `pb` must be valid for `n` doubles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_conflict_discrete(pa: *const f64, pb: *const f64, n: usize, out: *mut NsConflict) -> NsStatus {
    guard(|| {
        let out = out_arg(out)?;
        if pa.is_null() || pb.is_null() {
            return Err(fail(NsStatus::NullPointer, "null probability vector"));
        }
        let (a, b) = (std::slice::from_raw_parts(pa, n), std::slice::from_raw_parts(pb, n));
        let r = conflict::conflict_discrete(a, b).map_err(|e| fail(NsStatus::Conflict, e))?;
        *out = NsConflict::from(&r);
        Ok(())
    })
}
