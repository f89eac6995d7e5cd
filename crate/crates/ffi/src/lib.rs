//! C ABI over the msrisk library.
//!
//! Objects cross the boundary as opaque handles created by `msr_*_new`,
//! `msr_fit` or `msr_*_from_json` and released with the matching `msr_*_free`.
//! Every fallible call returns an [`MsrStatus`]; the message of the most recent
//! failure on the calling thread is available from [`msr_last_error`].
//! Matrices are passed row-major and indices are 0-based.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use msrisk::inference::{self, FitOptions};
use msrisk::predictive::{self, DofConvention, PredictiveSpec};
use msrisk::risk::{var_mixture, RiskEvaluator, RiskMeasure};
use msrisk::shapley::{self, ValueMode};
use msrisk::{ConditioningSpec, Error, FittedModel, MixtureDistribution, ModelFamily, ReturnPanel};
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Numerical = 5,
    FitFailed = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsrFamily {
    Gaussian = 0,
    StudentT = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsrMeasure {
    Var = 0,
    Es = 1,
    Mcovar = 2,
    Mcoes = 3,
    DeltaMcovar = 4,
    DeltaMcoes = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsrDofConvention {
    Paper = 0,
    Standard = 1,
}

/// Opaque return panel.
pub struct MsrPanel(ReturnPanel);
/// Opaque fitted model.
pub struct MsrModel(FittedModel);
/// Opaque predictive mixture.
pub struct MsrMixture(MixtureDistribution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MsrStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::Data(_)
        | Error::UnsupportedDimension { .. }
        | Error::IncompleteTable(_) => MsrStatus::InvalidArgument,
        Error::DimensionMismatch(_) => MsrStatus::DimensionMismatch,
        Error::NotPositiveDefinite(_) => MsrStatus::NotPositiveDefinite,
        Error::FitFailed(_) | Error::DegenerateState(_) => MsrStatus::FitFailed,
        Error::Json(_) => MsrStatus::Parse,
        _ => MsrStatus::Numerical,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), MsrStatus>) -> MsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsrStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MsrStatus::Panic
        }
    }
}

fn lib<T>(r: msrisk::Result<T>) -> Result<T, MsrStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn fail<T>(status: MsrStatus, msg: &str) -> Result<T, MsrStatus> {
    set_error(msg);
    Err(status)
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, MsrStatus> {
    if p.is_null() {
        return fail(MsrStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(&*p)
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], MsrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(MsrStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], MsrStatus> {
    if len < need {
        return fail(
            MsrStatus::BufferTooSmall,
            &format!("{what} holds {len} values, {need} needed"),
        );
    }
    if p.is_null() {
        return fail(MsrStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), MsrStatus> {
    if out.is_null() {
        return fail(MsrStatus::NullPointer, &format!("{what} is null"));
    }
    *out = value;
    Ok(())
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, MsrStatus> {
    if p.is_null() {
        return fail(MsrStatus::NullPointer, "string is null");
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MsrStatus::Parse, "string is not UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn msr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Frees a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn msr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a `t x p` panel from row-major values with synthetic weekly dates.
#[no_mangle]
pub unsafe extern "C" fn msr_panel_new(
    values: *const f64,
    t: usize,
    p: usize,
    out: *mut *mut MsrPanel,
) -> MsrStatus {
    guard(|| {
        let n = t.checked_mul(p).ok_or(MsrStatus::InvalidArgument)?;
        let v = slice(values, n, "values")?;
        let panel = lib(ReturnPanel::with_default_dates(DMatrix::from_row_slice(
            t, p, v,
        )))?;
        put(out, Box::into_raw(Box::new(MsrPanel(panel))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn msr_panel_free(panel: *mut MsrPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Fits an `n_states`-state model with `restarts` EM restarts; `family` is an [`MsrFamily`] code.
#[no_mangle]
pub unsafe extern "C" fn msr_fit(
    panel: *const MsrPanel,
    n_states: usize,
    family: u32,
    restarts: usize,
    seed: u64,
    out: *mut *mut MsrModel,
) -> MsrStatus {
    guard(|| {
        let panel = href(panel, "panel")?;
        let family = family_of(family)?;
        let opts = FitOptions {
            restarts,
            seed,
            ..FitOptions::default()
        };
        let model = lib(inference::fit(&panel.0, n_states, family, &opts))?;
        put(out, Box::into_raw(Box::new(MsrModel(model))), "out")
    })
}

/// Parses a model from the JSON written by `msr_model_to_json` or the CLI.
#[no_mangle]
pub unsafe extern "C" fn msr_model_from_json(
    json: *const c_char,
    out: *mut *mut MsrModel,
) -> MsrStatus {
    guard(|| {
        let model = lib(FittedModel::from_json(text(json)?))?;
        put(out, Box::into_raw(Box::new(MsrModel(model))), "out")
    })
}

/// Serialises a model; free the result with `msr_string_free`.
#[no_mangle]
pub unsafe extern "C" fn msr_model_to_json(
    model: *const MsrModel,
    out: *mut *mut c_char,
) -> MsrStatus {
    guard(|| {
        let json = lib(href(model, "model")?.0.to_json())?;
        let c = CString::new(json).or_else(|_| fail(MsrStatus::Numerical, "JSON contains NUL"))?;
        put(out, c.into_raw(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn msr_model_free(model: *mut MsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of observations, assets and states of a fitted model.
#[no_mangle]
pub unsafe extern "C" fn msr_model_shape(
    model: *const MsrModel,
    n_obs: *mut usize,
    dim: *mut usize,
    n_states: *mut usize,
) -> MsrStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        put(n_obs, m.n_obs(), "n_obs")?;
        put(dim, m.dim(), "dim")?;
        put(n_states, m.params.n_states, "n_states")
    })
}

/// Log-likelihood, AIC and BIC of a fitted model.
#[no_mangle]
pub unsafe extern "C" fn msr_model_criteria(
    model: *const MsrModel,
    loglik: *mut f64,
    aic: *mut f64,
    bic: *mut f64,
) -> MsrStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        put(loglik, m.loglik, "loglik")?;
        put(aic, m.aic, "aic")?;
        put(bic, m.bic, "bic")
    })
}

/// Copies the `n_obs x n_states` filtered probabilities (row-major) into `out`.
#[no_mangle]
pub unsafe extern "C" fn msr_model_filtered(
    model: *const MsrModel,
    out: *mut f64,
    len: usize,
) -> MsrStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        let (t, l) = m.filtered.shape();
        let dst = out_slice(out, len, t * l, "out")?;
        for i in 0..t {
            for k in 0..l {
                dst[i * l + k] = m.filtered[(i, k)];
            }
        }
        Ok(())
    })
}

/// Writes the most probable state path (0-based) of `panel` into `out`.
#[no_mangle]
pub unsafe extern "C" fn msr_viterbi(
    model: *const MsrModel,
    panel: *const MsrPanel,
    out: *mut usize,
    len: usize,
) -> MsrStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        let panel = &href(panel, "panel")?.0;
        let path = lib(inference::viterbi(panel, &m.params))?;
        out_slice(out, len, path.len(), "out")?.copy_from_slice(&path);
        Ok(())
    })
}

/// Law of the observation `horizon` steps after row `origin`.
#[no_mangle]
pub unsafe extern "C" fn msr_predictive(
    model: *const MsrModel,
    origin: usize,
    horizon: usize,
    out: *mut *mut MsrMixture,
) -> MsrStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        let mix = lib(predictive::predictive_mixture(
            m,
            PredictiveSpec::new(origin, horizon),
        ))?;
        put(out, Box::into_raw(Box::new(MsrMixture(mix))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn msr_mixture_free(mix: *mut MsrMixture) {
    if !mix.is_null() {
        drop(Box::from_raw(mix));
    }
}

#[no_mangle]
pub unsafe extern "C" fn msr_mixture_dim(mix: *const MsrMixture, dim: *mut usize) -> MsrStatus {
    guard(|| put(dim, href(mix, "mixture")?.0.dim(), "dim"))
}

/// `tau`-quantile of coordinate `asset` of the mixture.
#[no_mangle]
pub unsafe extern "C" fn msr_var(
    mix: *const MsrMixture,
    asset: usize,
    tau: f64,
    out: *mut f64,
) -> MsrStatus {
    guard(|| {
        let mix = &href(mix, "mixture")?.0;
        if asset >= mix.dim() {
            return fail(MsrStatus::InvalidArgument, "asset out of range");
        }
        let marg = lib(predictive::marginalize(mix, &[asset]))?;
        put(out, lib(var_mixture(&marg, tau))?, "out")
    })
}

fn family_of(code: u32) -> Result<ModelFamily, MsrStatus> {
    match code {
        c if c == MsrFamily::Gaussian as u32 => Ok(ModelFamily::Gaussian),
        c if c == MsrFamily::StudentT as u32 => Ok(ModelFamily::StudentT),
        c => fail(
            MsrStatus::InvalidArgument,
            &format!("unknown family code {c}"),
        ),
    }
}

fn measure_of(code: u32) -> Result<RiskMeasure, MsrStatus> {
    let all = [
        (MsrMeasure::Var, RiskMeasure::VaR),
        (MsrMeasure::Es, RiskMeasure::ES),
        (MsrMeasure::Mcovar, RiskMeasure::MCoVaR),
        (MsrMeasure::Mcoes, RiskMeasure::MCoES),
        (MsrMeasure::DeltaMcovar, RiskMeasure::DeltaMCoVaR),
        (MsrMeasure::DeltaMcoes, RiskMeasure::DeltaMCoES),
    ];
    match all.iter().find(|(m, _)| *m as u32 == code) {
        Some(&(_, r)) => Ok(r),
        None => fail(
            MsrStatus::InvalidArgument,
            &format!("unknown measure code {code}"),
        ),
    }
}

fn convention_of(code: u32) -> Result<DofConvention, MsrStatus> {
    match code {
        c if c == MsrDofConvention::Paper as u32 => Ok(DofConvention::Paper),
        c if c == MsrDofConvention::Standard as u32 => Ok(DofConvention::Standard),
        c => fail(
            MsrStatus::InvalidArgument,
            &format!("unknown dof convention code {c}"),
        ),
    }
}

/// Evaluates the [`MsrMeasure`] `measure` for `target`; `distressed` is
/// ignored by VaR and ES. `convention` is an [`MsrDofConvention`] code.
#[no_mangle]
pub unsafe extern "C" fn msr_risk(
    mix: *const MsrMixture,
    measure: u32,
    target: usize,
    distressed: *const usize,
    n_distressed: usize,
    tau1: f64,
    tau2: f64,
    convention: u32,
    out: *mut f64,
) -> MsrStatus {
    guard(|| {
        let mix = &href(mix, "mixture")?.0;
        let distressed = slice(distressed, n_distressed, "distressed")?.to_vec();
        let measure = measure_of(measure)?;
        let spec = ConditioningSpec {
            target,
            distressed,
            tau1,
            tau2,
        };
        if measure.is_conditional() {
            lib(spec.check(mix.dim()))?;
        }
        let ev = lib(RiskEvaluator::new(mix, convention_of(convention)?))?;
        put(out, lib(ev.evaluate(measure, &spec))?, "out")
    })
}

/// Shapley shares of the other `dim - 1` assets (ascending index order) in the
/// spillover `measure` of `target`. `signed` selects signed rather than absolute values.
#[no_mangle]
pub unsafe extern "C" fn msr_shapley(
    mix: *const MsrMixture,
    measure: u32,
    target: usize,
    tau1: f64,
    tau2: f64,
    convention: u32,
    signed: bool,
    shares: *mut f64,
    len: usize,
) -> MsrStatus {
    guard(|| {
        let mix = &href(mix, "mixture")?.0;
        let ev = lib(RiskEvaluator::new(mix, convention_of(convention)?))?;
        let mode = if signed {
            ValueMode::Signed
        } else {
            ValueMode::Absolute
        };
        let table = lib(shapley::build_value_table(
            &ev,
            target,
            measure_of(measure)?,
            tau1,
            tau2,
            mode,
        ))?;
        let values = lib(shapley::shapley_values(&table))?;
        out_slice(shares, len, values.len(), "shares")?.copy_from_slice(&values);
        Ok(())
    })
}
