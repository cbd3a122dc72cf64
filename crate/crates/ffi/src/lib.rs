//! C ABI over the lgcp-strauss library.
//!
//! Objects cross the boundary as opaque handles created by `ls_*_new` or
//! producer functions and released with the matching `ls_*_free`. Every
//! fallible call returns an [`LsStatus`]; on failure the message is
//! available from [`ls_last_error`] on the same thread. Output arrays are
//! caller-allocated, with their capacity passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use lgcp_strauss::abc::{fit_abc, AbcPosterior, AbcSettings};
use lgcp_strauss::envelopes::{global_envelope, CurveSet};
use lgcp_strauss::io::read_pattern;
use lgcp_strauss::samplers::{simulate_model, ModelSimulator, SimSettings};
use lgcp_strauss::seeding::{stream, task_rng};
use lgcp_strauss::summaries::{l_function, summary_vector, SummaryConfig};
use lgcp_strauss::{Error, ModelKind, Point, PointPattern, PriorSpec, Window};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Output buffer smaller than required; nothing was written.
    BufferTooSmall = 3,
    Numerical = 4,
    /// Rejection sampling ran out of attempts; the result is partial.
    BudgetExhausted = 5,
    Io = 6,
    Panic = 7,
}

/// Model codes accepted by `model` arguments.
pub const LS_MODEL_LGCP_STRAUSS: u32 = 0;
pub const LS_MODEL_LGCP: u32 = 1;
pub const LS_MODEL_STRAUSS: u32 = 2;

/// Opaque point pattern with its window.
pub struct LsPattern(PointPattern);

/// Opaque ABC posterior sample.
pub struct LsPosterior(AbcPosterior);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsSimOptions {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    /// GRF grid cells per side.
    pub grid: usize,
    pub burnin: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsAbcOptions {
    pub k_pilot: usize,
    pub k_abc: usize,
    pub m: usize,
    pub quantile: f64,
    pub budget_factor: usize,
    pub grid: usize,
    pub burnin: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::Context { source, .. } => status_of(source),
        Error::Factorization(_) | Error::NoConvergence { .. } => LsStatus::Numerical,
        Error::Io(_) => LsStatus::Io,
        _ => LsStatus::InvalidArgument,
    }
}

struct Fail(LsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LsStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LsStatus::Panic
        }
    }
}

fn model(code: u32) -> Result<ModelKind, Fail> {
    ModelKind::from_index(code as usize)
        .ok_or_else(|| Fail(LsStatus::InvalidArgument, format!("unknown model code {code}")))
}

/// # Safety
/// `p` must be null or valid for `n` reads.
unsafe fn input<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or valid for `n` writes.
unsafe fn output<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

fn need(cap: usize, required: usize) -> Result<(), Fail> {
    if cap < required {
        return Err(Fail(LsStatus::BufferTooSmall, format!("buffer holds {cap}, need {required}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length of the default summary vector.
#[no_mangle]
pub extern "C" fn ls_summary_dim() -> usize {
    SummaryConfig::default().dim()
}

/// Number of free parameters of a model, or 0 for an unknown code.
#[no_mangle]
pub extern "C" fn ls_model_dim(model_code: u32) -> usize {
    ModelKind::from_index(model_code as usize).map_or(0, |k| k.dim())
}

/// # Safety
/// `xs` and `ys` must hold `n` values each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_pattern_new(
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut *mut LsPattern,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w = Window::new(xmin, xmax, ymin, ymax)?;
        let (xs, ys) = (input(xs, n, "xs")?, input(ys, n, "ys")?);
        let pts = xs.iter().zip(ys).map(|(&x, &y)| Point::new(x, y)).collect();
        *out = Box::into_raw(Box::new(LsPattern(PointPattern::new(w, pts)?)));
        Ok(())
    })
}

/// Read a pattern CSV (`x,y` with a `# window` line or a sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_pattern_read_csv(path: *const c_char, out: *mut *mut LsPattern) -> LsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(LsStatus::InvalidArgument, "path is not UTF-8".into()))?;
        *out = Box::into_raw(Box::new(LsPattern(read_pattern(Path::new(p))?)));
        Ok(())
    })
}

/// # Safety
/// `pattern` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_pattern_free(pattern: *mut LsPattern) {
    if !pattern.is_null() {
        drop(Box::from_raw(pattern));
    }
}

/// Number of points, or 0 for null.
///
/// # Safety
/// `pattern` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_pattern_len(pattern: *const LsPattern) -> usize {
    pattern.as_ref().map_or(0, |p| p.0.len())
}

/// Copy coordinates into `xs`, `ys` (each of capacity `cap`).
///
/// # Safety
/// `pattern` must be a live handle; `xs`, `ys` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn ls_pattern_coords(
    pattern: *const LsPattern,
    xs: *mut f64,
    ys: *mut f64,
    cap: usize,
) -> LsStatus {
    guard(|| {
        let p = &pattern.as_ref().ok_or_else(|| null("pattern"))?.0;
        need(cap, p.len())?;
        let (xs, ys) = (output(xs, p.len(), "xs")?, output(ys, p.len(), "ys")?);
        for (i, q) in p.points().iter().enumerate() {
            xs[i] = q.x;
            ys[i] = q.y;
        }
        Ok(())
    })
}

fn sim_settings(o: &LsSimOptions) -> Result<SimSettings, Fail> {
    let w = Window::new(o.xmin, o.xmax, o.ymin, o.ymax)?;
    Ok(SimSettings { window: w, nx: o.grid, ny: o.grid, burnin: o.burnin })
}

/// Simulate one pattern. `theta` holds the model's free parameters in
/// canonical order (`ls_model_dim` values).
///
/// # Safety
/// `theta` valid for `dim` reads; `options` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_simulate(
    model_code: u32,
    theta: *const f64,
    dim: usize,
    options: *const LsSimOptions,
    seed: u64,
    out: *mut *mut LsPattern,
) -> LsStatus {
    guard(|| {
        let kind = model(model_code)?;
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let theta = input(theta, dim, "theta")?;
        let mut rng = task_rng(seed, &[stream::OBSERVED]);
        let x = simulate_model(kind, theta, &sim_settings(opts)?, &mut rng)?;
        *out = Box::into_raw(Box::new(LsPattern(x)));
        Ok(())
    })
}

/// Default 56-entry summary vector. Non-finite entries are written as is.
///
/// # Safety
/// `pattern` live; `values` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn ls_summary_vector(pattern: *const LsPattern, values: *mut f64, cap: usize) -> LsStatus {
    guard(|| {
        let p = &pattern.as_ref().ok_or_else(|| null("pattern"))?.0;
        let t = summary_vector(p, &SummaryConfig::default())?;
        need(cap, t.len())?;
        output(values, t.len(), "values")?.copy_from_slice(&t.values);
        Ok(())
    })
}

/// L-function on `r` (strictly increasing). `defined[k]` is 1 where the
/// estimate exists.
///
/// # Safety
/// `pattern` live; `r`, `values`, `defined` valid for `m` elements.
#[no_mangle]
pub unsafe extern "C" fn ls_l_function(
    pattern: *const LsPattern,
    r: *const f64,
    m: usize,
    values: *mut f64,
    defined: *mut u8,
) -> LsStatus {
    guard(|| {
        let p = &pattern.as_ref().ok_or_else(|| null("pattern"))?.0;
        let c = l_function(p, input(r, m, "r")?)?;
        output(values, m, "values")?.copy_from_slice(&c.values);
        for (d, &ok) in output(defined, m, "defined")?.iter_mut().zip(&c.defined) {
            *d = ok as u8;
        }
        Ok(())
    })
}

/// Fit the model to `observed` by semi-automatic ABC with `prior_name`
/// (p1, p2, p3 or oak). On `BudgetExhausted` the handle is still set and
/// holds the partial sample.
///
/// # Safety
/// `observed` live; `prior_name` NUL-terminated; `options` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_abc_fit(
    observed: *const LsPattern,
    model_code: u32,
    prior_name: *const c_char,
    options: *const LsAbcOptions,
    seed: u64,
    out: *mut *mut LsPosterior,
) -> LsStatus {
    guard(|| {
        let x = &observed.as_ref().ok_or_else(|| null("observed"))?.0;
        let kind = model(model_code)?;
        if prior_name.is_null() {
            return Err(null("prior_name"));
        }
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(prior_name)
            .to_str()
            .map_err(|_| Fail(LsStatus::InvalidArgument, "prior name is not UTF-8".into()))?;
        let prior = PriorSpec::preset(name)?;
        let settings = AbcSettings {
            k_pilot: o.k_pilot,
            k_abc: o.k_abc,
            m: o.m,
            quantile: o.quantile,
            budget_factor: o.budget_factor,
            ..AbcSettings::default()
        };
        let sim = ModelSimulator { kind, settings: SimSettings { window: *x.window(), nx: o.grid, ny: o.grid, burnin: o.burnin } };
        let fit = fit_abc(x, kind, &prior, &sim, &settings, seed)?;
        let shortfall = fit.posterior.shortfall;
        *out = Box::into_raw(Box::new(LsPosterior(fit.posterior)));
        if shortfall {
            return Err(Fail(LsStatus::BudgetExhausted, "attempt budget exhausted; posterior is partial".into()));
        }
        Ok(())
    })
}

/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_posterior_free(posterior: *mut LsPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// Accepted draws, or 0 for null.
///
/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_posterior_len(posterior: *const LsPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.0.len())
}

/// Tolerance used by the rejection step, or NaN for null.
///
/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_posterior_epsilon(posterior: *const LsPosterior) -> f64 {
    posterior.as_ref().map_or(f64::NAN, |p| p.0.epsilon)
}

/// Draws as a row-major `len x dim` matrix of free parameters.
///
/// # Safety
/// `posterior` live; `values` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn ls_posterior_samples(posterior: *const LsPosterior, values: *mut f64, cap: usize) -> LsStatus {
    guard(|| {
        let p = &posterior.as_ref().ok_or_else(|| null("posterior"))?.0;
        let total = p.len() * p.kind.dim();
        need(cap, total)?;
        let out = output(values, total, "values")?;
        for (dst, v) in out.iter_mut().zip(p.samples.iter().flatten()) {
            *dst = *v;
        }
        Ok(())
    })
}

/// Global ERL envelope. `curves` is row-major `n_curves x len` with the
/// data curve first; `lo`, `hi` receive the envelope (NaN where
/// undefined), `p_value` the test p-value and `rejected` 0 or 1.
///
/// # Safety
/// `r` valid for `len` reads; `curves` for `n_curves * len` reads;
/// `lo`, `hi` for `len` writes; `p_value`, `rejected` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_global_envelope(
    r: *const f64,
    len: usize,
    curves: *const f64,
    n_curves: usize,
    level: f64,
    lo: *mut f64,
    hi: *mut f64,
    p_value: *mut f64,
    rejected: *mut u8,
) -> LsStatus {
    guard(|| {
        if p_value.is_null() || rejected.is_null() {
            return Err(null("p_value or rejected"));
        }
        let r = input(r, len, "r")?.to_vec();
        let flat = input(curves, n_curves * len, "curves")?;
        let rows = if len == 0 { vec![Vec::new(); n_curves] } else { flat.chunks(len).map(<[f64]>::to_vec).collect() };
        let res = global_envelope(&CurveSet::from_values(r, rows)?, level)?;
        output(lo, len, "lo")?.copy_from_slice(&res.lo);
        output(hi, len, "hi")?.copy_from_slice(&res.hi);
        *p_value = res.p_value;
        *rejected = res.rejected as u8;
        Ok(())
    })
}
