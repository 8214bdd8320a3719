//! C ABI over the `jumprl` library.
//!
//! Every function returns a [`JrlStatus`] and writes results through out
//! pointers. Pricers and simulators are opaque handles created by a `_new`
//! function and released by the matching `_free`. On failure the message of
//! the most recent error on the calling thread is available from
//! [`jrl_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use jumprl::cos::{CosPricer, CosSlice, Payoff, QCharParams};
use jumprl::market::{environment_step, jump_variance_rate, MarketParams};
use jumprl::mv::true_solution;
use jumprl::rng::{tag, StreamRng, Streams};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JrlPayoff {
    Call = 0,
    Put = 1,
}

/// Merton jump-diffusion parameters; `lam = 0` gives Black-Scholes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JrlMarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub lam: f64,
    pub m: f64,
    pub delta: f64,
    pub rf: f64,
}

/// Closed-form solution of the exploratory mean-variance problem.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JrlMvSolution {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub omega: f64,
}

/// Opaque Fourier-cosine pricer. The expansion of the most recent time to
/// expiry is kept, so repeated calls at one maturity are cheap.
pub struct JrlCosPricer {
    pricer: CosPricer,
    slice: Option<CosSlice>,
}

/// Opaque market simulator with its own random stream.
pub struct JrlEnvironment {
    params: MarketParams,
    dt: f64,
    t: f64,
    rng: StreamRng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type Failure = (JrlStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JrlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            JrlStatus::Panic
        }
    }
}

fn lib_err(e: jumprl::Error) -> Failure {
    let status = match e {
        jumprl::Error::NonFinite { .. } | jumprl::Error::IllConditionedKernel => {
            JrlStatus::Numerical
        }
        _ => JrlStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn null(name: &str) -> Failure {
    (JrlStatus::NullPointer, format!("{name} is null"))
}

unsafe fn read<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, name: &str, v: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err((JrlStatus::Numerical, format!("{what} is not finite")))
    }
}

fn market(p: &JrlMarketParams) -> Result<MarketParams, Failure> {
    MarketParams::new(p.mu, p.sigma, p.lam, p.m, p.delta, p.rf).map_err(lib_err)
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jrl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jrl_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr() as *const c_char
}

/// Sharpe ratio `(μ − r)/σ`.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn jrl_sharpe_ratio(
    params: *const JrlMarketParams,
    out: *mut f64,
) -> JrlStatus {
    guard(|| {
        let p = market(read(params, "params")?)?;
        write(out, "out", finite(p.sharpe_ratio(), "Sharpe ratio")?)
    })
}

/// Jump variance rate `λ(e^{2m+2δ²} − 2e^{m+δ²/2} + 1)`.
///
/// # Safety
/// `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn jrl_jump_variance_rate(
    lam: f64,
    m: f64,
    delta: f64,
    out: *mut f64,
) -> JrlStatus {
    guard(|| {
        if !(lam >= 0.0 && delta >= 0.0 && m.is_finite() && lam.is_finite() && delta.is_finite()) {
            return Err((
                JrlStatus::InvalidArgument,
                format!("invalid jump parameters ({lam}, {m}, {delta})"),
            ));
        }
        write(
            out,
            "out",
            finite(jump_variance_rate(lam, m, delta), "jump variance rate")?,
        )
    })
}

/// Closed-form mean-variance solution at temperature `theta`, horizon
/// `horizon`, target `z` and initial wealth `x0`.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn jrl_mv_true_solution(
    params: *const JrlMarketParams,
    theta: f64,
    horizon: f64,
    z: f64,
    x0: f64,
    out: *mut JrlMvSolution,
) -> JrlStatus {
    guard(|| {
        let p = market(read(params, "params")?)?;
        if !(theta > 0.0 && horizon > 0.0 && z.is_finite() && x0.is_finite()) {
            return Err((
                JrlStatus::InvalidArgument,
                "theta and horizon must be positive".into(),
            ));
        }
        let s = true_solution(&p, theta, horizon, z, x0).map_err(lib_err)?;
        let sol = JrlMvSolution {
            phi1: s.phi.phi1,
            phi2: s.phi.phi2,
            phi3: s.phi.phi3,
            psi1: s.psi.psi1,
            psi2: s.psi.psi2,
            psi3: s.psi.psi3,
            omega: s.omega,
        };
        write(out, "out", sol)
    })
}

/// Create a pricer for a European option on the discounted price under the
/// variance-optimal measure of `params`. `band_lo`, `band_hi` bound the
/// log-moneyness `ln(S/K)` of the prices that will be requested.
///
/// # Safety
/// Pointers must be null or valid; `*out` receives a handle to be released
/// with [`jrl_cos_pricer_free`].
#[no_mangle]
pub unsafe extern "C" fn jrl_cos_pricer_new(
    params: *const JrlMarketParams,
    payoff: JrlPayoff,
    strike: f64,
    n_terms: usize,
    width: f64,
    band_lo: f64,
    band_hi: f64,
    out: *mut *mut JrlCosPricer,
) -> JrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = market(read(params, "params")?)?;
        if !(strike > 0.0
            && n_terms > 0
            && width > 0.0
            && band_lo.is_finite()
            && band_hi.is_finite()
            && band_lo <= band_hi)
        {
            return Err((JrlStatus::InvalidArgument, "invalid pricer settings".into()));
        }
        let qp = QCharParams::from_market(&p).map_err(lib_err)?;
        let payoff = match payoff {
            JrlPayoff::Call => Payoff::Call,
            JrlPayoff::Put => Payoff::Put,
        };
        let pricer = CosPricer {
            qp,
            payoff,
            strike,
            n_terms,
            width_multiplier: width,
            band: (band_lo, band_hi),
        };
        *out = Box::into_raw(Box::new(JrlCosPricer {
            pricer,
            slice: None,
        }));
        Ok(())
    })
}

/// Price and delta at time to expiry `tau` and discounted price `s`.
/// Either output pointer may be null.
///
/// # Safety
/// `handle` must come from [`jrl_cos_pricer_new`] and not be used
/// concurrently from several threads.
#[no_mangle]
pub unsafe extern "C" fn jrl_cos_pricer_price(
    handle: *mut JrlCosPricer,
    tau: f64,
    s: f64,
    price: *mut f64,
    delta: *mut f64,
) -> JrlStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        if !(tau > 0.0 && tau.is_finite() && s > 0.0 && s.is_finite()) {
            return Err((
                JrlStatus::InvalidArgument,
                format!("need tau > 0 and s > 0, got {tau}, {s}"),
            ));
        }
        if h.slice.as_ref().map_or(true, |sl| sl.tau != tau) {
            h.slice = Some(h.pricer.slice(tau).map_err(lib_err)?);
        }
        let (v, d) = h
            .slice
            .as_ref()
            .expect("slice just built")
            .price_and_delta(s);
        let (v, d) = (finite(v, "price")?, finite(d, "delta")?);
        if !price.is_null() {
            price.write(v);
        }
        if !delta.is_null() {
            delta.write(d);
        }
        Ok(())
    })
}

/// Release a pricer; null is ignored.
///
/// # Safety
/// `handle` must be null or come from [`jrl_cos_pricer_new`] and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jrl_cos_pricer_free(handle: *mut JrlCosPricer) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

/// Create a simulator stepping by `dt`, with its noise determined by `seed`.
///
/// # Safety
/// Pointers must be null or valid; `*out` receives a handle to be released
/// with [`jrl_environment_free`].
#[no_mangle]
pub unsafe extern "C" fn jrl_environment_new(
    params: *const JrlMarketParams,
    seed: u64,
    dt: f64,
    out: *mut *mut JrlEnvironment,
) -> JrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = market(read(params, "params")?)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err((
                JrlStatus::InvalidArgument,
                format!("dt must be positive, got {dt}"),
            ));
        }
        let rng = Streams::new(seed).stream(&[tag::ENVIRONMENT, 0]);
        *out = Box::into_raw(Box::new(JrlEnvironment {
            params: p,
            dt,
            t: 0.0,
            rng,
        }));
        Ok(())
    })
}

/// Advance one step holding dollar exposure `a` from wealth `x`. Writes the
/// new wealth and the gross return of the discounted price; either output
/// may be null.
///
/// # Safety
/// `handle` must come from [`jrl_environment_new`] and not be used
/// concurrently from several threads.
#[no_mangle]
pub unsafe extern "C" fn jrl_environment_step(
    handle: *mut JrlEnvironment,
    x: f64,
    a: f64,
    new_wealth: *mut f64,
    gross_return: *mut f64,
) -> JrlStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        if !(x.is_finite() && a.is_finite()) {
            return Err((
                JrlStatus::InvalidArgument,
                "wealth and exposure must be finite".into(),
            ));
        }
        let o = environment_step(h.t, x, 1.0, a, h.dt, &h.params, &mut h.rng);
        h.t += h.dt;
        let w = finite(o.new_wealth, "wealth")?;
        if !new_wealth.is_null() {
            new_wealth.write(w);
        }
        if !gross_return.is_null() {
            gross_return.write(o.gross_return);
        }
        Ok(())
    })
}

/// Release a simulator; null is ignored.
///
/// # Safety
/// `handle` must be null or come from [`jrl_environment_new`] and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jrl_environment_free(handle: *mut JrlEnvironment) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

/// Last error message of the calling thread.
pub fn last_error() -> String {
    let mut buf = vec![0 as c_char; 1024];
    let n = unsafe { jrl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(buf.len() - 1)]
        .iter()
        .map(|&c| c as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
