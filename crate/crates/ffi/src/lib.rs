//! C ABI over the netnewton solver.
//!
//! Every object crosses the boundary as an opaque pointer that must be
//! released with its matching `nn_*_free`. Fallible calls return an
//! [`NnStatus`]; the message of the last failure on the calling thread is
//! available through [`nn_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use netnewton::gen::random_network;
use netnewton::model::{eval_h, BarrierProblem, Network, Utility};
use netnewton::solver::{two_pass_solve, Solver, SolverConfig};
use netnewton::trace::{Phase, Termination, Trace};
use netnewton::Error;

/// Result codes of fallible calls.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidNetwork = 3,
    Parse = 4,
    SolveFailed = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Phase tag of a trace record.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NnPhase {
    Damped = 0,
    Quadratic = 1,
    FirstOrder = 2,
}

/// Opaque network handle.
pub struct NnNetwork(Network);

/// Opaque handle to the outcome of a solve.
pub struct NnSolveResult {
    rates: Vec<f64>,
    utility: f64,
    converged: bool,
    traces: Vec<Trace>,
}

/// Opaque handle to one per-iteration trace.
pub struct NnTrace(Trace);

/// Solver parameters. Initialize with [`nn_solver_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NnSolverOptions {
    pub mu: f64,
    pub p: f64,
    pub epsilon: f64,
    pub v: f64,
    pub b: f64,
    pub theta_term: f64,
    pub a: f64,
    pub max_primal_iters: usize,
    pub seed: u64,
    /// Nonzero runs the two-pass objective scaling.
    pub two_pass: i32,
}

/// One trace row.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NnRecord {
    pub k: usize,
    pub f: f64,
    pub h: f64,
    pub lambda_tilde: f64,
    pub theta: f64,
    pub stepsize: f64,
    pub phase: NnPhase,
    pub dual_iters: usize,
    pub consensus_rounds: usize,
    pub min_slack: f64,
    pub feas_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> NnStatus {
    match e {
        Error::Parse(_) | Error::Io(_) => NnStatus::Parse,
        Error::InvalidConfig(_) => NnStatus::InvalidArgument,
        Error::DimensionMismatch { .. }
        | Error::EmptyRoute(_)
        | Error::UnusedLink(_)
        | Error::LinkOutOfRange { .. }
        | Error::DuplicateLink { .. }
        | Error::NonPositiveCapacity { .. }
        | Error::InvalidUtility { .. }
        | Error::Disconnected(_)
        | Error::RedrawCap(_) => NnStatus::InvalidNetwork,
        _ => NnStatus::SolveFailed,
    }
}

/// Runs `body`, mapping errors and panics to status codes.
fn guard(body: impl FnOnce() -> Result<(), (NnStatus, String)>) -> NnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => NnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NnStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (NnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NnStatus, String) {
    (NnStatus::NullPointer, format!("{what} is null"))
}

/// Message of the most recent failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a network from its TOML description.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_network_from_toml(
    text: *const c_char,
    out: *mut *mut NnNetwork,
) -> NnStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (NnStatus::Parse, e.to_string()))?;
        let n = Network::from_toml_str(s).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(NnNetwork(n)));
        Ok(())
    })
}

/// Builds a network with logarithmic utilities. Routes are given in
/// compressed form: source `i` uses `route_links[route_offsets[i] ..
/// route_offsets[i + 1]]`.
///
/// # Safety
/// `capacities` must hold `num_links` values, `weights` `num_sources`
/// values, `route_offsets` `num_sources + 1` values and `route_links`
/// `route_offsets[num_sources]` values. `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_network_new(
    num_links: usize,
    capacities: *const f64,
    num_sources: usize,
    route_offsets: *const usize,
    route_links: *const usize,
    weights: *const f64,
    out: *mut *mut NnNetwork,
) -> NnStatus {
    guard(|| {
        if capacities.is_null() || route_offsets.is_null() || weights.is_null() || out.is_null() {
            return Err(null("an input array or out"));
        }
        let caps = std::slice::from_raw_parts(capacities, num_links).to_vec();
        let offsets = std::slice::from_raw_parts(route_offsets, num_sources + 1);
        if offsets.windows(2).any(|w| w[1] < w[0]) || offsets[0] != 0 {
            return Err((
                NnStatus::InvalidArgument,
                "route offsets must start at 0 and be nondecreasing".into(),
            ));
        }
        let total = offsets[num_sources];
        if total > 0 && route_links.is_null() {
            return Err(null("route_links"));
        }
        let links: &[usize] = if total == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(route_links, total)
        };
        let routes = offsets
            .windows(2)
            .map(|w| links[w[0]..w[1]].to_vec())
            .collect();
        let utils = std::slice::from_raw_parts(weights, num_sources)
            .iter()
            .map(|&w| Utility::log(w))
            .collect();
        let n = Network::new(routes, caps, utils).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(NnNetwork(n)));
        Ok(())
    })
}

/// Seeded random network with Bernoulli routing.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_network_random(
    links: usize,
    sources: usize,
    prob: f64,
    seed: u64,
    out: *mut *mut NnNetwork,
) -> NnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let n = random_network(links, sources, prob, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(NnNetwork(n)));
        Ok(())
    })
}

/// Number of links, or 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_network_num_links(network: *const NnNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.0.num_links())
}

/// Number of sources, or 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_network_num_sources(network: *const NnNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.0.num_sources())
}

/// Serializes the network as TOML; free the string with [`nn_string_free`].
///
/// # Safety
/// `network` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_network_to_toml(
    network: *const NnNetwork,
    out: *mut *mut c_char,
) -> NnStatus {
    guard(|| {
        let n = network.as_ref().ok_or_else(|| null("network"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(n.0.to_toml_string());
        Ok(())
    })
}

/// Releases a network handle. Null is ignored.
///
/// # Safety
/// `network` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nn_network_free(network: *mut NnNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Fills `out` with the library defaults.
///
/// # Safety
/// `out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_solver_options_default(out: *mut NnSolverOptions) {
    if let Some(o) = out.as_mut() {
        let c = SolverConfig::default();
        *o = NnSolverOptions {
            mu: c.mu,
            p: c.p,
            epsilon: c.epsilon,
            v: c.v,
            b: c.b,
            theta_term: c.theta_term,
            a: c.a,
            max_primal_iters: c.max_primal_iters,
            seed: c.seed,
            two_pass: 0,
        };
    }
}

fn config_from(o: &NnSolverOptions) -> SolverConfig {
    SolverConfig {
        mu: o.mu,
        p: o.p,
        epsilon: o.epsilon,
        v: o.v,
        b: o.b,
        theta_term: o.theta_term,
        a: o.a,
        max_primal_iters: o.max_primal_iters,
        seed: o.seed,
        ..SolverConfig::default()
    }
}

/// Runs the distributed Newton method. `options` may be null for defaults.
///
/// # Safety
/// `network` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nn_solve(
    network: *const NnNetwork,
    options: *const NnSolverOptions,
    out: *mut *mut NnSolveResult,
) -> NnStatus {
    guard(|| {
        let n = &network.as_ref().ok_or_else(|| null("network"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let (cfg, two_pass) = match options.as_ref() {
            Some(o) => (config_from(o), o.two_pass != 0),
            None => (SolverConfig::default(), false),
        };
        cfg.validate().map_err(lib_err)?;
        let result = if two_pass {
            let tp = two_pass_solve(n, &cfg).map_err(lib_err)?;
            let rates = tp.x.rates().to_vec();
            NnSolveResult {
                utility: -eval_h(n, &rates),
                converged: [&tp.first, &tp.second]
                    .iter()
                    .all(|t| t.termination == Termination::Converged),
                rates,
                traces: vec![tp.first, tp.second],
            }
        } else {
            let problem = BarrierProblem::new(n, cfg.mu, 1.0).map_err(lib_err)?;
            let (x, trace) = Solver::new(n)
                .and_then(|s| s.solve(&problem, &cfg))
                .map_err(lib_err)?;
            let rates = x.rates().to_vec();
            NnSolveResult {
                utility: -eval_h(n, &rates),
                converged: trace.termination == Termination::Converged,
                rates,
                traces: vec![trace],
            }
        };
        *out = Box::into_raw(Box::new(result));
        Ok(())
    })
}

/// Number of source rates in a result, or 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_result_num_rates(result: *const NnSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.rates.len())
}

/// Copies the rates into `buf`, which must hold at least
/// [`nn_result_num_rates`] values.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nn_result_rates(
    result: *const NnSolveResult,
    buf: *mut f64,
    len: usize,
) -> NnStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < r.rates.len() {
            return Err((
                NnStatus::OutOfRange,
                format!("buffer holds {len}, need {}", r.rates.len()),
            ));
        }
        ptr::copy_nonoverlapping(r.rates.as_ptr(), buf, r.rates.len());
        Ok(())
    })
}

/// Total utility at the returned rates; NaN for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_result_utility(result: *const NnSolveResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.utility)
}

/// 1 when every pass stopped on the decrement test, else 0.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_result_converged(result: *const NnSolveResult) -> i32 {
    result.as_ref().map_or(0, |r| i32::from(r.converged))
}

/// Primal steps plus dual iterations over all passes.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_result_counted_iterations(result: *const NnSolveResult) -> usize {
    result
        .as_ref()
        .map_or(0, |r| r.traces.iter().map(Trace::counted_iterations).sum())
}

/// Number of traces (1, or 2 for a two-pass solve).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_result_num_traces(result: *const NnSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.traces.len())
}

/// Copies trace `index` into a new handle; free with [`nn_trace_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_result_trace(
    result: *const NnSolveResult,
    index: usize,
    out: *mut *mut NnTrace,
) -> NnStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = r.traces.get(index).ok_or_else(|| {
            (
                NnStatus::OutOfRange,
                format!("trace {index} of {}", r.traces.len()),
            )
        })?;
        *out = Box::into_raw(Box::new(NnTrace(t.clone())));
        Ok(())
    })
}

/// Releases a result handle. Null is ignored.
///
/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nn_result_free(result: *mut NnSolveResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of records, or 0 for null.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nn_trace_len(trace: *const NnTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.records.len())
}

/// Copies record `k` into `out`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_trace_record(
    trace: *const NnTrace,
    k: usize,
    out: *mut NnRecord,
) -> NnStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let r = t.0.records.get(k).ok_or_else(|| {
            (
                NnStatus::OutOfRange,
                format!("record {k} of {}", t.0.records.len()),
            )
        })?;
        *o = NnRecord {
            k: r.k,
            f: r.f,
            h: r.h,
            lambda_tilde: r.lambda_tilde,
            theta: r.theta,
            stepsize: r.stepsize,
            phase: match r.phase {
                Phase::Damped => NnPhase::Damped,
                Phase::Quadratic => NnPhase::Quadratic,
                Phase::FirstOrder => NnPhase::FirstOrder,
            },
            dual_iters: r.dual_iters,
            consensus_rounds: r.consensus_rounds,
            min_slack: r.min_slack,
            feas_residual: r.feas_residual,
        };
        Ok(())
    })
}

/// Trace as CSV; free the string with [`nn_string_free`].
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nn_trace_to_csv(trace: *const NnTrace, out: *mut *mut c_char) -> NnStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(t.0.to_csv_string());
        Ok(())
    })
}

/// Releases a trace handle. Null is ignored.
///
/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nn_trace_free(trace: *mut NnTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("interior NULs removed")
        .into_raw()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
