//! C interface to the bimdp planner.
//!
//! Every fallible function returns a [`BimdpStatus`]; on failure the message
//! is kept per thread and read with [`bimdp_last_error_message`]. Handles are
//! opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bimdp::bench::Problem;
use bimdp::bilevel::{plan, solve_bilevel, BiLevelPolicy, HeuristicSpec, MissionSpec, SolverSettings};
use bimdp::mdp::{simulate, value_iteration, SolveReport, DEFAULT_STEP_CAP};
use bimdp::rover::{render, GridConfig, RenderFormat, RoverState};
use bimdp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BimdpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Io = 3,
    NotConverged = 4,
    Contract = 5,
    Resource = 6,
    Panic = 7,
}

/// A compiled problem.
pub struct BimdpProblem(Problem);

/// A solved flat value-iteration policy.
pub struct BimdpFlatSolution(SolveReport);

/// A solved bi-level policy with its low-level cache.
pub struct BimdpBilevel(BiLevelPolicy);

/// Position, time and tracking masks.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BimdpState {
    pub x: u16,
    pub y: u16,
    pub t: u16,
    pub measured: u32,
    pub drilled: u32,
    pub visited: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BimdpPlanSummary {
    pub discounted_return: f64,
    pub steps: usize,
    pub high_level_decisions: usize,
    pub new_ll_solves: usize,
}

impl From<BimdpState> for RoverState {
    fn from(s: BimdpState) -> Self {
        RoverState {
            x: s.x,
            y: s.y,
            t: s.t,
            measured: s.measured,
            drilled: s.drilled,
            visited: s.visited,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BimdpStatus {
    match e {
        Error::Config(_) | Error::MalformedTransitions { .. } => BimdpStatus::Config,
        Error::Io { .. } => BimdpStatus::Io,
        Error::NotConverged { .. } => BimdpStatus::NotConverged,
        Error::Contract(_) => BimdpStatus::Contract,
        Error::Resource(_) => BimdpStatus::Resource,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (BimdpStatus, String)>) -> BimdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BimdpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside bimdp".into());
            BimdpStatus::Panic
        }
    }
}

fn lift(e: Error) -> (BimdpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BimdpStatus, String) {
    (BimdpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BimdpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (BimdpStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bimdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn bimdp_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Static version string.
#[no_mangle]
pub extern "C" fn bimdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn problem_from(cfg: Result<GridConfig, Error>) -> Result<BimdpProblem, (BimdpStatus, String)> {
    Ok(BimdpProblem(Problem::new(cfg.map_err(lift)?).map_err(lift)?))
}

/// Compiles a problem from a JSON configuration string.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bimdp_problem_from_json(json: *const c_char, out: *mut *mut BimdpProblem) -> BimdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = problem_from(GridConfig::from_json(str_arg(json, "json")?))?;
        store(out, p);
        Ok(())
    })
}

/// Compiles a problem from a JSON configuration file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bimdp_problem_load(path: *const c_char, out: *mut *mut BimdpProblem) -> BimdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = problem_from(GridConfig::load(str_arg(path, "path")?))?;
        store(out, p);
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bimdp_problem_free(problem: *mut BimdpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of flat states, the end sink included.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bimdp_problem_state_count(problem: *const BimdpProblem, out: *mut usize) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.0.flat.state_count();
        Ok(())
    })
}

/// Writes the configured start state.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bimdp_problem_start(problem: *const BimdpProblem, out: *mut BimdpState) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let s = p.0.world.start_state();
        *out.as_mut().ok_or_else(|| null("out"))? = BimdpState {
            x: s.x,
            y: s.y,
            t: s.t,
            measured: s.measured,
            drilled: s.drilled,
            visited: s.visited,
        };
        Ok(())
    })
}

/// Runs flat value iteration. A run that stops at `max_iters` still
/// produces a solution; check it with [`bimdp_flat_converged`].
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bimdp_solve_vi(
    problem: *const BimdpProblem,
    tol: f64,
    max_iters: usize,
    out: *mut *mut BimdpFlatSolution,
) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rep = value_iteration(&p.0.flat, tol, max_iters).map_err(lift)?;
        store(out, BimdpFlatSolution(rep));
        Ok(())
    })
}

/// # Safety
/// `solution` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bimdp_flat_converged(solution: *const BimdpFlatSolution) -> bool {
    solution.as_ref().is_some_and(|s| s.0.converged)
}

/// Optimal value of `state`.
///
/// # Safety
/// All pointers must be live handles or readable/writable as their types.
#[no_mangle]
pub unsafe extern "C" fn bimdp_flat_value(
    problem: *const BimdpProblem,
    solution: *const BimdpFlatSolution,
    state: *const BimdpState,
    out: *mut f64,
) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let sol = solution.as_ref().ok_or_else(|| null("solution"))?;
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        let i = p.0.index(&RoverState::from(*s)).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = sol.0.value_function.get(i);
        Ok(())
    })
}

/// Discounted return of one seeded rollout of the flat policy.
///
/// # Safety
/// All pointers must be live handles or readable/writable as their types.
#[no_mangle]
pub unsafe extern "C" fn bimdp_flat_simulate(
    problem: *const BimdpProblem,
    solution: *const BimdpFlatSolution,
    state: *const BimdpState,
    seed: u64,
    out: *mut f64,
) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let sol = solution.as_ref().ok_or_else(|| null("solution"))?;
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        let i = p.0.index(&RoverState::from(*s)).map_err(lift)?;
        let tr = simulate(&p.0.flat, &sol.0.policy, i, seed, DEFAULT_STEP_CAP).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = tr.discounted_return;
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bimdp_flat_solution_free(solution: *mut BimdpFlatSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Solves the bi-level decomposition with every target of the problem and
/// the default heuristic.
///
/// # Safety
/// `problem` must be a live handle and `out` writable. The result does not
/// borrow `problem`.
#[no_mangle]
pub unsafe extern "C" fn bimdp_solve_bilevel(
    problem: *const BimdpProblem,
    tol: f64,
    max_iters: usize,
    out: *mut *mut BimdpBilevel,
) -> BimdpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let world = p.0.world.clone();
        let mission = MissionSpec::from_config(world.config());
        let bp = solve_bilevel(world, mission, HeuristicSpec::default(), SolverSettings { tol, max_iters }).map_err(lift)?;
        store(out, BimdpBilevel(bp));
        Ok(())
    })
}

/// Plans from `state`, or from the start state when `state` is null.
///
/// # Safety
/// `policy` must be a live handle, `state` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bimdp_bilevel_plan(
    policy: *const BimdpBilevel,
    state: *const BimdpState,
    seed: u64,
    out: *mut BimdpPlanSummary,
) -> BimdpStatus {
    guard(|| {
        let bp = &policy.as_ref().ok_or_else(|| null("policy"))?.0;
        let s0 = state.as_ref().map_or_else(|| bp.world().start_state(), |s| RoverState::from(*s));
        let res = plan(bp, &s0, seed).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = BimdpPlanSummary {
            discounted_return: res.discounted_return,
            steps: res.trace.len(),
            high_level_decisions: res.hl_decisions.len(),
            new_ll_solves: res.new_ll_solves,
        };
        Ok(())
    })
}

/// ASCII drawing of one plan from the start state. Free the string with
/// [`bimdp_string_free`].
///
/// # Safety
/// `policy` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bimdp_bilevel_render_ascii(policy: *const BimdpBilevel, seed: u64, out: *mut *mut c_char) -> BimdpStatus {
    guard(|| {
        let bp = &policy.as_ref().ok_or_else(|| null("policy"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let res = plan(bp, &bp.world().start_state(), seed).map_err(lift)?;
        let text = render(bp.world(), &res.trace, RenderFormat::Ascii, None).map_err(lift)?;
        *out = CString::new(text).expect("render output has no nul").into_raw();
        Ok(())
    })
}

/// Low-level policies solved so far.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bimdp_bilevel_ll_solve_count(policy: *const BimdpBilevel) -> usize {
    policy.as_ref().map_or(0, |p| p.0.ll_solve_count())
}

/// # Safety
/// `policy` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bimdp_bilevel_free(policy: *mut BimdpBilevel) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bimdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
