use std::time::Instant;

use super::{ActionIndex, Policy, SolveReport, StateIndex, TabularMdp, ValueFunction};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Expected one-step return of `a` in `s` under `v`. `None` for illegal actions.
pub fn q_value(mdp: &TabularMdp, v: &ValueFunction, s: StateIndex, a: ActionIndex) -> Option<f64> {
    mdp.lookahead(&v.values, s, a)
}

#[inline]
fn best_action(mdp: &TabularMdp, values: &[f64], s: StateIndex) -> Option<(f64, ActionIndex)> {
    let mut best: Option<(f64, ActionIndex)> = None;
    for a in 0..mdp.action_count() {
        if let Some(q) = mdp.lookahead(values, s, a) {
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|(b, _)| q > b) {
                best = Some((q, a));
            }
        }
    }
    best
}

/// Bellman optimality backup of a single non-terminal state.
pub fn bellman_backup(
    mdp: &TabularMdp,
    v: &ValueFunction,
    s: StateIndex,
) -> Result<(f64, ActionIndex)> {
    if s >= mdp.state_count() {
        return Err(Error::contract(format!("state {s} out of range")));
    }
    if mdp.is_terminal(s) {
        return Err(Error::contract(format!("bellman backup of terminal state {s}")));
    }
    best_action(mdp, &v.values, s)
        .ok_or_else(|| Error::contract(format!("state {s} has no legal action")))
}

/// Greedy policy with respect to `v`; ties go to the lowest action index.
/// Terminal states map to action 0.
pub fn extract_policy(mdp: &TabularMdp, v: &ValueFunction) -> Result<Policy> {
    if v.values.len() != mdp.state_count() {
        return Err(Error::contract(format!(
            "value function has {} entries, MDP has {} states",
            v.values.len(),
            mdp.state_count()
        )));
    }
    let actions = (0..mdp.state_count())
        .map(|s| {
            if mdp.is_terminal(s) {
                0
            } else {
                best_action(mdp, &v.values, s).map_or(0, |(_, a)| a)
            }
        })
        .collect();
    Ok(Policy { actions })
}

/// Value iteration from `V = 0`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<SolveReport> {
    value_iteration_from(mdp, &ValueFunction::zeros(mdp.state_count()), tol, max_iters)
}

/// Synchronous value iteration: every sweep reads only the previous iterate,
/// so the result does not depend on state visiting order.
///
/// Stops when the max-norm change drops below `tol` or after `max_iters`
/// sweeps. Terminal values are pinned to zero.
pub fn value_iteration_from(
    mdp: &TabularMdp,
    initial: &ValueFunction,
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::config("max_iters must be at least 1"));
    }
    if initial.values.len() != mdp.state_count() {
        return Err(Error::contract("initial value function has the wrong length"));
    }
    mdp.validate()?;

    let started = Instant::now();
    let n = mdp.state_count();
    let mut current = initial.values.clone();
    for s in mdp.terminal_states() {
        current[s] = 0.0;
    }
    let mut next = vec![0.0; n];

    let mut backups_per_sweep = 0u64;
    let mut edges_per_sweep = 0u64;
    for s in 0..n {
        if !mdp.is_terminal(s) {
            for a in 0..mdp.action_count() {
                let len = mdp.row(s, a).len() as u64;
                if len > 0 {
                    backups_per_sweep += 1;
                    edges_per_sweep += len;
                }
            }
        }
    }

    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let mut residual = 0.0f64;
        for s in 0..n {
            let value = if mdp.is_terminal(s) {
                0.0
            } else {
                best_action(mdp, &current, s).map_or(0.0, |(q, _)| q)
            };
            residual = residual.max((value - current[s]).abs());
            next[s] = value;
        }
        std::mem::swap(&mut current, &mut next);
        residuals.push(residual);
        if residual < tol {
            converged = true;
            break;
        }
    }

    let value_function = ValueFunction { values: current };
    let policy = extract_policy(mdp, &value_function)?;
    let iterations = residuals.len();
    Ok(SolveReport {
        value_function,
        policy,
        iterations,
        bellman_residual: *residuals.last().unwrap_or(&0.0),
        converged,
        wall_time: started.elapsed(),
        residuals,
        backups_per_sweep,
        edge_operations: edges_per_sweep * iterations as u64,
    })
}

/// Iterative evaluation of a fixed policy, stopping at max-norm change < `tol`.
pub fn evaluate_policy_exact(
    mdp: &TabularMdp,
    policy: &Policy,
    tol: f64,
    max_iters: usize,
) -> Result<ValueFunction> {
    if policy.actions.len() != mdp.state_count() {
        return Err(Error::contract("policy length does not match the MDP"));
    }
    let n = mdp.state_count();
    let mut current = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        let mut residual = 0.0f64;
        for s in 0..n {
            let value = if mdp.is_terminal(s) {
                0.0
            } else {
                mdp.lookahead(&current, s, policy.actions[s]).ok_or_else(|| {
                    Error::contract(format!(
                        "policy action {} has no transitions in state {s}",
                        policy.actions[s]
                    ))
                })?
            };
            residual = residual.max((value - current[s]).abs());
            next[s] = value;
        }
        std::mem::swap(&mut current, &mut next);
        if residual < tol {
            break;
        }
    }
    Ok(ValueFunction { values: current })
}
