use super::{StateIndex, TabularMdp};
use crate::error::{Error, Result};

/// Largest number of expanded nodes [`brute_force_return`] will visit.
pub const BRUTE_FORCE_NODE_BUDGET: u64 = 10_000_000;

/// Exact optimal expected discounted return over every action sequence of at
/// most `depth` decisions, by exhaustive expectimax.
///
/// Shares no code with value iteration; tests use it as the reference.
pub fn brute_force_return(mdp: &TabularMdp, s0: StateIndex, depth: usize) -> Result<f64> {
    if s0 >= mdp.state_count() {
        return Err(Error::contract(format!("start state {s0} out of range")));
    }
    let mut expanded = 0u64;
    expectimax(mdp, s0, depth, &mut expanded)
}

fn expectimax(mdp: &TabularMdp, s: StateIndex, depth: usize, expanded: &mut u64) -> Result<f64> {
    if depth == 0 || mdp.is_terminal(s) {
        return Ok(0.0);
    }
    *expanded += 1;
    if *expanded > BRUTE_FORCE_NODE_BUDGET {
        return Err(Error::Resource(format!(
            "brute force exceeded {BRUTE_FORCE_NODE_BUDGET} expanded nodes"
        )));
    }
    let gamma = mdp.discount();
    let mut best = f64::NEG_INFINITY;
    for a in 0..mdp.action_count() {
        let entries: Vec<_> = mdp.transitions(s, a).collect();
        if entries.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for e in entries {
            // a k-step outcome consumes k decisions of the horizon
            let remaining = depth.saturating_sub(e.steps as usize);
            let future = expectimax(mdp, e.next, remaining, expanded)?;
            total += e.probability * (e.reward + gamma.powi(e.steps as i32) * future);
        }
        best = best.max(total);
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::contract(format!("state {s} has no legal action")));
    }
    Ok(best)
}
