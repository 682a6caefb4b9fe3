use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionIndex, Policy, StateIndex, TabularMdp, TransitionEntry};
use crate::error::{Error, Result};

/// Step cap used by [`evaluate_policy`].
pub const DEFAULT_STEP_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: StateIndex,
    pub action: ActionIndex,
    pub reward: f64,
}

/// Time-ordered execution history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    /// State reached after the last step (the start state for an empty trace).
    pub final_state: StateIndex,
    pub discount: f64,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
}

impl Trace {
    pub fn empty(start: StateIndex, discount: f64) -> Self {
        Trace {
            steps: Vec::new(),
            final_state: start,
            discount,
            discounted_return: 0.0,
            undiscounted_return: 0.0,
        }
    }

    /// Appends a step, discounting its reward by `γ^k` for step index `k`.
    pub fn push(&mut self, step: TraceStep, next: StateIndex) {
        let weight = self.discount.powi(self.steps.len() as i32);
        self.discounted_return += weight * step.reward;
        self.undiscounted_return += step.reward;
        self.steps.push(step);
        self.final_state = next;
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Σ γ^k r_k` recomputed from the step list.
    pub fn recompute_return(&self) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for step in &self.steps {
            total += weight * step.reward;
            weight *= self.discount;
        }
        total
    }

    /// Visited states in order, including the final one.
    pub fn states(&self) -> Vec<StateIndex> {
        let mut out: Vec<_> = self.steps.iter().map(|s| s.state).collect();
        out.push(self.final_state);
        out
    }
}

/// Draws one successor; consumes exactly one uniform sample.
pub(crate) fn sample_entry<R: Rng>(
    rng: &mut R,
    entries: impl ExactSizeIterator<Item = TransitionEntry>,
) -> Option<TransitionEntry> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for e in entries {
        acc += e.probability;
        last = Some(e);
        if u < acc {
            return last;
        }
    }
    last
}

/// Executes `policy` from `s0` until a terminal state or `step_cap` steps.
pub fn simulate(
    mdp: &TabularMdp,
    policy: &Policy,
    s0: StateIndex,
    seed: u64,
    step_cap: usize,
) -> Result<Trace> {
    if s0 >= mdp.state_count() {
        return Err(Error::contract(format!("start state {s0} out of range")));
    }
    if step_cap == 0 {
        return Err(Error::config("step_cap must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::empty(s0, mdp.discount());
    let mut s = s0;
    while !mdp.is_terminal(s) && trace.len() < step_cap {
        let a = policy.actions[s];
        let entry = sample_entry(&mut rng, mdp.transitions(s, a)).ok_or_else(|| {
            Error::contract(format!("policy action {a} has no transitions in state {s}"))
        })?;
        trace.push(
            TraceStep {
                state: s,
                action: a,
                reward: entry.reward,
            },
            entry.next,
        );
        s = entry.next;
    }
    Ok(trace)
}

/// Mean and standard error of a sample; standard error is 0 for `n < 2`.
pub fn summarize(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Monte Carlo estimate of the discounted return from `s0`, using seeds
/// `base_seed .. base_seed + n_rollouts`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &Policy,
    s0: StateIndex,
    n_rollouts: usize,
    base_seed: u64,
) -> Result<(f64, f64)> {
    if n_rollouts == 0 {
        return Err(Error::config("n_rollouts must be at least 1"));
    }
    let returns = (0..n_rollouts as u64)
        .map(|k| {
            simulate(mdp, policy, s0, base_seed.wrapping_add(k), DEFAULT_STEP_CAP)
                .map(|t| t.discounted_return)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn coin_chain() -> TabularMdp {
        // 0 --(p=.5: r=1 / p=.5: r=3)--> 1 --> 2 (terminal)
        let mut b = MdpBuilder::new(3, 1, 0.9).unwrap();
        b.set_transitions(
            0,
            0,
            [TransitionEntry::new(1, 0.5, 1.0), TransitionEntry::new(1, 0.5, 3.0)],
        )
        .unwrap();
        b.set_transitions(1, 0, [TransitionEntry::new(2, 1.0, 2.0)]).unwrap();
        b.mark_terminal(2);
        b.build().unwrap()
    }

    #[test]
    fn terminal_start_gives_empty_trace() {
        let mdp = coin_chain();
        let t = simulate(&mdp, &Policy { actions: vec![0; 3] }, 2, 1, 10).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.discounted_return, 0.0);
    }

    #[test]
    fn same_seed_same_trace() {
        let mdp = coin_chain();
        let p = Policy { actions: vec![0; 3] };
        let a = simulate(&mdp, &p, 0, 99, 10).unwrap();
        let b = simulate(&mdp, &p, 0, 99, 10).unwrap();
        assert_eq!(a, b);
        assert!((a.discounted_return - a.recompute_return()).abs() < 1e-12);
    }

    #[test]
    fn step_cap_truncates() {
        let mut b = MdpBuilder::new(1, 1, 0.9).unwrap();
        b.set_transitions(0, 0, [TransitionEntry::new(0, 1.0, 1.0)]).unwrap();
        let mdp = b.build().unwrap();
        let t = simulate(&mdp, &Policy { actions: vec![0] }, 0, 0, 3).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t.discounted_return - 2.71).abs() < 1e-12);
    }

    #[test]
    fn single_rollout_has_zero_standard_error() {
        let mdp = coin_chain();
        let p = Policy { actions: vec![0; 3] };
        let (mean, se) = evaluate_policy(&mdp, &p, 0, 1, 5).unwrap();
        let t = simulate(&mdp, &p, 0, 5, DEFAULT_STEP_CAP).unwrap();
        assert_eq!(mean, t.discounted_return);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn illegal_policy_action_is_a_contract_violation() {
        let mut b = MdpBuilder::new(2, 2, 0.9).unwrap();
        b.set_transitions(0, 0, [TransitionEntry::new(1, 1.0, 0.0)]).unwrap();
        b.mark_terminal(1);
        let mdp = b.build().unwrap();
        let err = simulate(&mdp, &Policy { actions: vec![1, 0] }, 0, 0, 10).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
