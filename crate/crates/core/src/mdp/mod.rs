//! Finite Markov decision processes stored as sparse transition tables.
//!
//! A [`TabularMdp`] keeps one compressed row per `(state, action)` pair. Each
//! stored edge points to a successor and to an interned outcome record
//! `(probability, reward, steps)`. Environments with a handful of distinct
//! rewards (grid worlds) therefore pay eight bytes per edge.
//!
//! The `steps` field makes the table semi-Markov: a successor reached after
//! `k` steps is discounted by `γ^k`. Everything built from primitive actions
//! uses `steps = 1`.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod oracle;
pub(crate) mod rollout;
mod solve;

pub use oracle::{brute_force_return, BRUTE_FORCE_NODE_BUDGET};
pub use rollout::{evaluate_policy, simulate, summarize, Trace, TraceStep, DEFAULT_STEP_CAP};
pub use solve::{
    bellman_backup, evaluate_policy_exact, extract_policy, q_value, value_iteration,
    value_iteration_from, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

pub type StateIndex = usize;
pub type ActionIndex = usize;

/// Probabilities of one `(state, action)` row must sum to one within this.
pub const PROBABILITY_TOL: f64 = 1e-9;

/// One successor of a `(state, action)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub next: StateIndex,
    pub probability: f64,
    pub reward: f64,
    /// Elapsed decision steps; the successor value is discounted by `γ^steps`.
    #[serde(default = "one")]
    pub steps: u32,
}

fn one() -> u32 {
    1
}

impl TransitionEntry {
    pub fn new(next: StateIndex, probability: f64, reward: f64) -> Self {
        TransitionEntry {
            next,
            probability,
            reward,
            steps: 1,
        }
    }

    pub fn with_steps(mut self, steps: u32) -> Self {
        self.steps = steps;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    next: u32,
    outcome: u32,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    probability: f64,
    reward: f64,
    steps: u32,
    /// `γ^steps`, cached.
    discount: f64,
}

#[derive(Debug, Clone)]
pub struct TabularMdp {
    state_count: usize,
    action_count: usize,
    discount: f64,
    offsets: Vec<u32>,
    edges: Vec<Edge>,
    outcomes: Vec<Outcome>,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_terminal(&self, s: StateIndex) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = StateIndex> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter_map(|(s, &t)| t.then_some(s))
    }

    #[inline]
    fn row(&self, s: StateIndex, a: ActionIndex) -> std::ops::Range<usize> {
        let slot = s * self.action_count + a;
        self.offsets[slot] as usize..self.offsets[slot + 1] as usize
    }

    /// True when `a` has at least one stored successor in `s`.
    pub fn has_action(&self, s: StateIndex, a: ActionIndex) -> bool {
        !self.row(s, a).is_empty()
    }

    pub fn legal_actions(&self, s: StateIndex) -> impl Iterator<Item = ActionIndex> + '_ {
        (0..self.action_count).filter(move |&a| self.has_action(s, a))
    }

    pub fn transitions(
        &self,
        s: StateIndex,
        a: ActionIndex,
    ) -> impl ExactSizeIterator<Item = TransitionEntry> + '_ {
        self.edges[self.row(s, a)].iter().map(move |e| {
            let o = self.outcomes[e.outcome as usize];
            TransitionEntry {
                next: e.next as usize,
                probability: o.probability,
                reward: o.reward,
                steps: o.steps,
            }
        })
    }

    /// One-step lookahead `Σ p (r + γ^k v[s'])` without bounds checks on `a`.
    #[inline]
    pub(crate) fn lookahead(&self, values: &[f64], s: StateIndex, a: ActionIndex) -> Option<f64> {
        let row = self.row(s, a);
        if row.is_empty() {
            return None;
        }
        let mut q = 0.0;
        for e in &self.edges[row] {
            let o = &self.outcomes[e.outcome as usize];
            q += o.probability * (o.reward + o.discount * values[e.next as usize]);
        }
        Some(q)
    }

    /// Minimum and maximum stored reward, `None` when the table has no edges.
    pub fn reward_range(&self) -> Option<(f64, f64)> {
        self.outcomes.iter().fold(None, |acc, o| match acc {
            None => Some((o.reward, o.reward)),
            Some((lo, hi)) => Some((lo.min(o.reward), hi.max(o.reward))),
        })
    }

    /// Returns a copy with every reward multiplied by `factor`.
    pub fn scale_rewards(&self, factor: f64) -> TabularMdp {
        let mut out = self.clone();
        for o in &mut out.outcomes {
            o.reward *= factor;
        }
        out
    }

    /// Checks every structural invariant of the table.
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::config(format!(
                "discount {} outside (0, 1]",
                self.discount
            )));
        }
        for s in 0..self.state_count {
            let mut any_action = false;
            for a in 0..self.action_count {
                let row = self.row(s, a);
                if row.is_empty() {
                    continue;
                }
                any_action = true;
                let malformed = |reason: String| Error::MalformedTransitions {
                    state: s,
                    action: a,
                    reason,
                };
                if self.terminal[s] {
                    return Err(malformed("terminal state has outgoing transitions".into()));
                }
                let mut total = 0.0;
                for e in &self.edges[row] {
                    let o = &self.outcomes[e.outcome as usize];
                    if e.next as usize >= self.state_count {
                        return Err(malformed(format!("successor {} out of range", e.next)));
                    }
                    if !(o.probability > 0.0 && o.probability <= 1.0 + PROBABILITY_TOL) {
                        return Err(malformed(format!("probability {} not in (0, 1]", o.probability)));
                    }
                    if !o.reward.is_finite() {
                        return Err(malformed(format!("non-finite reward {}", o.reward)));
                    }
                    total += o.probability;
                }
                if (total - 1.0).abs() > PROBABILITY_TOL {
                    return Err(malformed(format!("probabilities sum to {total}")));
                }
            }
            if !any_action && !self.terminal[s] {
                return Err(Error::config(format!(
                    "non-terminal state {s} has no action with transitions"
                )));
            }
        }
        Ok(())
    }
}

/// Incremental constructor for [`TabularMdp`].
///
/// Rows must be supplied in increasing `(state, action)` order; skipped rows
/// are stored empty (the action is illegal in that state).
#[derive(Debug)]
pub struct MdpBuilder {
    state_count: usize,
    action_count: usize,
    discount: f64,
    offsets: Vec<u32>,
    edges: Vec<Edge>,
    outcomes: Vec<Outcome>,
    interned: HashMap<(u64, u64, u32), u32>,
    terminal: Vec<bool>,
}

impl MdpBuilder {
    pub fn new(state_count: usize, action_count: usize, discount: f64) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::config("action_count must be at least 1"));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::config(format!("discount {discount} outside (0, 1]")));
        }
        let slots = state_count
            .checked_mul(action_count)
            .filter(|&n| n < u32::MAX as usize)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "{state_count} states x {action_count} actions exceeds the table limit"
                ))
            })?;
        let mut offsets = Vec::with_capacity(slots + 1);
        offsets.push(0);
        Ok(MdpBuilder {
            state_count,
            action_count,
            discount,
            offsets,
            edges: Vec::new(),
            outcomes: Vec::new(),
            interned: HashMap::new(),
            terminal: vec![false; state_count],
        })
    }

    pub fn reserve_edges(&mut self, additional: usize) {
        self.edges.reserve(additional);
    }

    fn fill_to(&mut self, slot: usize) {
        let end = self.edges.len() as u32;
        while self.offsets.len() <= slot {
            self.offsets.push(end);
        }
    }

    /// Stores the successor list of `(s, a)`. Zero-probability entries are dropped.
    pub fn set_transitions<I>(&mut self, s: StateIndex, a: ActionIndex, entries: I) -> Result<()>
    where
        I: IntoIterator<Item = TransitionEntry>,
    {
        if s >= self.state_count || a >= self.action_count {
            return Err(Error::contract(format!("row ({s}, {a}) out of range")));
        }
        let slot = s * self.action_count + a;
        if slot + 1 < self.offsets.len() {
            return Err(Error::contract(format!(
                "row ({s}, {a}) supplied out of order"
            )));
        }
        self.fill_to(slot);
        for e in entries {
            if e.probability == 0.0 {
                continue;
            }
            let key = (e.probability.to_bits(), e.reward.to_bits(), e.steps);
            let next_id = self.outcomes.len() as u32;
            let id = *self.interned.entry(key).or_insert(next_id);
            if id == next_id {
                self.outcomes.push(Outcome {
                    probability: e.probability,
                    reward: e.reward,
                    steps: e.steps,
                    discount: self.discount.powi(e.steps as i32),
                });
            }
            let next = u32::try_from(e.next)
                .map_err(|_| Error::Resource(format!("successor index {} too large", e.next)))?;
            self.edges.push(Edge { next, outcome: id });
        }
        if self.edges.len() >= u32::MAX as usize {
            return Err(Error::Resource("edge count exceeds the table limit".into()));
        }
        self.offsets.push(self.edges.len() as u32);
        Ok(())
    }

    pub fn mark_terminal(&mut self, s: StateIndex) {
        self.terminal[s] = true;
    }

    /// Finishes construction and validates the result.
    pub fn build(self) -> Result<TabularMdp> {
        let mdp = self.build_unchecked();
        mdp.validate()?;
        Ok(mdp)
    }

    /// Finishes construction without validation. Solvers validate on entry.
    pub fn build_unchecked(mut self) -> TabularMdp {
        self.fill_to(self.state_count * self.action_count);
        // shrinking copies the table; only worth it for large slack
        if self.edges.capacity() > self.edges.len() + self.edges.len() / 4 {
            self.edges.shrink_to_fit();
        }
        TabularMdp {
            state_count: self.state_count,
            action_count: self.action_count,
            discount: self.discount,
            offsets: self.offsets,
            edges: self.edges,
            outcomes: self.outcomes,
            terminal: self.terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        ValueFunction {
            values: vec![0.0; n],
        }
    }

    pub fn get(&self, s: StateIndex) -> f64 {
        self.values[s]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<ActionIndex>,
}

impl Policy {
    pub fn action(&self, s: StateIndex) -> ActionIndex {
        self.actions[s]
    }
}

/// Outcome of one value-iteration run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub value_function: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    pub bellman_residual: f64,
    pub converged: bool,
    pub wall_time: Duration,
    /// Max-norm change after each sweep.
    pub residuals: Vec<f64>,
    /// `(state, action)` lookaheads evaluated in one full sweep.
    pub backups_per_sweep: u64,
    /// Stored edges touched over the whole run.
    pub edge_operations: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_fills_skipped_rows_empty() {
        let mut b = MdpBuilder::new(3, 2, 0.9).unwrap();
        b.set_transitions(0, 1, [TransitionEntry::new(2, 1.0, 1.0)]).unwrap();
        b.set_transitions(1, 0, [TransitionEntry::new(2, 1.0, 0.0)]).unwrap();
        b.mark_terminal(2);
        let mdp = b.build().unwrap();
        assert!(!mdp.has_action(0, 0));
        assert!(mdp.has_action(0, 1));
        assert_eq!(mdp.legal_actions(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(mdp.terminal_states().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn out_of_order_rows_are_rejected() {
        let mut b = MdpBuilder::new(2, 2, 0.9).unwrap();
        b.set_transitions(1, 0, [TransitionEntry::new(0, 1.0, 0.0)]).unwrap();
        assert!(matches!(
            b.set_transitions(0, 1, [TransitionEntry::new(0, 1.0, 0.0)]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn outcomes_are_interned() {
        let mut b = MdpBuilder::new(4, 1, 0.9).unwrap();
        for s in 0..3 {
            b.set_transitions(s, 0, [TransitionEntry::new(3, 1.0, -1.0)]).unwrap();
        }
        b.mark_terminal(3);
        let mdp = b.build().unwrap();
        assert_eq!(mdp.outcomes.len(), 1);
        assert_eq!(mdp.edge_count(), 3);
    }

    #[test]
    fn validation_names_offending_row() {
        let mut b = MdpBuilder::new(2, 2, 0.9).unwrap();
        b.set_transitions(
            0,
            1,
            [TransitionEntry::new(1, 0.5, 0.0), TransitionEntry::new(0, 0.4, 0.0)],
        )
        .unwrap();
        b.mark_terminal(1);
        match b.build() {
            Err(Error::MalformedTransitions { state, action, .. }) => {
                assert_eq!((state, action), (0, 1));
            }
            other => panic!("expected malformed transitions, got {other:?}"),
        }
    }

    #[test]
    fn terminal_with_transitions_is_malformed() {
        let mut b = MdpBuilder::new(1, 1, 0.9).unwrap();
        b.set_transitions(0, 0, [TransitionEntry::new(0, 1.0, 0.0)]).unwrap();
        b.mark_terminal(0);
        assert!(b.build().is_err());
    }

    #[test]
    fn dead_end_state_is_rejected() {
        let mut b = MdpBuilder::new(2, 1, 0.9).unwrap();
        b.mark_terminal(1);
        assert!(matches!(b.build(), Err(Error::Config(_))));
    }
}
