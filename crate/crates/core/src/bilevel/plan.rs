use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::low_level::{focal_complete, Focal, LowLevelPolicy};
use super::split::{flag_events, split, update_hl_state, FlagEvent};
use super::BiLevelPolicy;
use crate::error::{Error, Result};
use crate::mdp::rollout::sample_entry;
use crate::mdp::{StateIndex, TabularMdp, Trace, TraceStep, TransitionEntry};
use crate::rover::{RoverAction, RoverState, RoverWorld, Successor};

/// One high-level choice: the flat index of the state and the target id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HlDecision {
    pub hl_state: StateIndex,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub discounted_return: f64,
    pub hl_decisions: Vec<HlDecision>,
    /// Concatenated low-level steps in flat state indices.
    pub trace: Trace,
    /// Low-level solves this call triggered.
    pub new_ll_solves: usize,
}

struct Executor<'a> {
    world: &'a RoverWorld,
    rng: ChaCha8Rng,
    trace: Trace,
    state: RoverState,
    finished: bool,
    out: Vec<crate::rover::StepOutcome>,
}

impl Executor<'_> {
    fn index(&self, s: &RoverState) -> Result<StateIndex> {
        self.world.indexer().encode_or_err(s)
    }

    /// Follows `ll` from the current state until its focal target completes,
    /// the episode ends, or the low level stops. Returns the step count.
    fn segment(&mut self, ll: &LowLevelPolicy, events: &mut Vec<FlagEvent>) -> Result<usize> {
        let cap = self.world.horizon() as usize + 2;
        let mut steps = 0;
        while steps < cap {
            let li = ll.ll.index_of(&self.state);
            if ll.ll.mdp.is_terminal(li) {
                break;
            }
            let ai = ll.policy().action(li);
            let a = RoverAction::from_index(ai).ok_or_else(|| Error::contract(format!("action {ai} out of range")))?;
            self.out.clear();
            self.world.step_into(&self.state, a, &mut self.out);
            let entries = self
                .out
                .iter()
                .enumerate()
                .map(|(k, o)| TransitionEntry::new(k, o.probability, o.reward.total));
            let pick = sample_entry(&mut self.rng, entries)
                .ok_or_else(|| Error::contract(format!("low-level action {} is a dead end", a.name())))?;
            let outcome = self.out[pick.next];
            let from = self.index(&self.state)?;
            steps += 1;
            match outcome.next {
                Successor::End => {
                    self.trace.push(
                        TraceStep { state: from, action: ai, reward: outcome.reward.total },
                        self.world.indexer().sink(),
                    );
                    self.finished = true;
                    break;
                }
                Successor::State(n) => {
                    let to = self.index(&n)?;
                    self.trace.push(TraceStep { state: from, action: ai, reward: outcome.reward.total }, to);
                    flag_events(&self.state, &n, events);
                    self.state = n;
                    if self.world.is_terminal(&n) {
                        self.finished = true;
                        break;
                    }
                    if focal_complete(self.world, ll.ll.focal, &n) {
                        break;
                    }
                }
            }
        }
        Ok(steps)
    }
}

/// Executes the two-level policy from `s0` in the flat dynamics.
///
/// Each step draws one uniform sample in the same successor order as the
/// compiled flat MDP, so a flat rollout with the same seed sees the same
/// durations. The return discounts each reward by the global step index.
pub fn plan(bp: &BiLevelPolicy, s0: &RoverState, seed: u64) -> Result<PlanResult> {
    let world = bp.world();
    let start = world.indexer().encode_or_err(s0)?;
    let solves_before = bp.ll_solve_count();
    let mut ex = Executor {
        world,
        rng: ChaCha8Rng::seed_from_u64(seed),
        trace: Trace::empty(start, world.config().discount),
        state: *s0,
        finished: world.is_terminal(s0),
        out: Vec::with_capacity(3),
    };
    let mut decisions = Vec::new();
    let mut events = Vec::new();
    while !ex.finished {
        let s = ex.index(&ex.state)?;
        if bp.hl_mdp.is_terminal(s) {
            break;
        }
        let j = bp.hl_policy().action(s);
        // infeasible choices are encoded as self-loops
        if bp.hl_mdp.transitions(s, j).all(|e| e.next == s) {
            break;
        }
        let target = bp.spec().targets[j].id;
        decisions.push(HlDecision { hl_state: s, target });
        let ll = bp.cache().get(Focal::Target(target))?;
        let hl_state = ex.state;
        events.clear();
        let steps = ex.segment(&ll, &mut events)?;
        let lifted = update_hl_state(&hl_state, split(&ex.state).0, &events);
        if lifted != ex.state {
            return Err(Error::contract("tracking bits diverged from the recorded flag events"));
        }
        if steps == 0 {
            break;
        }
    }
    if !ex.finished {
        let idle = bp.cache().get(Focal::Idle)?;
        events.clear();
        ex.segment(&idle, &mut events)?;
    }
    let trace = ex.trace;
    Ok(PlanResult {
        discounted_return: trace.discounted_return,
        hl_decisions: decisions,
        trace,
        new_ll_solves: bp.ll_solve_count() - solves_before,
    })
}

/// Checks that every step of `trace` is a positive-probability flat
/// transition with the flat reward, and that the stored return matches.
pub fn check_feasible(flat: &TabularMdp, trace: &Trace) -> Result<()> {
    let states = trace.states();
    for (k, step) in trace.steps.iter().enumerate() {
        let next = states[k + 1];
        if step.state >= flat.state_count() || step.action >= flat.action_count() {
            return Err(Error::contract(format!("step {k} indexes outside the flat MDP")));
        }
        let ok = flat
            .transitions(step.state, step.action)
            .any(|e| e.next == next && e.probability > 0.0 && (e.reward - step.reward).abs() <= 1e-9);
        if !ok {
            return Err(Error::contract(format!(
                "step {k}: ({}, {}) -> {next} is not a flat transition with reward {}",
                step.state, step.action, step.reward
            )));
        }
    }
    if (trace.recompute_return() - trace.discounted_return).abs() > 1e-9 {
        return Err(Error::contract("trace return does not match its rewards"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bilevel::{solve_bilevel, HeuristicSpec, MissionSpec, SolverSettings};
    use crate::rover::{compile, Cell, GridConfig, StartState, Target};

    fn world() -> RoverWorld {
        RoverWorld::new(GridConfig {
            schema_version: 1,
            width: 5,
            height: 5,
            horizon: 12,
            discount: 0.95,
            simplified: false,
            start: StartState { x: 1, y: 1, t: 0 },
            targets: vec![
                Target::science(0, Cell::new(3, 4), 5.0, 50.0),
                Target::hibernation(1, Cell::new(5, 5), 10.0),
            ],
            shadows: Default::default(),
            activity_durations: [1.0 / 3.0; 3],
            end_penalty: -5.0,
        })
        .unwrap()
    }

    #[test]
    fn plan_is_feasible_and_cached() {
        let w = Arc::new(world());
        let flat = compile(&w).unwrap();
        let spec = MissionSpec::from_config(w.config());
        let bp = solve_bilevel(w.clone(), spec, HeuristicSpec::default(), SolverSettings::default()).unwrap();
        let s0 = w.start_state();
        let first = plan(&bp, &s0, 7).unwrap();
        check_feasible(&flat, &first.trace).unwrap();
        assert!(first.new_ll_solves >= 1);
        assert_eq!(first.hl_decisions[0].target, 0);
        let again = plan(&bp, &s0, 7).unwrap();
        assert_eq!(again.new_ll_solves, 0);
        assert_eq!(again, PlanResult { new_ll_solves: 0, ..first });
    }

    #[test]
    fn finished_mission_only_wraps_up() {
        let w = Arc::new(world());
        let bp = solve_bilevel(w.clone(), MissionSpec::from_config(w.config()), HeuristicSpec::default(), SolverSettings::default()).unwrap();
        let s0 = RoverState {
            measured: 1,
            drilled: 1,
            ..RoverState::at(1, 1, 2)
        };
        let r = plan(&bp, &s0, 1).unwrap();
        assert!(r.hl_decisions.len() <= 1);
        assert!(r.trace.steps.iter().all(|s| s.reward <= 10.0));
    }
}
