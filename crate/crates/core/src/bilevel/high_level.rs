use super::heuristic::{heuristic_transition, ExactHeuristic, HeuristicMode, HeuristicSpec, HeuristicTransition};
use super::low_level::LowLevelCache;
use super::MissionSpec;
use crate::error::Result;
use crate::mdp::{MdpBuilder, TabularMdp, TransitionEntry};
use crate::rover::{RoverState, RoverWorld};

/// Heuristic successor estimates for every mission target.
pub(crate) enum Estimator<'a> {
    Coarse(HeuristicSpec),
    Exact(ExactHeuristic<'a>),
}

impl<'a> Estimator<'a> {
    pub(crate) fn new(world: &RoverWorld, h: &HeuristicSpec, cache: &'a LowLevelCache) -> Self {
        match h.mode {
            HeuristicMode::Exact if world.config().deterministic_durations() => {
                Estimator::Exact(ExactHeuristic::new(cache))
            }
            HeuristicMode::Exact => {
                log::warn!("exact heuristic needs deterministic durations; using the coarse one");
                Estimator::Coarse(*h)
            }
            HeuristicMode::Coarse => Estimator::Coarse(*h),
        }
    }

    pub(crate) fn estimate(
        &self,
        world: &RoverWorld,
        spec: &MissionSpec,
        s: &RoverState,
        out: &mut Vec<HeuristicTransition>,
    ) -> Result<()> {
        out.clear();
        for target in &spec.targets {
            out.push(match self {
                Estimator::Coarse(h) => heuristic_transition(world, s, target, h),
                Estimator::Exact(e) => e.transition(s, target)?,
            });
        }
        Ok(())
    }
}

/// True when the high level has nothing left to decide in `s`.
pub(crate) fn hl_terminal(world: &RoverWorld, spec: &MissionSpec, s: &RoverState, estimates: &[HeuristicTransition]) -> bool {
    let done = world.completed(s);
    world.is_terminal(s)
        || spec.targets.iter().all(|t| done & (1 << t.id) != 0)
        || estimates.iter().all(|e| !e.feasible)
}

/// Target-selection MDP over the flat state enumeration.
///
/// Action `j` jumps to the heuristic successor for `spec.targets[j]`,
/// discounted by its duration; infeasible choices are zero-reward
/// self-loops.
pub fn build_high_level(
    world: &RoverWorld,
    spec: &MissionSpec,
    h: &HeuristicSpec,
    cache: &LowLevelCache,
) -> Result<TabularMdp> {
    spec.validate(world.config())?;
    h.validate()?;
    let estimator = Estimator::new(world, h, cache);
    let ix = world.indexer();
    let mut b = MdpBuilder::new(ix.state_count(), spec.targets.len(), world.config().discount)?;
    b.reserve_edges(ix.state_count() * spec.targets.len());
    let mut estimates = Vec::with_capacity(spec.targets.len());
    for i in 0..ix.rover_state_count() {
        let s = ix.decode(i).expect("index in range");
        if world.is_terminal(&s) {
            b.mark_terminal(i);
            continue;
        }
        estimator.estimate(world, spec, &s, &mut estimates)?;
        if hl_terminal(world, spec, &s, &estimates) {
            b.mark_terminal(i);
            continue;
        }
        for (j, e) in estimates.iter().enumerate() {
            let entry = if e.feasible {
                TransitionEntry::new(ix.encode_or_err(&e.state)?, 1.0, e.estimated_reward)
                    .with_steps(e.duration.max(1) as u32)
            } else {
                TransitionEntry::new(i, 1.0, 0.0)
            };
            b.set_transitions(i, j, [entry])?;
        }
    }
    b.mark_terminal(ix.sink());
    b.build()
}
