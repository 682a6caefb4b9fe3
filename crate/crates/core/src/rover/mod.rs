//! The rover grid world: a time-indexed grid with science targets,
//! hibernation areas, static obstacles and moving shadows.

pub mod config;
mod dynamics;
mod render;
mod state;

pub use config::{
    Cell, GridConfig, ShadowOverride, ShadowSchedule, ShadowSweep, StartState, Target,
    MAX_TARGETS, SCHEMA_VERSION,
};
pub use dynamics::{RewardParts, RoverWorld, StepOutcome, Successor};
pub use render::{render, RenderFormat};
pub use state::{RoverAction, RoverState, StateIndexer, Tracking};

use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, TabularMdp, TransitionEntry};

/// Upper bound on enumerated states; larger tables do not fit in a few GB.
pub const MAX_ENUMERATED_STATES: usize = 30_000_000;

/// Builds the flat MDP of a world. State indices follow its [`StateIndexer`].
pub fn compile(world: &RoverWorld) -> Result<TabularMdp> {
    let ix = world.indexer();
    let n = ix.state_count();
    if n > MAX_ENUMERATED_STATES {
        return Err(Error::Resource(format!(
            "{n} states exceeds the enumeration limit of {MAX_ENUMERATED_STATES}"
        )));
    }
    let actions = world.actions();
    let mut b = MdpBuilder::new(n, actions.len(), world.config().discount)?;
    let per_state = if world.simplified() { 4 } else { 4 + 2 * world.durations().len() };
    b.reserve_edges(ix.rover_state_count() * per_state);
    let sink = ix.sink();
    let mut out = Vec::with_capacity(3);
    for i in 0..ix.rover_state_count() {
        let s = ix.decode(i).expect("index in range");
        if world.is_terminal(&s) {
            b.mark_terminal(i);
            continue;
        }
        for &a in actions {
            out.clear();
            world.step_into(&s, a, &mut out);
            let entries = out.iter().map(|o| {
                let next = match o.next {
                    Successor::State(n) => ix.encode(&n).expect("successor is enumerated"),
                    Successor::End => sink,
                };
                TransitionEntry::new(next, o.probability, o.reward.total)
            });
            b.set_transitions(i, a.index(), entries)?;
        }
    }
    b.mark_terminal(sink);
    b.build()
}

/// Validates `cfg` and returns the compiled MDP with its index map.
pub fn enumerate(cfg: &GridConfig) -> Result<(TabularMdp, StateIndexer)> {
    let world = RoverWorld::new(cfg.clone())?;
    let mdp = compile(&world)?;
    Ok((mdp, world.indexer().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(width: u16, height: u16, horizon: u16, targets: Vec<Target>) -> GridConfig {
        GridConfig {
            schema_version: 1,
            width,
            height,
            horizon,
            discount: 0.95,
            simplified: true,
            start: StartState { x: 1, y: 1, t: 0 },
            targets,
            shadows: Default::default(),
            activity_durations: [1.0, 0.0, 0.0],
            end_penalty: -5.0,
        }
    }

    #[test]
    fn empty_two_by_two_counts() {
        let (mdp, ix) = enumerate(&cfg(2, 2, 1, vec![])).unwrap();
        assert_eq!(mdp.state_count(), 2 * 2 * 2 + 1);
        assert_eq!(mdp.terminal_states().collect::<Vec<_>>(), vec![ix.sink()]);
    }

    #[test]
    fn exp1_sized_count() {
        let targets = (0..3)
            .map(|i| Target::science(i, Cell::new(2 * i as u16 + 2, 5), 5.0, 50.0))
            .collect();
        let (mdp, _) = enumerate(&cfg(10, 10, 20, targets)).unwrap();
        assert_eq!(mdp.state_count(), 10 * 10 * 21 * 8 + 1);
    }

    #[test]
    fn hibernation_cells_are_terminal_inside_window() {
        let mut hib = Target::hibernation(0, Cell::new(2, 2), 10.0);
        hib.window = Some([3, 4]);
        let (mdp, ix) = enumerate(&cfg(2, 2, 4, vec![hib])).unwrap();
        for i in 0..ix.rover_state_count() {
            let s = ix.decode(i).unwrap();
            let expect = s.cell() == Cell::new(2, 2) && (3..=4).contains(&s.t);
            assert_eq!(mdp.is_terminal(i), expect, "{s:?}");
        }
    }

    #[test]
    fn rejects_oversized_instances() {
        let targets = (0..10)
            .map(|i| Target::science(i, Cell::new(i as u16 + 1, 1), 5.0, 50.0))
            .collect();
        let mut c = cfg(50, 50, 100, targets);
        c.simplified = false;
        assert!(matches!(enumerate(&c), Err(Error::Resource(_))));
    }
}
