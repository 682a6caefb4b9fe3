use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::split::subset_of;
use super::{MissionSpec, SolverSettings};
use crate::error::Result;
use crate::mdp::{value_iteration, MdpBuilder, Policy, SolveReport, StateIndex, TabularMdp, TransitionEntry};
use crate::rover::{RoverState, RoverWorld, Successor, Tracking};

/// What a low-level problem is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Focal {
    /// Reach and complete one target (config id).
    Target(usize),
    /// Obstacle rewards only; used once no target is left.
    Idle,
}

impl Focal {
    pub fn target(self) -> Option<usize> {
        match self {
            Focal::Target(i) => Some(i),
            Focal::Idle => None,
        }
    }
}

/// Navigation MDP over telemetry, plus a measured bit for a full-mode
/// science target. Index `telemetry_state_count()` is an absorbing exit
/// reached on completion, at a hibernation area or past the horizon.
#[derive(Debug, Clone)]
pub struct LowLevelMdp {
    pub focal: Focal,
    pub mdp: TabularMdp,
    shape: Shape,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    focal: Focal,
    with_bit: bool,
    height: usize,
    horizon: usize,
    background: Tracking,
}

impl Shape {
    fn slot(&self, x: u16, y: u16, t: u16, m: bool) -> StateIndex {
        let timed = ((x as usize - 1) * self.height + (y as usize - 1)) * (self.horizon + 1) + t as usize;
        if self.with_bit {
            timed * 2 + m as usize
        } else {
            timed
        }
    }

    fn index_of(&self, s: &RoverState) -> StateIndex {
        let p = subset_of(s, self.focal.target());
        let tel = p.telemetry;
        self.slot(tel.x, tel.y, tel.t, p.measured_current)
    }

    fn synthetic(&self, x: u16, y: u16, t: u16, m: bool) -> RoverState {
        let mut tr = self.background;
        if let (Some(i), true) = (self.focal.target(), m) {
            tr.measured |= 1 << i;
        }
        RoverState::at(x, y, t).with_tracking(tr)
    }
}

impl LowLevelMdp {
    pub fn telemetry_state_count(&self) -> usize {
        self.mdp.state_count() - 1
    }

    pub fn exit(&self) -> StateIndex {
        self.telemetry_state_count()
    }

    /// Low-level index of the projection of `s`.
    pub fn index_of(&self, s: &RoverState) -> StateIndex {
        self.shape.index_of(s)
    }

    /// Full state the low level reasons about: every non-focal target
    /// counts as done so that only the focal one can pay.
    pub fn synthetic(&self, x: u16, y: u16, t: u16, m: bool) -> RoverState {
        self.shape.synthetic(x, y, t, m)
    }
}

/// True once the focal target's final bit is set.
pub fn focal_complete(world: &RoverWorld, focal: Focal, s: &RoverState) -> bool {
    match focal {
        Focal::Target(i) => world.completed(s) & (1 << i) != 0,
        Focal::Idle => false,
    }
}

/// Builds the low-level MDP for `focal`.
///
/// Dynamics are the flat ones evaluated on [`LowLevelMdp::synthetic`] states,
/// so the reward is the obstacle part plus the focal target's own payout.
pub fn build_low_level(world: &RoverWorld, focal: Focal) -> Result<LowLevelMdp> {
    let cfg = world.config();
    let mut background = Tracking::default();
    for t in &cfg.targets {
        if Some(t.id) == focal.target() {
            continue;
        }
        let bit = 1u32 << t.id;
        if cfg.simplified {
            background.visited |= bit;
        } else {
            background.measured |= bit;
            background.drilled |= bit;
        }
    }
    let with_bit = !cfg.simplified
        && focal
            .target()
            .is_some_and(|i| !cfg.targets[i].is_hibernation);
    let telemetry = cfg.width as usize * cfg.height as usize * (cfg.horizon as usize + 1) * (1 + with_bit as usize);
    let ll = Shape {
        focal,
        with_bit,
        height: cfg.height as usize,
        horizon: cfg.horizon as usize,
        background,
    };

    let actions = world.actions();
    let exit = telemetry;
    let mut b = MdpBuilder::new(telemetry + 1, actions.len(), cfg.discount)?;
    let mut out = Vec::with_capacity(3);
    for x in 1..=cfg.width {
        for y in 1..=cfg.height {
            for t in 0..=cfg.horizon {
                for m in [false, true].into_iter().take(1 + with_bit as usize) {
                    let idx = ll.slot(x, y, t, m);
                    let s = ll.synthetic(x, y, t, m);
                    if world.is_terminal(&s) {
                        b.mark_terminal(idx);
                        continue;
                    }
                    for &a in actions {
                        out.clear();
                        world.step_into(&s, a, &mut out);
                        let entries = out.iter().map(|o| {
                            let next = match o.next {
                                Successor::End => exit,
                                Successor::State(n)
                                    if world.is_terminal(&n) || focal_complete(world, focal, &n) =>
                                {
                                    exit
                                }
                                Successor::State(n) => ll.index_of(&n),
                            };
                            TransitionEntry::new(next, o.probability, o.reward.total)
                        });
                        b.set_transitions(idx, a.index(), entries)?;
                    }
                }
            }
        }
    }
    b.mark_terminal(exit);
    Ok(LowLevelMdp {
        focal,
        mdp: b.build()?,
        shape: ll,
    })
}

/// A solved low-level problem.
#[derive(Debug)]
pub struct LowLevelPolicy {
    pub ll: LowLevelMdp,
    pub report: SolveReport,
}

impl LowLevelPolicy {
    pub fn policy(&self) -> &Policy {
        &self.report.policy
    }
}

/// Lazily solved low-level policies, one slot per target plus the idle one.
///
/// Entries are inserted once; a concurrent loser discards its own result.
#[derive(Debug)]
pub struct LowLevelCache {
    world: Arc<RoverWorld>,
    settings: SolverSettings,
    slots: Vec<OnceLock<Arc<LowLevelPolicy>>>,
    solves: AtomicUsize,
    solve_nanos: AtomicU64,
}

impl LowLevelCache {
    pub fn new(world: Arc<RoverWorld>, settings: SolverSettings) -> Self {
        let n = world.config().targets.len() + 1;
        LowLevelCache {
            world,
            settings,
            slots: (0..n).map(|_| OnceLock::new()).collect(),
            solves: AtomicUsize::new(0),
            solve_nanos: AtomicU64::new(0),
        }
    }

    fn slot(&self, focal: Focal) -> usize {
        focal.target().unwrap_or(self.slots.len() - 1)
    }

    pub fn cached(&self, focal: Focal) -> Option<Arc<LowLevelPolicy>> {
        self.slots[self.slot(focal)].get().cloned()
    }

    /// Returns the policy for `focal`, building and solving it on first use.
    pub fn get(&self, focal: Focal) -> Result<Arc<LowLevelPolicy>> {
        let slot = &self.slots[self.slot(focal)];
        if let Some(p) = slot.get() {
            return Ok(p.clone());
        }
        let ll = build_low_level(&self.world, focal)?;
        let report = value_iteration(&ll.mdp, self.settings.tol, self.settings.max_iters)?;
        let elapsed = report.wall_time;
        let fresh = Arc::new(LowLevelPolicy { ll, report });
        if slot.set(fresh).is_ok() {
            self.solves.fetch_add(1, Ordering::Relaxed);
            self.solve_nanos
                .fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
        }
        Ok(slot.get().expect("slot initialised").clone())
    }

    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Summed solver time of every inserted policy.
    pub fn solve_time(&self) -> Duration {
        Duration::from_nanos(self.solve_nanos.load(Ordering::Relaxed))
    }

    /// Backups per sweep summed over solved policies.
    pub fn backups_per_sweep(&self) -> u64 {
        self.slots
            .iter()
            .filter_map(|s| s.get())
            .map(|p| p.report.backups_per_sweep)
            .sum()
    }

    pub fn all_converged(&self) -> bool {
        self.slots.iter().filter_map(|s| s.get()).all(|p| p.report.converged)
    }

    pub fn world(&self) -> &RoverWorld {
        &self.world
    }
}

/// Ids of the mission's targets, for pre-solving.
pub fn mission_focals(spec: &MissionSpec) -> impl Iterator<Item = Focal> + '_ {
    spec.targets.iter().map(|t| Focal::Target(t.id))
}
