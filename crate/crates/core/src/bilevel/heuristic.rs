use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::low_level::{focal_complete, Focal, LowLevelCache};
use crate::error::{Error, Result};
use crate::rover::{Cell, RoverAction, RoverState, RoverWorld, Successor, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicMode {
    Coarse,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicSpec {
    pub mode: HeuristicMode,
    /// Multiplier on Manhattan distance for the travel-time estimate.
    pub speed_slack: f64,
    /// Timesteps added for measuring and drilling a science target.
    pub activity_time_estimate: u16,
    /// Obstacle penalties smaller in magnitude than this are ignored.
    pub obstacle_threshold: f64,
}

impl Default for HeuristicSpec {
    fn default() -> Self {
        HeuristicSpec {
            mode: HeuristicMode::Coarse,
            speed_slack: 1.2,
            activity_time_estimate: 2,
            obstacle_threshold: 6.0,
        }
    }
}

impl HeuristicSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_slack >= 1.0) || !self.speed_slack.is_finite() {
            return Err(Error::config(format!("speed_slack must be >= 1, got {}", self.speed_slack)));
        }
        if !(self.obstacle_threshold >= 0.0) {
            return Err(Error::config("obstacle_threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Point-mass successor estimate for one high-level action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTransition {
    pub state: RoverState,
    pub duration: u16,
    pub estimated_reward: f64,
    /// Arrival within the horizon and the target's window, target not yet done.
    pub feasible: bool,
}

/// Travel and activity time of the coarse model.
pub fn coarse_duration(world: &RoverWorld, from: Cell, target: &Target, h: &HeuristicSpec) -> u16 {
    let dist = from.manhattan(target.cell) as f64;
    let travel = (dist * h.speed_slack - 1e-9).ceil().max(0.0) as u16;
    let activity = if world.simplified() || target.is_hibernation {
        0
    } else {
        h.activity_time_estimate
    };
    travel.saturating_add(activity)
}

/// Cells strictly after `a` up to and including `b`, as an inclusive range.
fn leg(a: u16, b: u16) -> (u16, u16) {
    if a < b {
        (a + 1, b)
    } else if a > b {
        (b, a - 1)
    } else {
        (1, 0)
    }
}

/// Cells visited walking from `from` to `to` along one axis, then the other.
fn l_path(from: Cell, to: Cell, x_first: bool) -> Vec<Cell> {
    let walk = |a: u16, b: u16| -> Vec<u16> {
        if a <= b {
            (a + 1..=b).collect()
        } else {
            (b..a).rev().collect()
        }
    };
    let (xs, ys) = (walk(from.x, to.x), walk(from.y, to.y));
    if x_first {
        xs.iter().map(|&x| Cell::new(x, from.y)).chain(ys.iter().map(|&y| Cell::new(to.x, y))).collect()
    } else {
        ys.iter().map(|&y| Cell::new(from.x, y)).chain(xs.iter().map(|&x| Cell::new(x, to.y))).collect()
    }
}

/// Heavy obstacle penalties along the cheaper of the two L-shaped paths.
fn path_penalty(world: &RoverWorld, from: Cell, to: Cell, t0: u16, threshold: f64) -> f64 {
    let sh = &world.config().shadows;
    let static_p = if sh.static_penalty.abs() >= threshold { sh.static_penalty } else { 0.0 };
    let shadow_p = if sh.shadow_penalty.abs() >= threshold { sh.shadow_penalty } else { 0.0 };
    if static_p == 0.0 && shadow_p == 0.0 {
        return 0.0;
    }
    let (xl, xh) = leg(from.x, to.x);
    let (yl, yh) = leg(from.y, to.y);
    let x_first = world.obstacles_in_row(from.y, xl, xh) + world.obstacles_in_column(to.x, yl, yh);
    let y_first = world.obstacles_in_column(from.x, yl, yh) + world.obstacles_in_row(to.y, xl, xh);
    let mut best = [x_first, y_first].map(|n| n as f64 * static_p);
    if shadow_p != 0.0 {
        for (k, x_first) in [true, false].into_iter().enumerate() {
            let shaded = l_path(from, to, x_first)
                .iter()
                .enumerate()
                .filter(|&(i, &c)| world.is_shadowed(c, t0.saturating_add(i as u16 + 1)))
                .count();
            best[k] += shaded as f64 * shadow_p;
        }
    }
    best[0].max(best[1])
}

fn with_target_done(world: &RoverWorld, s: &RoverState, i: usize) -> RoverState {
    let bit = 1u32 << i;
    let mut n = *s;
    if world.simplified() {
        n.visited |= bit;
    } else {
        n.measured |= bit;
        n.drilled |= bit;
    }
    n
}

/// Coarse heuristic: the rover jumps to the target cell after
/// `ceil(distance * slack) + activity` timesteps.
pub fn heuristic_transition(world: &RoverWorld, s: &RoverState, target: &Target, h: &HeuristicSpec) -> HeuristicTransition {
    let horizon = world.horizon();
    let bit = 1u32 << target.id;
    let duration = coarse_duration(world, s.cell(), target, h);
    let arrival = s.t as u32 + duration as u32;
    let t = arrival.min(horizon as u32) as u16;
    let done = world.completed(s) & bit != 0;
    let feasible = !done && arrival <= horizon as u32 && target.in_window(t, horizon);
    let mut next = RoverState { x: target.cell.x, y: target.cell.y, t, ..*s };
    let mut estimated_reward = 0.0;
    if feasible {
        next = with_target_done(world, &next, target.id);
        let payout = if world.simplified() || s.measured & bit == 0 {
            target.payout()
        } else {
            target.drill_reward
        };
        estimated_reward = payout + path_penalty(world, s.cell(), target.cell, s.t, h.obstacle_threshold);
    }
    HeuristicTransition {
        state: next,
        duration,
        estimated_reward,
        feasible,
    }
}

/// Exact heuristic: greedy rollout of the solved low-level policy on a
/// deterministic instance. Rollouts are memoised per low-level state.
pub struct ExactHeuristic<'a> {
    cache: &'a LowLevelCache,
    memo: Mutex<HashMap<(usize, usize), Option<(RoverState, u16, f64)>>>,
}

impl<'a> ExactHeuristic<'a> {
    pub fn new(cache: &'a LowLevelCache) -> Self {
        ExactHeuristic {
            cache,
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn rollout(&self, s: &RoverState, target: usize) -> Result<Option<(RoverState, u16, f64)>> {
        let world = self.cache.world();
        let focal = Focal::Target(target);
        let ll = self.cache.get(focal)?;
        let start = ll.ll.index_of(s);
        let key = (target, start);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(*hit);
        }
        let m = s.measured & (1 << target) != 0 && !world.simplified();
        let mut cur = ll.ll.synthetic(s.x, s.y, s.t, m);
        let mut accrued = 0.0;
        let mut result = None;
        for _ in 0..=world.horizon() as usize + 1 {
            let idx = ll.ll.index_of(&cur);
            if ll.ll.mdp.is_terminal(idx) {
                break;
            }
            let a = RoverAction::from_index(ll.policy().action(idx)).expect("valid action");
            let out = world.step(&cur, a);
            let Some(o) = out.first() else { break };
            let Successor::State(next) = o.next else { break };
            accrued += o.reward.targets;
            cur = next;
            if focal_complete(world, focal, &cur) {
                result = Some((cur, cur.t - s.t, accrued));
                break;
            }
            if world.is_terminal(&cur) {
                break;
            }
        }
        self.memo.lock().expect("memo lock").insert(key, result);
        Ok(result)
    }

    pub fn transition(&self, s: &RoverState, target: &Target) -> Result<HeuristicTransition> {
        let world = self.cache.world();
        let done = world.completed(s) & (1 << target.id) != 0;
        let outcome = if done { None } else { self.rollout(s, target.id)? };
        Ok(match outcome {
            Some((end, duration, reward)) => HeuristicTransition {
                state: with_target_done(world, &RoverState { x: end.x, y: end.y, t: end.t, ..*s }, target.id),
                duration,
                estimated_reward: reward,
                feasible: true,
            },
            None => HeuristicTransition {
                state: *s,
                duration: 0,
                estimated_reward: 0.0,
                feasible: false,
            },
        })
    }
}
