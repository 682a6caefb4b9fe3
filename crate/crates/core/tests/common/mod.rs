#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use bimdp::mdp::{MdpBuilder, TabularMdp, TransitionEntry};
use bimdp::rover::{Cell, GridConfig, RoverState, RoverWorld, ShadowSchedule, ShadowSweep, StartState, Successor, Target};
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn load(name: &str) -> GridConfig {
    GridConfig::load(config_path(name)).unwrap()
}

/// Small random rover instance: at most 4×4, horizon at most 6, at most
/// two targets.
pub fn random_rover_config(rng: &mut impl Rng, stochastic: bool) -> GridConfig {
    let width = rng.gen_range(2..=4);
    let height = rng.gen_range(2..=4);
    let horizon = rng.gen_range(2..=6);
    let simplified = rng.gen_bool(0.4);
    let mut cells: Vec<Cell> = (1..=width).flat_map(|x| (1..=height).map(move |y| Cell::new(x, y))).collect();
    let start = cells.swap_remove(rng.gen_range(0..cells.len()));
    let n_targets = rng.gen_range(1..=2);
    let mut targets = Vec::new();
    for id in 0..n_targets {
        let cell = cells.swap_remove(rng.gen_range(0..cells.len()));
        let mut t = if id == n_targets - 1 && rng.gen_bool(0.5) {
            Target::hibernation(id, cell, rng.gen_range(1.0..20.0))
        } else {
            Target::science(id, cell, rng.gen_range(0.0..10.0), rng.gen_range(10.0..60.0))
        };
        if rng.gen_bool(0.3) {
            let open = rng.gen_range(0..horizon);
            t.window = Some([open, rng.gen_range(open..=horizon)]);
        }
        targets.push(t);
    }
    let static_obstacles = cells.iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
    let sweeps = if rng.gen_bool(0.5) {
        vec![ShadowSweep {
            start_column: width as f64,
            velocity: -rng.gen_range(0.2..1.0),
            width: 1,
            rows: None,
        }]
    } else {
        vec![]
    };
    let activity_durations = if stochastic {
        let a: f64 = rng.gen_range(0.1..0.8);
        let b: f64 = rng.gen_range(0.0..(1.0 - a));
        [a, b, 1.0 - a - b]
    } else {
        let mut d = [0.0; 3];
        d[rng.gen_range(0..3)] = 1.0;
        d
    };
    GridConfig {
        schema_version: 1,
        width,
        height,
        horizon,
        discount: rng.gen_range(0.8..0.99),
        simplified,
        start: StartState { x: start.x, y: start.y, t: 0 },
        targets,
        shadows: ShadowSchedule {
            static_obstacles,
            sweeps,
            ..ShadowSchedule::default()
        },
        activity_durations,
        end_penalty: -rng.gen_range(0.0..5.0),
    }
}

/// Optimal value straight from the environment's step function, by
/// memoized expectimax over reachable states.
pub fn rover_oracle(world: &RoverWorld, s: &RoverState) -> f64 {
    fn go(world: &RoverWorld, s: &RoverState, memo: &mut HashMap<RoverState, f64>) -> f64 {
        if world.is_terminal(s) {
            return 0.0;
        }
        if let Some(&v) = memo.get(s) {
            return v;
        }
        let g = world.config().discount;
        let mut best = f64::NEG_INFINITY;
        for &a in world.actions() {
            let mut q = 0.0;
            for o in world.step(s, a) {
                let future = match o.next {
                    Successor::State(n) => go(world, &n, memo),
                    Successor::End => 0.0,
                };
                q += o.probability * (o.reward.total + g * future);
            }
            best = best.max(q);
        }
        memo.insert(*s, best);
        best
    }
    go(world, s, &mut HashMap::new())
}

/// Random episodic MDP whose transitions only move to higher indices; the
/// last state is terminal and some states have missing actions.
pub fn random_dag_mdp(rng: &mut impl Rng, n: usize, actions: usize, discount: f64) -> TabularMdp {
    let mut b = MdpBuilder::new(n, actions, discount).unwrap();
    for s in 0..n - 1 {
        for a in 0..actions {
            if a > 0 && rng.gen_bool(0.2) {
                continue;
            }
            let k = rng.gen_range(1..=3.min(n - 1 - s));
            let mut nexts: Vec<usize> = (s + 1..n).collect();
            let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let entries: Vec<TransitionEntry> = weights
                .iter()
                .map(|&p| {
                    let next = nexts.swap_remove(rng.gen_range(0..nexts.len()));
                    TransitionEntry::new(next, p, rng.gen_range(-10.0..10.0))
                })
                .collect();
            let mut entries = entries;
            entries.sort_by_key(|e| e.next);
            b.set_transitions(s, a, entries).unwrap();
        }
    }
    b.mark_terminal(n - 1);
    b.build().unwrap()
}

/// Exact optimal values of an acyclic table, computed backwards.
pub fn dag_oracle(mdp: &TabularMdp) -> Vec<f64> {
    let n = mdp.state_count();
    let mut v = vec![0.0; n];
    for s in (0..n).rev() {
        if mdp.is_terminal(s) {
            continue;
        }
        v[s] = mdp
            .legal_actions(s)
            .map(|a| mdp.transitions(s, a).map(|e| e.probability * (e.reward + mdp.discount() * v[e.next])).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
    }
    v
}

/// Random MDP with cycles; roughly one state in five is terminal.
pub fn random_general_mdp(rng: &mut impl Rng, n: usize, actions: usize, discount: f64) -> TabularMdp {
    let mut b = MdpBuilder::new(n, actions, discount).unwrap();
    let terminal: Vec<bool> = (0..n).map(|s| s > 0 && rng.gen_bool(0.2)).collect();
    for s in 0..n {
        if terminal[s] {
            b.mark_terminal(s);
            continue;
        }
        for a in 0..actions {
            let k = rng.gen_range(1..=3.min(n));
            let mut nexts: Vec<usize> = (0..n).collect();
            let mut picked: Vec<usize> = (0..k).map(|_| nexts.swap_remove(rng.gen_range(0..nexts.len()))).collect();
            picked.sort_unstable();
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let entries: Vec<TransitionEntry> = picked
                .iter()
                .zip(&weights)
                .map(|(&next, w)| TransitionEntry::new(next, w / total, rng.gen_range(-5.0..5.0)))
                .collect();
            b.set_transitions(s, a, entries).unwrap();
        }
    }
    b.build().unwrap()
}
