use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_bilevel, evaluate_flat, Problem};
use crate::bilevel::{solve_bilevel, HeuristicSpec, MissionSpec, SolverSettings};
use crate::error::{Error, Result};
use crate::mdp::{value_iteration, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::rover::{Cell, GridConfig, RoverWorld, ShadowSchedule, ShadowSweep, StartState, Target, MAX_ENUMERATED_STATES, SCHEMA_VERSION};

/// `base + size / per`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRule {
    pub base: usize,
    pub per: usize,
}

impl CountRule {
    pub fn count(&self, size: u16) -> usize {
        self.base + if self.per == 0 { 0 } else { size as usize / self.per }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub grid_sizes: Vec<u16>,
    pub science_targets: CountRule,
    pub hibernation_targets: usize,
    /// Horizon is `horizon_factor × size`.
    pub horizon_factor: u16,
    pub obstacle_density: f64,
    pub moving_shadow: bool,
    pub activity_durations: [f64; 3],
    pub discount: f64,
    pub seed: u64,
    pub n_sims: usize,
    pub tol: f64,
    pub heuristic: HeuristicSpec,
    /// Sizes whose flat problem exceeds this many states are skipped.
    pub max_states: usize,
    pub record_timing: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            grid_sizes: vec![10, 20, 30, 40, 50],
            science_targets: CountRule { base: 1, per: 20 },
            hibernation_targets: 1,
            horizon_factor: 2,
            obstacle_density: 0.05,
            moving_shadow: true,
            activity_durations: [1.0 / 3.0; 3],
            discount: 0.95,
            seed: 0,
            n_sims: 100,
            tol: DEFAULT_TOL,
            heuristic: HeuristicSpec::default(),
            max_states: MAX_ENUMERATED_STATES,
            record_timing: true,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_sizes.is_empty() || self.grid_sizes.iter().any(|&s| s < 2) {
            return Err(Error::config("grid sizes must be non-empty and at least 2"));
        }
        if self.n_sims == 0 {
            return Err(Error::config("n_sims must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.obstacle_density) {
            return Err(Error::config("obstacle_density must be in [0, 1)"));
        }
        self.heuristic.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: u16,
    pub flat_states: usize,
    pub flat_return: f64,
    pub flat_std_error: f64,
    pub bl_return: f64,
    pub bl_std_error: f64,
    pub reward_ratio: f64,
    pub flat_time_s: f64,
    pub bl_time_s: f64,
    pub time_ratio: f64,
    pub flat_backups_per_sweep: u64,
    pub bl_backups_per_sweep: u64,
    #[serde(default)]
    pub error: Option<String>,
}

/// Random instance for one sweep size; the generator stream is the size, so
/// each instance is reproducible on its own.
pub fn generate_instance(spec: &SweepSpec, size: u16) -> GridConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(size as u64);
    let horizon = spec.horizon_factor.saturating_mul(size).max(1);
    let start = Cell::new(1, 1);
    let mut taken = BTreeSet::from([start]);
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let c = Cell::new(rng.gen_range(1..=size), rng.gen_range(1..=size));
        if taken.insert(c) {
            return c;
        }
    };
    let science = spec.science_targets.count(size);
    let mut targets = Vec::new();
    for i in 0..science {
        targets.push(Target::science(i, fresh(&mut rng), 5.0, 50.0));
    }
    for k in 0..spec.hibernation_targets {
        targets.push(Target::hibernation(science + k, fresh(&mut rng), 10.0));
    }
    let cells = size as usize * size as usize;
    let obstacles = ((cells as f64 * spec.obstacle_density) as usize).min(cells.saturating_sub(targets.len() + 1));
    let static_obstacles = (0..obstacles).map(|_| fresh(&mut rng)).collect();
    let sweeps = if spec.moving_shadow {
        let band = (size / 2).max(1);
        let y0 = rng.gen_range(1..=size - band + 1);
        vec![ShadowSweep {
            start_column: size as f64,
            velocity: -(size as f64) / horizon as f64,
            width: (size / 10).max(1),
            rows: Some([y0, y0 + band - 1]),
        }]
    } else {
        Vec::new()
    };
    GridConfig {
        schema_version: SCHEMA_VERSION,
        width: size,
        height: size,
        horizon,
        discount: spec.discount,
        simplified: false,
        start: StartState { x: 1, y: 1, t: 0 },
        targets,
        shadows: ShadowSchedule {
            static_obstacles,
            sweeps,
            ..ShadowSchedule::default()
        },
        activity_durations: spec.activity_durations,
        end_penalty: -5.0,
    }
}

fn run_size(spec: &SweepSpec, size: u16) -> Result<SweepRow> {
    let cfg = generate_instance(spec, size);
    let world = Arc::new(RoverWorld::new(cfg)?);
    let states = world.indexer().state_count();
    if states > spec.max_states {
        return Err(Error::Resource(format!("{states} flat states exceeds the sweep limit {}", spec.max_states)));
    }
    let start = world.start_state();

    let (flat_states, flat_time, flat_backups, (flat_return, flat_se)) = {
        let problem = Problem {
            flat: crate::rover::compile(&world)?,
            world: world.clone(),
        };
        let rep = value_iteration(&problem.flat, spec.tol, DEFAULT_MAX_ITERS)?;
        let s0 = problem.index(&start)?;
        let stats = evaluate_flat(&problem, &rep.policy, &[s0], spec.n_sims, spec.seed)?;
        (problem.flat.state_count(), rep.wall_time.as_secs_f64(), rep.backups_per_sweep, stats)
        // the flat table is dropped here, before the high level is built
    };

    let settings = SolverSettings { tol: spec.tol, max_iters: DEFAULT_MAX_ITERS };
    let bp = solve_bilevel(world.clone(), MissionSpec::from_config(world.config()), spec.heuristic, settings)?;
    let (bl_return, bl_se) = evaluate_bilevel(&bp, &[start], spec.n_sims, spec.seed)?;
    let bl_time = bp.aggregate_wall_time().as_secs_f64();
    let timing = |t: f64| if spec.record_timing { t } else { 0.0 };
    Ok(SweepRow {
        size,
        flat_states,
        flat_return,
        flat_std_error: flat_se,
        bl_return,
        bl_std_error: bl_se,
        reward_ratio: bl_return / flat_return,
        flat_time_s: timing(flat_time),
        bl_time_s: timing(bl_time),
        time_ratio: if spec.record_timing { bl_time / flat_time } else { 0.0 },
        flat_backups_per_sweep: flat_backups,
        bl_backups_per_sweep: bp.backups_per_sweep(),
        error: None,
    })
}

/// Runs flat and bi-level value iteration on one random instance per size.
/// A failing size is recorded with its error and the sweep continues.
pub fn run_complexity_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &size in &spec.grid_sizes {
        log::info!("sweep size {size}");
        rows.push(run_size(spec, size).unwrap_or_else(|e| {
            log::error!("size {size} failed: {e}");
            SweepRow {
                size,
                flat_states: 0,
                flat_return: f64::NAN,
                flat_std_error: f64::NAN,
                bl_return: f64::NAN,
                bl_std_error: f64::NAN,
                reward_ratio: f64::NAN,
                flat_time_s: 0.0,
                bl_time_s: 0.0,
                time_ratio: f64::NAN,
                flat_backups_per_sweep: 0,
                bl_backups_per_sweep: 0,
                error: Some(e.to_string()),
            }
        }));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible_per_size() {
        let spec = SweepSpec::default();
        assert_eq!(generate_instance(&spec, 20), generate_instance(&spec, 20));
        assert_ne!(generate_instance(&spec, 20).targets, generate_instance(&spec, 30).targets);
        let cfg = generate_instance(&spec, 50);
        assert_eq!(cfg.targets.len(), 4);
        assert_eq!(cfg.horizon, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn count_rule() {
        let r = CountRule { base: 1, per: 20 };
        assert_eq!((r.count(10), r.count(20), r.count(50)), (1, 2, 3));
    }
}
