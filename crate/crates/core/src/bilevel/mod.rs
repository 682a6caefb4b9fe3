//! Bi-level planning: a high-level MDP picks the next target using a cheap
//! transition heuristic, and per-target low-level MDPs over telemetry only
//! do the navigation.

mod heuristic;
mod high_level;
mod low_level;
mod plan;
mod split;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use heuristic::{coarse_duration, heuristic_transition, ExactHeuristic, HeuristicMode, HeuristicSpec, HeuristicTransition};
pub use high_level::build_high_level;
pub use low_level::{build_low_level, focal_complete, Focal, LowLevelCache, LowLevelMdp, LowLevelPolicy};
pub use plan::{check_feasible, plan, HlDecision, PlanResult};
pub use split::{flag_events, merge, split, subset_of, update_hl_state, FlagEvent, LowLevelState, Telemetry};

use crate::error::{Error, Result};
use crate::mdp::{value_iteration, Policy, SolveReport, TabularMdp, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::rover::{GridConfig, RoverWorld, Target};

/// Which reward decomposition the environment exposes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSplit {
    /// Target payouts versus obstacle, shadow and end penalties.
    #[default]
    TargetsObstacles,
}

/// Which projection separates instantaneous from historical state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSplit {
    /// `(x, y, t)` versus the measured/drilled/visited masks.
    #[default]
    TelemetryTracking,
}

/// User inputs of the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub targets: Vec<Target>,
    #[serde(default)]
    pub reward_split: RewardSplit,
    #[serde(default)]
    pub state_split: StateSplit,
}

impl MissionSpec {
    /// Every target of the configuration, hibernation areas included.
    pub fn from_config(cfg: &GridConfig) -> Self {
        MissionSpec {
            targets: cfg.targets.clone(),
            reward_split: RewardSplit::default(),
            state_split: StateSplit::default(),
        }
    }

    pub fn with_targets(cfg: &GridConfig, ids: &[usize]) -> Result<Self> {
        let targets = ids
            .iter()
            .map(|&i| {
                cfg.targets
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::config(format!("unknown target id {i}")))
            })
            .collect::<Result<_>>()?;
        let spec = MissionSpec {
            targets,
            ..MissionSpec::from_config(cfg)
        };
        spec.validate(cfg)?;
        Ok(spec)
    }

    pub fn validate(&self, cfg: &GridConfig) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::config("mission target list is empty"));
        }
        for (k, t) in self.targets.iter().enumerate() {
            if cfg.targets.get(t.id) != Some(t) {
                return Err(Error::config(format!("mission target {} does not match the configuration", t.id)));
            }
            if self.targets[..k].iter().any(|o| o.id == t.id) {
                return Err(Error::config(format!("mission lists target {} twice", t.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Solved high level plus the lazily filled low-level cache.
#[derive(Debug)]
pub struct BiLevelPolicy {
    world: Arc<RoverWorld>,
    spec: MissionSpec,
    heuristic: HeuristicSpec,
    pub hl_mdp: TabularMdp,
    pub hl_report: SolveReport,
    cache: LowLevelCache,
}

impl BiLevelPolicy {
    pub fn world(&self) -> &RoverWorld {
        &self.world
    }

    pub fn spec(&self) -> &MissionSpec {
        &self.spec
    }

    pub fn heuristic(&self) -> &HeuristicSpec {
        &self.heuristic
    }

    pub fn hl_policy(&self) -> &Policy {
        &self.hl_report.policy
    }

    pub fn cache(&self) -> &LowLevelCache {
        &self.cache
    }

    /// Low-level solves so far, the idle policy included.
    pub fn ll_solve_count(&self) -> usize {
        self.cache.solve_count()
    }

    /// High-level solve time plus every low-level solve so far.
    pub fn aggregate_wall_time(&self) -> Duration {
        self.hl_report.wall_time + self.cache.solve_time()
    }

    /// True when the high level and every solved low level converged.
    pub fn converged(&self) -> bool {
        self.hl_report.converged && self.cache.all_converged()
    }

    /// Per-sweep backups of the high level and every solved low level.
    pub fn backups_per_sweep(&self) -> u64 {
        self.hl_report.backups_per_sweep + self.cache.backups_per_sweep()
    }

    /// Solves the low level of every mission target now instead of on demand.
    pub fn presolve(&self) -> Result<()> {
        for f in low_level::mission_focals(&self.spec) {
            self.cache.get(f)?;
        }
        Ok(())
    }
}

/// Builds and solves the high level; low levels are solved on first use,
/// except the idle wrap-up policy, which is solved here.
pub fn solve_bilevel(
    world: Arc<RoverWorld>,
    spec: MissionSpec,
    heuristic: HeuristicSpec,
    settings: SolverSettings,
) -> Result<BiLevelPolicy> {
    let cache = LowLevelCache::new(world.clone(), settings);
    let hl_mdp = build_high_level(&world, &spec, &heuristic, &cache)?;
    let hl_report = value_iteration(&hl_mdp, settings.tol, settings.max_iters)?;
    cache.get(Focal::Idle)?;
    Ok(BiLevelPolicy {
        world,
        spec,
        heuristic,
        hl_mdp,
        hl_report,
        cache,
    })
}
