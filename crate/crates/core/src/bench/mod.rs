//! Experiment harness: iteration-cap trade-off runs, randomized complexity
//! sweeps, contingency queries and result emission.

mod contingency;
mod emit;
mod sweep;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use contingency::{run_contingency, ContingencyEntry, ContingencyReport, ContingencySolver};
pub use emit::{emit, plot_svg, sweep_to_csv, to_csv, to_json, OutputFormat, CSV_HEADER};
pub use sweep::{generate_instance, run_complexity_sweep, CountRule, SweepRow, SweepSpec};

use crate::bilevel::{plan, solve_bilevel, BiLevelPolicy, HeuristicSpec, MissionSpec, SolverSettings};
use crate::error::{Error, Result};
use crate::mdp::{summarize, value_iteration, Policy, StateIndex, TabularMdp, DEFAULT_TOL};
use crate::rl::{q_learning, sarsa, LearnConfig};
use crate::rover::{compile, GridConfig, RoverState, RoverWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Vi,
    #[serde(rename = "bl_vi")]
    BlVi,
    Qlearning,
    Sarsa,
}

impl SolverKind {
    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::Vi => "vi",
            SolverKind::BlVi => "bl_vi",
            SolverKind::Qlearning => "qlearning",
            SolverKind::Sarsa => "sarsa",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "vi" => Ok(SolverKind::Vi),
            "bl_vi" => Ok(SolverKind::BlVi),
            "qlearning" => Ok(SolverKind::Qlearning),
            "sarsa" => Ok(SolverKind::Sarsa),
            other => Err(Error::config(format!("unknown solver '{other}'"))),
        }
    }
}

/// A problem given by file path (relative to the spec file) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Path(PathBuf),
    Inline(Box<GridConfig>),
}

impl ProblemRef {
    pub fn load(&self, base: &Path) -> Result<GridConfig> {
        match self {
            ProblemRef::Path(p) if p.is_absolute() => GridConfig::load(p),
            ProblemRef::Path(p) => GridConfig::load(base.join(p)),
            ProblemRef::Inline(cfg) => {
                cfg.validate()?;
                Ok((**cfg).clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStates {
    /// The configuration's start state.
    Nominal,
    /// Every non-terminal enumerated state.
    All,
    /// A seeded uniform sample of non-terminal states.
    Sample(usize),
    Explicit(Vec<RoverState>),
}

impl StartStates {
    pub fn resolve(&self, world: &RoverWorld, seed: u64) -> Result<Vec<RoverState>> {
        let ix = world.indexer();
        let open = || {
            (0..ix.rover_state_count())
                .filter_map(|i| ix.decode(i))
                .filter(|s| !world.is_terminal(s))
        };
        Ok(match self {
            StartStates::Nominal => vec![world.start_state()],
            StartStates::All => open().collect(),
            StartStates::Sample(n) => {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let all: Vec<_> = open().collect();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                all.choose_multiple(&mut rng, *n).copied().collect()
            }
            StartStates::Explicit(list) => {
                for s in list {
                    ix.encode(s)
                        .ok_or_else(|| Error::config(format!("start state {s:?} is not valid for this problem")))?;
                }
                list.clone()
            }
        })
    }
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Vi, SolverKind::BlVi]
}
fn default_caps() -> Vec<usize> {
    vec![1, 2, 5, 10, 20, 50, 100]
}
fn default_n_sims() -> usize {
    500
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_episodes_per_iteration() -> usize {
    1000
}
fn default_true() -> bool {
    true
}
fn default_starts() -> StartStates {
    StartStates::Nominal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemRef,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_caps")]
    pub max_iter_grid: Vec<usize>,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_starts")]
    pub start_states: StartStates,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// RL training episodes per unit of iteration cap.
    #[serde(default = "default_episodes_per_iteration")]
    pub episodes_per_iteration: usize,
    /// Template for the RL learners; `episodes` and `seed` are overridden.
    #[serde(default)]
    pub learn: LearnConfig,
    #[serde(default)]
    pub heuristic: HeuristicSpec,
    /// Run each solve once untimed before the measured run.
    #[serde(default = "default_true")]
    pub warmup: bool,
    /// When false, wall times are written as 0 so output is byte-stable.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::config("experiment needs at least one solver"));
        }
        if self.n_sims == 0 {
            return Err(Error::config("n_sims must be at least 1"));
        }
        if self.max_iter_grid.is_empty() || self.max_iter_grid.contains(&0) {
            return Err(Error::config("max_iter_grid must be non-empty and positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol must be positive"));
        }
        self.heuristic.validate()
    }
}

/// One (solver, iteration cap) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub solver: SolverKind,
    pub iter_cap: usize,
    pub wall_time_s: f64,
    pub mean_return: f64,
    pub std_error: f64,
    pub converged: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRow {
    fn failed(solver: SolverKind, iter_cap: usize, seed: u64, err: &Error) -> Self {
        ResultRow {
            solver,
            iter_cap,
            wall_time_s: 0.0,
            mean_return: f64::NAN,
            std_error: f64::NAN,
            converged: false,
            seed,
            error: Some(err.to_string()),
        }
    }
}

/// A compiled problem shared by the runners.
pub struct Problem {
    pub world: Arc<RoverWorld>,
    pub flat: TabularMdp,
}

impl Problem {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        let world = Arc::new(RoverWorld::new(cfg)?);
        let flat = compile(&world)?;
        Ok(Problem { world, flat })
    }

    pub fn index(&self, s: &RoverState) -> Result<StateIndex> {
        self.world.indexer().encode(s).ok_or_else(|| Error::config(format!("state {s:?} is not valid for this problem")))
    }
}

/// Mean and standard error of flat-policy rollouts over several starts.
pub fn evaluate_flat(problem: &Problem, policy: &Policy, starts: &[StateIndex], n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(starts.len() * n);
    for &s in starts {
        for k in 0..n as u64 {
            let tr = crate::mdp::simulate(&problem.flat, policy, s, seed.wrapping_add(k), crate::mdp::DEFAULT_STEP_CAP)?;
            returns.push(tr.discounted_return);
        }
    }
    Ok(summarize(&returns))
}

/// Mean and standard error of bi-level plans over several starts.
pub fn evaluate_bilevel(bp: &BiLevelPolicy, starts: &[RoverState], n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(starts.len() * n);
    for s in starts {
        for k in 0..n as u64 {
            returns.push(plan(bp, s, seed.wrapping_add(k))?.discounted_return);
        }
    }
    Ok(summarize(&returns))
}

fn run_cell(
    problem: &Problem,
    spec: &ExperimentSpec,
    solver: SolverKind,
    cap: usize,
    starts: &[RoverState],
    start_ix: &[StateIndex],
) -> Result<ResultRow> {
    let seed = spec.base_seed;
    let settings = SolverSettings { tol: spec.tol, max_iters: cap };
    let (wall, (mean, se), converged) = match solver {
        SolverKind::Vi => {
            if spec.warmup {
                value_iteration(&problem.flat, spec.tol, cap)?;
            }
            let rep = value_iteration(&problem.flat, spec.tol, cap)?;
            let stats = evaluate_flat(problem, &rep.policy, start_ix, spec.n_sims, seed)?;
            (rep.wall_time.as_secs_f64(), stats, rep.converged)
        }
        SolverKind::BlVi => {
            let mission = MissionSpec::from_config(problem.world.config());
            if spec.warmup {
                let bp = solve_bilevel(problem.world.clone(), mission.clone(), spec.heuristic, settings)?;
                bp.presolve()?;
            }
            let bp = solve_bilevel(problem.world.clone(), mission, spec.heuristic, settings)?;
            let stats = evaluate_bilevel(&bp, starts, spec.n_sims, seed)?;
            let converged = bp.converged();
            (bp.aggregate_wall_time().as_secs_f64(), stats, converged)
        }
        SolverKind::Qlearning | SolverKind::Sarsa => {
            let cfg = LearnConfig {
                episodes: cap * spec.episodes_per_iteration,
                seed,
                start: spec.learn.start.or(start_ix.first().copied()),
                ..spec.learn.clone()
            };
            let learn = if solver == SolverKind::Qlearning { q_learning } else { sarsa };
            if spec.warmup {
                learn(&problem.flat, &cfg)?;
            }
            let started = Instant::now();
            let res = learn(&problem.flat, &cfg)?;
            let wall = started.elapsed().as_secs_f64().max(res.wall_time.as_secs_f64());
            let stats = evaluate_flat(problem, &res.policy, start_ix, spec.n_sims, seed)?;
            (wall, stats, res.policy_stable)
        }
    };
    Ok(ResultRow {
        solver,
        iter_cap: cap,
        wall_time_s: if spec.record_timing { wall } else { 0.0 },
        mean_return: mean,
        std_error: se,
        converged,
        seed,
        error: None,
    })
}

/// Solves and evaluates every solver at every iteration cap, in spec order.
/// A failing cell becomes an error row; the run continues.
pub fn run_tradeoff(spec: &ExperimentSpec, base: &Path) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let problem = Problem::new(spec.problem.load(base)?)?;
    let starts = spec.start_states.resolve(&problem.world, spec.base_seed)?;
    let start_ix = starts.iter().map(|s| problem.index(s)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &solver in &spec.solvers {
        for &cap in &spec.max_iter_grid {
            let row = run_cell(&problem, spec, solver, cap, &starts, &start_ix).unwrap_or_else(|e| {
                log::error!("{} at cap {cap} failed: {e}", solver.tag());
                ResultRow::failed(solver, cap, spec.base_seed, &e)
            });
            rows.push(row);
        }
    }
    Ok(rows)
}
