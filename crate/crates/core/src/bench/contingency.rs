use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::bilevel::{check_feasible, plan, solve_bilevel, HeuristicSpec, MissionSpec, SolverSettings};
use crate::error::{Error, Result};
use crate::mdp::{simulate, value_iteration, Trace, DEFAULT_STEP_CAP};
use crate::rover::RoverState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContingencySolver {
    Vi,
    BlVi,
}

/// Plan from one off-nominal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyEntry {
    pub state: RoverState,
    pub latency_s: f64,
    pub new_ll_solves: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discounted_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyReport {
    pub solver: ContingencySolver,
    /// Solve cost paid once before the first query.
    pub setup_s: f64,
    pub entries: Vec<ContingencyEntry>,
}

impl ContingencyReport {
    pub fn total_new_ll_solves(&self) -> usize {
        self.entries.iter().map(|e| e.new_ll_solves).sum()
    }
}

/// Solves once, then plans from each state in order. Low-level policies
/// solved for one query are reused by the following ones.
pub fn run_contingency(
    problem: &Problem,
    states: &[RoverState],
    solver: ContingencySolver,
    heuristic: HeuristicSpec,
    settings: SolverSettings,
    seed: u64,
) -> Result<ContingencyReport> {
    let entry = |state: RoverState, started: Instant, res: Result<(f64, Trace, usize)>| {
        let latency_s = started.elapsed().as_secs_f64();
        match res {
            Ok((ret, trace, solves)) => ContingencyEntry {
                state,
                latency_s,
                new_ll_solves: solves,
                discounted_return: Some(ret),
                trace: Some(trace),
                error: None,
            },
            Err(e) => ContingencyEntry {
                state,
                latency_s,
                new_ll_solves: 0,
                discounted_return: None,
                trace: None,
                error: Some(e.to_string()),
            },
        }
    };
    let setup = Instant::now();
    match solver {
        ContingencySolver::Vi => {
            let rep = value_iteration(&problem.flat, settings.tol, settings.max_iters)?;
            let setup_s = setup.elapsed().as_secs_f64();
            let entries = states
                .iter()
                .map(|s| {
                    let started = Instant::now();
                    let res = problem.index(s).and_then(|i| {
                        let tr = simulate(&problem.flat, &rep.policy, i, seed, DEFAULT_STEP_CAP)?;
                        Ok((tr.discounted_return, tr, 0))
                    });
                    entry(*s, started, res)
                })
                .collect();
            Ok(ContingencyReport { solver, setup_s, entries })
        }
        ContingencySolver::BlVi => {
            let mission = MissionSpec::from_config(problem.world.config());
            let bp = solve_bilevel(problem.world.clone(), mission, heuristic, settings)?;
            let setup_s = setup.elapsed().as_secs_f64();
            let entries = states
                .iter()
                .map(|s| {
                    let started = Instant::now();
                    let res = problem.index(s).and_then(|_| {
                        let p = plan(&bp, s, seed)?;
                        check_feasible(&problem.flat, &p.trace)
                            .map_err(|e| Error::contract(format!("infeasible contingency plan: {e}")))?;
                        Ok((p.discounted_return, p.trace, p.new_ll_solves))
                    });
                    entry(*s, started, res)
                })
                .collect();
            Ok(ContingencyReport { solver, setup_s, entries })
        }
    }
}
