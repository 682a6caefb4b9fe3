use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bimdp::bench::{
    emit, run_complexity_sweep, run_contingency, run_tradeoff, sweep_to_csv, ContingencySolver, ExperimentSpec,
    OutputFormat, Problem, SolverKind, StartStates, SweepSpec,
};
use bimdp::bilevel::{plan, solve_bilevel, HeuristicMode, HeuristicSpec, MissionSpec, SolverSettings};
use bimdp::mdp::{simulate, summarize, value_iteration, Policy, Trace, DEFAULT_MAX_ITERS, DEFAULT_STEP_CAP, DEFAULT_TOL};
use bimdp::rl::{q_learning, sarsa, LearnConfig};
use bimdp::rover::{render, GridConfig, RenderFormat, RoverState};
use bimdp::{Error, Result};

#[derive(Parser)]
#[command(name = "bimdp", version, about = "Flat and bi-level MDP planning for rover traverses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem, experiment or sweep file, depending on the subcommand.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum, default_value_t = Solver::Vi)]
    solver: Solver,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long)]
    n_sims: Option<usize>,
    /// Exit with code 4 when a solver stops before reaching the tolerance.
    #[arg(long)]
    require_converged: bool,
    /// Training episodes for the model-free solvers.
    #[arg(long, default_value_t = 50_000)]
    episodes: usize,
    /// Estimate high-level transitions by rolling out low-level policies.
    #[arg(long)]
    exact_heuristic: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
    Ascii,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Vi,
    #[value(name = "bl_vi")]
    BlVi,
    Qlearning,
    Sarsa,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and print the value of its start state.
    Solve(Common),
    /// Roll out the solved policy from the start state.
    Simulate(Common),
    /// Return versus solve time over a grid of iteration caps.
    Tradeoff(Common),
    /// Flat versus bi-level over randomized grid sizes.
    Sweep(Common),
    /// Plans from off-nominal states.
    Contingency {
        #[command(flatten)]
        common: Common,
        /// JSON list of states; defaults to a seeded random sample.
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        random: usize,
    },
    /// Draw one rollout of the solved policy.
    Render {
        #[command(flatten)]
        common: Common,
        /// Time of the shadow snapshot.
        #[arg(long)]
        shadow_t: Option<u16>,
    },
}

impl Common {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }

    fn heuristic(&self) -> HeuristicSpec {
        HeuristicSpec {
            mode: if self.exact_heuristic { HeuristicMode::Exact } else { HeuristicMode::Coarse },
            ..HeuristicSpec::default()
        }
    }

    fn check(&self, converged: bool, iterations: usize, residual: f64) -> Result<()> {
        if self.require_converged && !converged {
            return Err(Error::NotConverged { iterations, residual });
        }
        Ok(())
    }

    fn output(&self, name: &str, ext: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(format!("{name}.{ext}")))
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, body).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn learn_config(c: &Common, problem: &Problem) -> Result<LearnConfig> {
    Ok(LearnConfig {
        episodes: c.episodes,
        seed: c.seed,
        start: Some(problem.index(&problem.world.start_state())?),
        ..LearnConfig::default()
    })
}

/// A solved flat policy, or `None` for the bi-level solver.
fn flat_policy(c: &Common, problem: &Problem) -> Result<Option<Policy>> {
    Ok(match c.solver {
        Solver::Vi => {
            let rep = value_iteration(&problem.flat, c.tol, c.max_iters)?;
            c.check(rep.converged, rep.iterations, rep.bellman_residual)?;
            Some(rep.policy)
        }
        Solver::Qlearning => Some(q_learning(&problem.flat, &learn_config(c, problem)?)?.policy),
        Solver::Sarsa => Some(sarsa(&problem.flat, &learn_config(c, problem)?)?.policy),
        Solver::BlVi => None,
    })
}

fn rollouts(c: &Common, problem: &Problem, n: usize) -> Result<Vec<Trace>> {
    let start = problem.world.start_state();
    match flat_policy(c, problem)? {
        Some(policy) => {
            let s0 = problem.index(&start)?;
            (0..n as u64)
                .map(|k| simulate(&problem.flat, &policy, s0, c.seed + k, DEFAULT_STEP_CAP))
                .collect()
        }
        None => {
            let mission = MissionSpec::from_config(problem.world.config());
            let bp = solve_bilevel(problem.world.clone(), mission, c.heuristic(), c.settings())?;
            c.check(bp.hl_report.converged, bp.hl_report.iterations, bp.hl_report.bellman_residual)?;
            (0..n as u64).map(|k| Ok(plan(&bp, &start, c.seed + k)?.trace)).collect()
        }
    }
}

fn cmd_solve(c: &Common) -> Result<()> {
    let problem = Problem::new(GridConfig::load(&c.config)?)?;
    let start = problem.world.start_state();
    let s0 = problem.index(&start)?;
    let summary = match c.solver {
        Solver::Vi => {
            let rep = value_iteration(&problem.flat, c.tol, c.max_iters)?;
            c.check(rep.converged, rep.iterations, rep.bellman_residual)?;
            serde_json::json!({
                "solver": "vi",
                "states": problem.flat.state_count(),
                "value": rep.value_function.get(s0),
                "iterations": rep.iterations,
                "converged": rep.converged,
                "wall_time_s": rep.wall_time.as_secs_f64(),
            })
        }
        Solver::BlVi => {
            let mission = MissionSpec::from_config(problem.world.config());
            let bp = solve_bilevel(problem.world.clone(), mission, c.heuristic(), c.settings())?;
            bp.presolve()?;
            c.check(bp.converged(), bp.hl_report.iterations, bp.hl_report.bellman_residual)?;
            serde_json::json!({
                "solver": "bl_vi",
                "hl_states": bp.hl_mdp.state_count(),
                "hl_value": bp.hl_report.value_function.get(s0),
                "hl_iterations": bp.hl_report.iterations,
                "ll_solves": bp.ll_solve_count(),
                "converged": bp.converged(),
                "wall_time_s": bp.aggregate_wall_time().as_secs_f64(),
            })
        }
        Solver::Qlearning | Solver::Sarsa => {
            let cfg = learn_config(c, &problem)?;
            let res = if c.solver == Solver::Qlearning { q_learning(&problem.flat, &cfg)? } else { sarsa(&problem.flat, &cfg)? };
            serde_json::json!({
                "solver": if c.solver == Solver::Qlearning { "qlearning" } else { "sarsa" },
                "states": problem.flat.state_count(),
                "value": res.q.get(s0, res.policy.action(s0)),
                "episodes": cfg.episodes,
                "policy_stable": res.policy_stable,
                "wall_time_s": res.wall_time.as_secs_f64(),
            })
        }
    };
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    if let Some(p) = c.output("solve", "json") {
        write(&p, &(text + "\n"))?;
    }
    Ok(())
}

fn cmd_simulate(c: &Common) -> Result<()> {
    let problem = Problem::new(GridConfig::load(&c.config)?)?;
    let traces = rollouts(c, &problem, c.n_sims.unwrap_or(500).max(1))?;
    let returns: Vec<f64> = traces.iter().map(|t| t.discounted_return).collect();
    let (mean, se) = summarize(&returns);
    println!("mean_return {mean} std_error {se} n {}", returns.len());
    if let Some(p) = c.output("simulate", "json") {
        let body = serde_json::json!({ "mean_return": mean, "std_error": se, "first_trace": traces[0] });
        write(&p, &(serde_json::to_string_pretty(&body)? + "\n"))?;
    }
    Ok(())
}

fn output_format(f: Option<Format>) -> Result<OutputFormat> {
    match f.unwrap_or(Format::Csv) {
        Format::Csv => Ok(OutputFormat::Csv),
        Format::Json => Ok(OutputFormat::Json),
        Format::Svg => Ok(OutputFormat::Svg),
        Format::Ascii => Err(Error::Config("ascii output is only available for render".into())),
    }
}

fn cmd_tradeoff(c: &Common) -> Result<()> {
    let mut spec = ExperimentSpec::load(&c.config)?;
    spec.base_seed = c.seed;
    if let Some(n) = c.n_sims {
        spec.n_sims = n;
    }
    let format = output_format(c.format)?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    let rows = run_tradeoff(&spec, base)?;
    for r in &rows {
        println!(
            "{:<9} cap {:>5}  time {:>10.4}s  return {:>10.4} ± {:.4}  converged {}",
            r.solver.tag(),
            r.iter_cap,
            r.wall_time_s,
            r.mean_return,
            r.std_error,
            r.converged
        );
    }
    if let Some(p) = c.output("tradeoff", format.extension()) {
        emit(&rows, format, &p)?;
    }
    if c.require_converged {
        if let Some(r) = rows.iter().rfind(|r| r.solver != SolverKind::Qlearning && r.solver != SolverKind::Sarsa) {
            c.check(r.converged, r.iter_cap, f64::NAN)?;
        }
    }
    Ok(())
}

fn cmd_sweep(c: &Common) -> Result<()> {
    let text = std::fs::read_to_string(&c.config).map_err(|e| Error::Io { path: c.config.clone(), source: e })?;
    let mut spec: SweepSpec = serde_json::from_str(&text)?;
    spec.seed = c.seed;
    if let Some(n) = c.n_sims {
        spec.n_sims = n;
    }
    let rows = run_complexity_sweep(&spec)?;
    for r in &rows {
        match &r.error {
            None => println!(
                "size {:>3}  states {:>9}  reward_ratio {:.4}  time_ratio {:.4}",
                r.size, r.flat_states, r.reward_ratio, r.time_ratio
            ),
            Some(e) => println!("size {:>3}  failed: {e}", r.size),
        }
    }
    let (ext, body) = match output_format(c.format)? {
        OutputFormat::Json => ("json", serde_json::to_string_pretty(&rows)? + "\n"),
        OutputFormat::Csv => ("csv", sweep_to_csv(&rows)?),
        OutputFormat::Svg => return Err(Error::Config("sweep results are written as csv or json".into())),
    };
    if let Some(p) = c.output("sweep", ext) {
        write(&p, &body)?;
    }
    Ok(())
}

fn cmd_contingency(c: &Common, states: Option<&Path>, random: usize) -> Result<()> {
    let problem = Problem::new(GridConfig::load(&c.config)?)?;
    let list: Vec<RoverState> = match states {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.into(), source: e })?;
            serde_json::from_str(&text)?
        }
        None => StartStates::Sample(random).resolve(&problem.world, c.seed)?,
    };
    let solver = match c.solver {
        Solver::Vi => ContingencySolver::Vi,
        Solver::BlVi => ContingencySolver::BlVi,
        _ => return Err(Error::Config("contingency supports vi and bl_vi".into())),
    };
    let report = run_contingency(&problem, &list, solver, c.heuristic(), c.settings(), c.seed)?;
    let failed = report.entries.iter().filter(|e| e.error.is_some()).count();
    let latency: f64 = report.entries.iter().map(|e| e.latency_s).sum::<f64>() / report.entries.len().max(1) as f64;
    println!(
        "setup {:.4}s  queries {}  mean latency {:.6}s  new ll solves {}  failed {failed}",
        report.setup_s,
        report.entries.len(),
        latency,
        report.total_new_ll_solves()
    );
    if let Some(p) = c.output("contingency", "json") {
        write(&p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn cmd_render(c: &Common, shadow_t: Option<u16>) -> Result<()> {
    let problem = Problem::new(GridConfig::load(&c.config)?)?;
    let trace = rollouts(c, &problem, 1)?.remove(0);
    let (format, ext) = match c.format {
        Some(Format::Svg) => (RenderFormat::Svg, "svg"),
        None | Some(Format::Ascii) => (RenderFormat::Ascii, "txt"),
        Some(_) => return Err(Error::Config("render writes ascii or svg".into())),
    };
    let body = render(&problem.world, &trace, format, shadow_t)?;
    match c.output("render", ext) {
        Some(p) => write(&p, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Tradeoff(c) => cmd_tradeoff(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Contingency { common, states, random } => cmd_contingency(common, states.as_deref(), *random),
        Command::Render { common, shadow_t } => cmd_render(common, *shadow_t),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
