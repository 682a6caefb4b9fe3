//! Model-free tabular baselines: Q-learning and SARSA with ε-greedy exploration.
//!
//! Both learners only sample the transition table; they never read
//! probabilities directly.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, ActionIndex, Policy, StateIndex, TabularMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    pub episodes: usize,
    pub step_cap: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub initial_q: f64,
    pub seed: u64,
    /// Episode start; `None` draws a uniformly random non-terminal state.
    pub start: Option<StateIndex>,
    /// Episodes between learning-curve samples; 0 disables the curve.
    pub curve_interval: usize,
    pub eval_start: Option<StateIndex>,
    pub eval_rollouts: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            episodes: 50_000,
            step_cap: 10_000,
            learning_rate: 0.1,
            epsilon: 0.2,
            epsilon_decay: 0.999,
            initial_q: 0.0,
            seed: 0,
            start: None,
            curve_interval: 0,
            eval_start: None,
            eval_rollouts: 20,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("learn config: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must be in [0, 1]");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must be in (0, 1]");
        }
        if !self.initial_q.is_finite() {
            return bad("initial_q must be finite");
        }
        if self.step_cap == 0 {
            return bad("step_cap must be at least 1");
        }
        for s in [self.start, self.eval_start].into_iter().flatten() {
            if s >= mdp.state_count() {
                return bad("start state out of range");
            }
        }
        if self.curve_interval > 0 && self.eval_rollouts == 0 {
            return bad("eval_rollouts must be at least 1 when the curve is enabled");
        }
        Ok(())
    }
}

/// Dense `state × action` table of action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub state_count: usize,
    pub action_count: usize,
    pub q: Vec<f64>,
}

impl QTable {
    pub fn new(state_count: usize, action_count: usize, initial: f64) -> Self {
        QTable {
            state_count,
            action_count,
            q: vec![initial; state_count * action_count],
        }
    }

    #[inline]
    pub fn get(&self, s: StateIndex, a: ActionIndex) -> f64 {
        self.q[s * self.action_count + a]
    }

    #[inline]
    fn get_mut(&mut self, s: StateIndex, a: ActionIndex) -> &mut f64 {
        &mut self.q[s * self.action_count + a]
    }

    /// Greedy legal action and its value; lowest index wins ties.
    fn greedy(&self, mdp: &TabularMdp, s: StateIndex) -> Option<(ActionIndex, f64)> {
        let mut best: Option<(ActionIndex, f64)> = None;
        for a in 0..self.action_count {
            if mdp.has_action(s, a) {
                let q = self.get(s, a);
                if best.is_none_or(|(_, b)| q > b) {
                    best = Some((a, q));
                }
            }
        }
        best
    }

    pub fn greedy_policy(&self, mdp: &TabularMdp) -> Policy {
        let actions = (0..self.state_count)
            .map(|s| {
                if mdp.is_terminal(s) {
                    0
                } else {
                    self.greedy(mdp, s).map_or(0, |(a, _)| a)
                }
            })
            .collect();
        Policy { actions }
    }

    /// Raw little-endian bytes of the table, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.q.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    /// Training time so far, excluding evaluation.
    pub wall_time_s: f64,
    pub mean_return: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub q: QTable,
    pub policy: Policy,
    pub learning_curve: Vec<CurvePoint>,
    pub wall_time: Duration,
    /// Greedy policy unchanged over the final tenth of training.
    pub policy_stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    MaxNext,
    OnPolicy,
}

/// Off-policy TD control with a max-over-next-actions target.
pub fn q_learning(mdp: &TabularMdp, cfg: &LearnConfig) -> Result<LearnResult> {
    learn(mdp, cfg, Target::MaxNext)
}

/// On-policy TD control; the target uses the next action drawn from the behavior policy.
pub fn sarsa(mdp: &TabularMdp, cfg: &LearnConfig) -> Result<LearnResult> {
    learn(mdp, cfg, Target::OnPolicy)
}

fn choose(
    rng: &mut ChaCha8Rng,
    mdp: &TabularMdp,
    q: &QTable,
    s: StateIndex,
    epsilon: f64,
    legal: &mut Vec<ActionIndex>,
) -> Option<ActionIndex> {
    let u: f64 = rng.gen();
    if u < epsilon {
        legal.clear();
        legal.extend(mdp.legal_actions(s));
        if legal.is_empty() {
            return None;
        }
        Some(legal[rng.gen_range(0..legal.len())])
    } else {
        q.greedy(mdp, s).map(|(a, _)| a)
    }
}

fn learn(mdp: &TabularMdp, cfg: &LearnConfig, target: Target) -> Result<LearnResult> {
    cfg.validate(mdp)?;
    let gamma = mdp.discount();
    let mut q = QTable::new(mdp.state_count(), mdp.action_count(), cfg.initial_q);
    let starts: Vec<StateIndex> = match cfg.start {
        Some(s) => vec![s],
        None => (0..mdp.state_count()).filter(|&s| !mdp.is_terminal(s)).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epsilon = cfg.epsilon;
    let mut legal = Vec::with_capacity(mdp.action_count());
    let mut curve = Vec::new();
    let mut training = Duration::ZERO;
    let snapshot_at = cfg.episodes - cfg.episodes / 10;
    let mut snapshot: Option<Policy> = None;
    let eval_start = cfg.eval_start.or(cfg.start).unwrap_or(0);

    let mut clock = Instant::now();
    for episode in 0..cfg.episodes {
        if episode == snapshot_at {
            snapshot = Some(q.greedy_policy(mdp));
        }
        if starts.is_empty() {
            break;
        }
        let mut s = starts[rng.gen_range(0..starts.len())];
        let mut a = if mdp.is_terminal(s) {
            None
        } else {
            choose(&mut rng, mdp, &q, s, epsilon, &mut legal)
        };
        let mut steps = 0;
        while let Some(action) = a {
            if steps >= cfg.step_cap {
                break;
            }
            steps += 1;
            let entry = mdp::rollout::sample_entry(&mut rng, mdp.transitions(s, action))
                .ok_or_else(|| Error::contract(format!("no transitions for ({s}, {action})")))?;
            let next = entry.next;
            let discount = gamma.powi(entry.steps as i32);
            let (bootstrap, next_action) = if mdp.is_terminal(next) {
                (0.0, None)
            } else {
                match target {
                    Target::MaxNext => (q.greedy(mdp, next).map_or(0.0, |(_, v)| v), None),
                    Target::OnPolicy => {
                        let na = choose(&mut rng, mdp, &q, next, epsilon, &mut legal);
                        (na.map_or(0.0, |na| q.get(next, na)), na)
                    }
                }
            };
            let cell = q.get_mut(s, action);
            *cell += cfg.learning_rate * (entry.reward + discount * bootstrap - *cell);
            s = next;
            a = match target {
                Target::OnPolicy => next_action,
                Target::MaxNext if mdp.is_terminal(next) => None,
                Target::MaxNext => choose(&mut rng, mdp, &q, next, epsilon, &mut legal),
            };
        }
        epsilon *= cfg.epsilon_decay;

        if cfg.curve_interval > 0 && (episode + 1) % cfg.curve_interval == 0 {
            training += clock.elapsed();
            let policy = q.greedy_policy(mdp);
            let (mean_return, std_error) =
                mdp::evaluate_policy(mdp, &policy, eval_start, cfg.eval_rollouts, cfg.seed)?;
            curve.push(CurvePoint {
                episode: episode + 1,
                wall_time_s: training.as_secs_f64(),
                mean_return,
                std_error,
            });
            clock = Instant::now();
        }
    }
    training += clock.elapsed();

    let policy = q.greedy_policy(mdp);
    let policy_stable = snapshot.is_none_or(|p| p == policy);
    Ok(LearnResult {
        q,
        policy,
        learning_curve: curve,
        wall_time: training,
        policy_stable,
    })
}
