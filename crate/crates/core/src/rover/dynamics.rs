use serde::{Deserialize, Serialize};

use super::config::{Cell, GridConfig};
use super::state::{RoverAction, RoverState, StateIndexer};
use crate::error::Result;

/// Successor of a rover transition: another grid state, or the end-of-episode sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Successor {
    State(RoverState),
    End,
}

impl Successor {
    pub fn state(&self) -> Option<&RoverState> {
        match self {
            Successor::State(s) => Some(s),
            Successor::End => None,
        }
    }
}

/// Reward split into target and obstacle parts; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    pub total: f64,
    pub targets: f64,
    pub obstacles: f64,
}

impl RewardParts {
    pub fn new(targets: f64, obstacles: f64) -> Self {
        RewardParts {
            total: targets + obstacles,
            targets,
            obstacles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: Successor,
    pub probability: f64,
    pub reward: RewardParts,
}

/// A validated [`GridConfig`] with its lookup tables precomputed.
#[derive(Debug, Clone)]
pub struct RoverWorld {
    cfg: GridConfig,
    indexer: StateIndexer,
    obstacle: Vec<bool>,
    /// Obstacle prefix counts along each row (`x`) and each column (`y`).
    row_prefix: Vec<u32>,
    col_prefix: Vec<u32>,
    shadow: Vec<bool>,
    target_at: Vec<Option<u8>>,
    /// Science targets touching each cell, as a bitmask.
    adjacent: Vec<u32>,
    goal_mask: u32,
    end_charge: Vec<f64>,
    durations: Vec<(u16, f64)>,
}

impl RoverWorld {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.width as usize;
        let h = cfg.height as usize;
        let cells = w * h;
        let idx = |c: Cell| (c.x as usize - 1) * h + (c.y as usize - 1);

        let mut obstacle = vec![false; cells];
        for c in &cfg.shadows.static_obstacles {
            obstacle[idx(*c)] = true;
        }

        let mut row_prefix = vec![0u32; h * (w + 1)];
        for y in 0..h {
            for x in 0..w {
                row_prefix[y * (w + 1) + x + 1] = row_prefix[y * (w + 1) + x] + obstacle[x * h + y] as u32;
            }
        }
        let mut col_prefix = vec![0u32; w * (h + 1)];
        for x in 0..w {
            for y in 0..h {
                col_prefix[x * (h + 1) + y + 1] = col_prefix[x * (h + 1) + y] + obstacle[x * h + y] as u32;
            }
        }

        let steps = cfg.horizon as usize + 1;
        let mut shadow = vec![false; steps * cells];
        for t in 0..steps {
            let overrides: Vec<_> = cfg
                .shadows
                .overrides
                .iter()
                .filter(|o| o.t as usize == t)
                .collect();
            let layer = &mut shadow[t * cells..(t + 1) * cells];
            if !overrides.is_empty() {
                for o in overrides {
                    for c in &o.cells {
                        layer[idx(*c)] = true;
                    }
                }
                continue;
            }
            for sweep in &cfg.shadows.sweeps {
                let lo = (sweep.start_column + sweep.velocity * t as f64).floor() as i64;
                let hi = lo + sweep.width as i64;
                let (y0, y1) = sweep.rows.map_or((1, cfg.height), |[a, b]| (a, b));
                for x in lo.max(1)..hi.min(cfg.width as i64 + 1) {
                    for y in y0.max(1)..=y1.min(cfg.height) {
                        layer[idx(Cell::new(x as u16, y))] = true;
                    }
                }
            }
        }

        let mut target_at = vec![None; cells];
        let mut adjacent = vec![0u32; cells];
        let mut goal_mask = 0u32;
        let mut goals = Vec::new();
        for t in &cfg.targets {
            target_at[idx(t.cell)] = Some(t.id as u8);
            if t.is_hibernation {
                goal_mask |= 1 << t.id;
                goals.push(t.cell);
            }
        }
        for x in 1..=cfg.width {
            for y in 1..=cfg.height {
                let here = Cell::new(x, y);
                for t in cfg.targets.iter().filter(|t| !t.is_hibernation) {
                    if here.touches(t.cell) {
                        adjacent[idx(here)] |= 1 << t.id;
                    }
                }
            }
        }

        let mut end_charge = vec![0.0; cells];
        for x in 1..=cfg.width {
            for y in 1..=cfg.height {
                let here = Cell::new(x, y);
                let distance = goals.iter().map(|g| here.manhattan(*g)).min();
                end_charge[idx(here)] = match distance {
                    Some(0) => 0.0,
                    Some(d) => cfg.end_penalty * d as f64,
                    None => cfg.end_penalty,
                };
            }
        }

        let durations = cfg
            .activity_durations
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i as u16 + 1, p))
            .collect();

        Ok(RoverWorld {
            indexer: StateIndexer::new(&cfg),
            cfg,
            obstacle,
            row_prefix,
            col_prefix,
            shadow,
            target_at,
            adjacent,
            goal_mask,
            end_charge,
            durations,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    pub fn horizon(&self) -> u16 {
        self.cfg.horizon
    }

    pub fn simplified(&self) -> bool {
        self.cfg.simplified
    }

    pub fn actions(&self) -> &'static [RoverAction] {
        RoverAction::available(self.cfg.simplified)
    }

    pub fn start_state(&self) -> RoverState {
        let s = self.cfg.start;
        RoverState::at(s.x, s.y, s.t)
    }

    pub fn goal_mask(&self) -> u32 {
        self.goal_mask
    }

    pub fn durations(&self) -> &[(u16, f64)] {
        &self.durations
    }

    #[inline]
    fn cell_index(&self, x: u16, y: u16) -> usize {
        (x as usize - 1) * self.cfg.height as usize + (y as usize - 1)
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacle[self.cell_index(c.x, c.y)]
    }

    /// Obstacles in row `y` with `x` in `lo..=hi`.
    pub fn obstacles_in_row(&self, y: u16, lo: u16, hi: u16) -> u32 {
        if lo > hi {
            return 0;
        }
        let base = (y as usize - 1) * (self.cfg.width as usize + 1);
        self.row_prefix[base + hi as usize] - self.row_prefix[base + lo as usize - 1]
    }

    /// Obstacles in column `x` with `y` in `lo..=hi`.
    pub fn obstacles_in_column(&self, x: u16, lo: u16, hi: u16) -> u32 {
        if lo > hi {
            return 0;
        }
        let base = (x as usize - 1) * (self.cfg.height as usize + 1);
        self.col_prefix[base + hi as usize] - self.col_prefix[base + lo as usize - 1]
    }

    pub fn is_shadowed(&self, c: Cell, t: u16) -> bool {
        let cells = self.cfg.width as usize * self.cfg.height as usize;
        let t = t.min(self.cfg.horizon) as usize;
        self.shadow[t * cells + self.cell_index(c.x, c.y)]
    }

    /// Obstacle and shadow penalty for occupying `c` at time `t`.
    pub fn cell_penalty(&self, c: Cell, t: u16) -> f64 {
        let sh = &self.cfg.shadows;
        let mut p = 0.0;
        if self.is_obstacle(c) {
            p += sh.static_penalty;
        }
        if self.is_shadowed(c, t) {
            p += sh.shadow_penalty;
        }
        p
    }

    pub fn target_at(&self, c: Cell) -> Option<usize> {
        self.target_at[self.cell_index(c.x, c.y)].map(usize::from)
    }

    /// Penalty charged when the horizon runs out with the rover at `c`.
    pub fn end_charge(&self, c: Cell) -> f64 {
        self.end_charge[self.cell_index(c.x, c.y)]
    }

    /// Bitmask of targets that are fully done in `s`.
    pub fn completed(&self, s: &RoverState) -> u32 {
        if self.cfg.simplified {
            s.visited
        } else {
            s.drilled
        }
    }

    /// Arrival at a hibernation area inside its window ends the episode.
    pub fn is_terminal(&self, s: &RoverState) -> bool {
        match self.target_at(s.cell()) {
            Some(i) => {
                let t = &self.cfg.targets[i];
                t.is_hibernation && t.in_window(s.t, self.cfg.horizon)
            }
            None => false,
        }
    }

    fn moved(&self, s: &RoverState, a: RoverAction) -> (u16, u16) {
        let (w, h) = (self.cfg.width, self.cfg.height);
        match a {
            RoverAction::Up if s.y < h => (s.x, s.y + 1),
            RoverAction::Down if s.y > 1 => (s.x, s.y - 1),
            RoverAction::Left if s.x > 1 => (s.x - 1, s.y),
            RoverAction::Right if s.x < w => (s.x + 1, s.y),
            _ => (s.x, s.y),
        }
    }

    /// Successor rover state for a given completion time; no reward.
    fn advance(&self, s: &RoverState, a: RoverAction, (x, y): (u16, u16), t: u16) -> RoverState {
        let mut n = RoverState { x, y, t, ..*s };
        let horizon = self.cfg.horizon;
        if !self.cfg.simplified {
            let here = self.cell_index(s.x, s.y);
            match a {
                RoverAction::Measure => n.measured |= self.adjacent[here],
                RoverAction::Drill => {
                    if let Some(i) = self.target_at[here] {
                        let bit = 1u32 << i;
                        let target = &self.cfg.targets[i as usize];
                        if bit & self.goal_mask == 0
                            && s.measured & bit != 0
                            && s.drilled & bit == 0
                            && target.in_window(s.t, horizon)
                        {
                            n.drilled |= bit;
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(i) = self.target_at[self.cell_index(x, y)] {
            let bit = 1u32 << i;
            let target = &self.cfg.targets[i as usize];
            if target.in_window(t, horizon) {
                if self.cfg.simplified {
                    n.visited |= bit;
                } else if target.is_hibernation {
                    n.measured |= bit;
                    n.drilled |= bit;
                }
            }
        }
        n
    }

    /// Reward of the transition `s --a--> next`.
    ///
    /// Target rewards are paid on the transition where a tracking bit flips;
    /// obstacle rewards depend on the arrival cell and time.
    pub fn reward(&self, s: &RoverState, _a: RoverAction, next: &Successor) -> RewardParts {
        match next {
            Successor::End => RewardParts::new(0.0, self.end_charge(s.cell())),
            Successor::State(n) => {
                let mut targets = 0.0;
                for (i, t) in self.cfg.targets.iter().enumerate() {
                    let bit = 1u32 << i;
                    if self.cfg.simplified {
                        if n.visited & !s.visited & bit != 0 {
                            targets += t.payout();
                        }
                    } else {
                        if n.measured & !s.measured & bit != 0 {
                            targets += t.measure_reward;
                        }
                        if n.drilled & !s.drilled & bit != 0 {
                            targets += t.drill_reward;
                        }
                    }
                }
                RewardParts::new(targets, self.cell_penalty(n.cell(), n.t))
            }
        }
    }

    /// Appends the successor distribution of `(s, a)` to `out`.
    ///
    /// Moves are deterministic and clamp at the grid edge; MEASURE and DRILL
    /// take 1-3 timesteps per `activity_durations`. Time is capped at the
    /// horizon; a state at the horizon moves to the sink. Activities are
    /// unavailable in simplified mode and produce nothing.
    pub fn step_into(&self, s: &RoverState, a: RoverAction, out: &mut Vec<StepOutcome>) {
        let horizon = self.cfg.horizon;
        if s.t >= horizon {
            out.push(StepOutcome {
                next: Successor::End,
                probability: 1.0,
                reward: self.reward(s, a, &Successor::End),
            });
            return;
        }
        if a.is_move() {
            let next = Successor::State(self.advance(s, a, self.moved(s, a), s.t + 1));
            out.push(StepOutcome {
                next,
                probability: 1.0,
                reward: self.reward(s, a, &next),
            });
            return;
        }
        if self.cfg.simplified {
            return;
        }
        let first = out.len();
        for &(d, p) in &self.durations {
            let t = (s.t + d).min(horizon);
            let next = Successor::State(self.advance(s, a, (s.x, s.y), t));
            let reward = self.reward(s, a, &next);
            if let Some(prev) = out[first..]
                .iter_mut()
                .find(|o| o.next == next && o.reward == reward)
            {
                prev.probability += p;
            } else {
                out.push(StepOutcome {
                    next,
                    probability: p,
                    reward,
                });
            }
        }
    }

    pub fn step(&self, s: &RoverState, a: RoverAction) -> Vec<StepOutcome> {
        let mut out = Vec::with_capacity(3);
        self.step_into(s, a, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rover::config::{ShadowOverride, ShadowSweep, StartState, Target};

    fn world(simplified: bool) -> RoverWorld {
        RoverWorld::new(GridConfig {
            schema_version: 1,
            width: 10,
            height: 10,
            horizon: 20,
            discount: 0.95,
            simplified,
            start: StartState { x: 1, y: 1, t: 0 },
            targets: vec![
                Target::science(0, Cell::new(5, 5), 5.0, 50.0),
                Target::hibernation(1, Cell::new(9, 9), 10.0),
            ],
            shadows: Default::default(),
            activity_durations: [1.0 / 3.0; 3],
            end_penalty: -5.0,
        })
        .unwrap()
    }

    #[test]
    fn move_is_deterministic() {
        let w = world(false);
        let out = w.step(&RoverState::at(2, 3, 5), RoverAction::Right);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].next, Successor::State(RoverState::at(3, 3, 6)));
        assert_eq!(out[0].probability, 1.0);
    }

    #[test]
    fn blocked_move_stays_and_advances_time() {
        let w = world(false);
        let out = w.step(&RoverState::at(10, 3, 4), RoverAction::Right);
        assert_eq!(out[0].next, Successor::State(RoverState::at(10, 3, 5)));
    }

    #[test]
    fn measure_has_three_uniform_durations() {
        let w = world(false);
        let s = RoverState::at(4, 4, 2);
        let out = w.step(&s, RoverAction::Measure);
        assert_eq!(out.len(), 3);
        let total: f64 = out.iter().map(|o| o.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (o, t) in out.iter().zip([3, 4, 5]) {
            let n = o.next.state().unwrap();
            assert_eq!((n.t, n.measured), (t, 1));
            assert!((o.probability - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn durations_merge_at_horizon() {
        let w = world(false);
        let out = w.step(&RoverState::at(4, 4, 19), RoverAction::Measure);
        assert_eq!(out.len(), 1);
        assert!((out[0].probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drill_needs_measurement() {
        let w = world(false);
        let out = w.step(&RoverState::at(5, 5, 0), RoverAction::Drill);
        assert!(out.iter().all(|o| o.next.state().unwrap().drilled == 0));
        assert!(out.iter().all(|o| o.reward.targets == 0.0));

        let measured = RoverState {
            measured: 1,
            ..RoverState::at(5, 5, 0)
        };
        let out = w.step(&measured, RoverAction::Drill);
        assert!(out.iter().all(|o| o.next.state().unwrap().drilled == 1));
        assert!(out.iter().all(|o| o.reward.targets == 50.0));
    }

    #[test]
    fn measure_from_diagonal_neighbour_counts() {
        let w = world(false);
        let out = w.step(&RoverState::at(6, 6, 0), RoverAction::Measure);
        assert!(out.iter().all(|o| o.next.state().unwrap().measured == 1));
        assert!(out.iter().all(|o| o.reward.targets == 5.0));
        let out = w.step(&RoverState::at(7, 5, 0), RoverAction::Measure);
        assert!(out.iter().all(|o| o.next.state().unwrap().measured == 0));
    }

    #[test]
    fn hibernation_arrival_is_terminal_and_paid() {
        let w = world(false);
        let out = w.step(&RoverState::at(8, 9, 3), RoverAction::Right);
        let n = *out[0].next.state().unwrap();
        assert!(w.is_terminal(&n));
        assert_eq!(out[0].reward.targets, 10.0);
    }

    #[test]
    fn horizon_moves_to_sink_with_distance_penalty() {
        let w = world(true);
        let out = w.step(&RoverState::at(6, 9, 20), RoverAction::Up);
        assert_eq!(out[0].next, Successor::End);
        assert_eq!(out[0].reward.obstacles, -15.0);
    }

    #[test]
    fn simplified_mode_has_no_activities() {
        let w = world(true);
        assert!(w.step(&RoverState::at(1, 1, 0), RoverAction::Measure).is_empty());
        let out = w.step(&RoverState::at(4, 5, 0), RoverAction::Right);
        assert_eq!(out[0].next.state().unwrap().visited, 1);
        assert_eq!(out[0].reward.targets, 55.0);
    }

    #[test]
    fn shadow_sweep_and_override() {
        let mut cfg = world(true).config().clone();
        cfg.targets.clear();
        cfg.width = 3;
        cfg.height = 3;
        cfg.horizon = 3;
        cfg.shadows.sweeps.push(ShadowSweep {
            start_column: 1.0,
            velocity: 1.0,
            width: 1,
            rows: None,
        });
        cfg.shadows.overrides.push(ShadowOverride {
            t: 3,
            cells: vec![Cell::new(1, 1)],
        });
        let w = RoverWorld::new(cfg).unwrap();
        assert!(w.is_shadowed(Cell::new(1, 2), 0));
        assert!(w.is_shadowed(Cell::new(2, 3), 1));
        assert!(!w.is_shadowed(Cell::new(1, 2), 1));
        assert!(w.is_shadowed(Cell::new(1, 1), 3));
        assert!(w.is_shadowed(Cell::new(3, 1), 2));
        let out = w.step(&RoverState::at(1, 2, 0), RoverAction::Right);
        assert_eq!(out[0].reward, RewardParts::new(0.0, -5.0));
    }
}
