//! JSON problem configuration (`schema_version` 1).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Full-mode tracking tables are dense over `4^targets`; this bounds them.
pub const MAX_TARGETS: usize = 10;

/// A grid cell, 1-based. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u16; 2]", into = "[u16; 2]")]
pub struct Cell {
    pub x: u16,
    pub y: u16,
}

impl Cell {
    pub fn new(x: u16, y: u16) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        (self.x.abs_diff(other.x) + self.y.abs_diff(other.y)) as u32
    }

    /// Same cell or one of its eight neighbours.
    pub fn touches(self, other: Cell) -> bool {
        self.x.abs_diff(other.x) <= 1 && self.y.abs_diff(other.y) <= 1
    }
}

impl From<[u16; 2]> for Cell {
    fn from([x, y]: [u16; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [u16; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

fn default_measure_reward() -> f64 {
    5.0
}
fn default_drill_reward() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub id: usize,
    pub cell: Cell,
    #[serde(default = "default_measure_reward")]
    pub measure_reward: f64,
    #[serde(default = "default_drill_reward")]
    pub drill_reward: f64,
    /// `[t_open, t_close]`; defaults to the whole horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[u16; 2]>,
    /// Hibernation areas are goals: arriving inside the window ends the episode.
    #[serde(default)]
    pub is_hibernation: bool,
}

impl Target {
    pub fn hibernation(id: usize, cell: Cell, reward: f64) -> Self {
        Target {
            id,
            cell,
            measure_reward: 0.0,
            drill_reward: reward,
            window: None,
            is_hibernation: true,
        }
    }

    pub fn science(id: usize, cell: Cell, measure_reward: f64, drill_reward: f64) -> Self {
        Target {
            id,
            cell,
            measure_reward,
            drill_reward,
            window: None,
            is_hibernation: false,
        }
    }

    pub fn window_bounds(&self, horizon: u16) -> (u16, u16) {
        self.window.map_or((0, horizon), |[a, b]| (a, b))
    }

    pub fn in_window(&self, t: u16, horizon: u16) -> bool {
        let (open, close) = self.window_bounds(horizon);
        (open..=close).contains(&t)
    }

    /// Total payout for completing the target.
    pub fn payout(&self) -> f64 {
        self.measure_reward + self.drill_reward
    }
}

/// Vertical band of shadow sweeping along x: at time `t` it covers columns
/// `floor(start_column + velocity * t) .. + width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowSweep {
    pub start_column: f64,
    pub velocity: f64,
    pub width: u16,
    /// Inclusive `[y_min, y_max]`; all rows when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<[u16; 2]>,
}

/// Replaces the shadowed set at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowOverride {
    pub t: u16,
    pub cells: Vec<Cell>,
}

fn default_static_penalty() -> f64 {
    -10.0
}
fn default_shadow_penalty() -> f64 {
    -5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowSchedule {
    #[serde(default)]
    pub static_obstacles: Vec<Cell>,
    #[serde(default = "default_static_penalty")]
    pub static_penalty: f64,
    #[serde(default = "default_shadow_penalty")]
    pub shadow_penalty: f64,
    #[serde(default)]
    pub sweeps: Vec<ShadowSweep>,
    #[serde(default)]
    pub overrides: Vec<ShadowOverride>,
}

impl Default for ShadowSchedule {
    fn default() -> Self {
        ShadowSchedule {
            static_obstacles: Vec::new(),
            static_penalty: default_static_penalty(),
            shadow_penalty: default_shadow_penalty(),
            sweeps: Vec::new(),
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartState {
    pub x: u16,
    pub y: u16,
    #[serde(default)]
    pub t: u16,
}

fn default_start() -> StartState {
    StartState { x: 1, y: 1, t: 0 }
}
fn default_durations() -> [f64; 3] {
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
}
fn default_end_penalty() -> f64 {
    -5.0
}
fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub width: u16,
    pub height: u16,
    pub horizon: u16,
    pub discount: f64,
    /// Visit-only variant: four move actions, `visited` tracking.
    #[serde(default)]
    pub simplified: bool,
    #[serde(default = "default_start")]
    pub start: StartState,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub shadows: ShadowSchedule,
    /// Probability of MEASURE/DRILL taking 1, 2 or 3 timesteps.
    #[serde(default = "default_durations")]
    pub activity_durations: [f64; 3],
    /// Charged per timestep the rover would still need, after the horizon,
    /// to reach the nearest hibernation area.
    #[serde(default = "default_end_penalty")]
    pub end_penalty: f64,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn in_grid(&self, c: Cell) -> bool {
        (1..=self.width).contains(&c.x) && (1..=self.height).contains(&c.y)
    }

    pub fn deterministic_durations(&self) -> bool {
        self.activity_durations.iter().filter(|&&p| p > 0.0).count() <= 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.width == 0 || self.height == 0 {
            return fail("width and height must be at least 1".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.discount));
        }
        let start = Cell::new(self.start.x, self.start.y);
        if !self.in_grid(start) || self.start.t > self.horizon {
            return fail("start state outside the grid or horizon".into());
        }
        if self.targets.len() > MAX_TARGETS {
            return fail(format!("at most {MAX_TARGETS} targets are supported"));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.id != i {
                return fail(format!("target ids must be dense 0..N in order; found {} at {i}", t.id));
            }
            if !self.in_grid(t.cell) {
                return fail(format!("target {} cell outside the grid", t.id));
            }
            if self.targets[..i].iter().any(|o| o.cell == t.cell) {
                return fail(format!("target {} shares a cell with another target", t.id));
            }
            let (open, close) = t.window_bounds(self.horizon);
            if open > close || close > self.horizon {
                return fail(format!("target {} window [{open}, {close}] invalid", t.id));
            }
            if !t.measure_reward.is_finite() || !t.drill_reward.is_finite() {
                return fail(format!("target {} rewards must be finite", t.id));
            }
        }
        let sh = &self.shadows;
        if !(sh.static_penalty <= 0.0 && sh.shadow_penalty <= 0.0) {
            return fail("obstacle and shadow penalties must be <= 0".into());
        }
        if !(self.end_penalty <= 0.0) {
            return fail("end_penalty must be <= 0".into());
        }
        for c in sh
            .static_obstacles
            .iter()
            .chain(sh.overrides.iter().flat_map(|o| o.cells.iter()))
        {
            if !self.in_grid(*c) {
                return fail(format!("obstacle or shadow cell [{}, {}] outside the grid", c.x, c.y));
            }
        }
        for o in &sh.overrides {
            if o.t > self.horizon {
                return fail(format!("shadow override at t={} beyond the horizon", o.t));
            }
        }
        for s in &sh.sweeps {
            if !s.start_column.is_finite() || !s.velocity.is_finite() {
                return fail("shadow sweep parameters must be finite".into());
            }
        }
        let weights = &self.activity_durations;
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail("activity_durations must be non-negative and sum to 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1, "width": 3, "height": 3, "horizon": 4, "discount": 0.9,
        "targets": [{"id": 0, "cell": [2, 2]}]
    }"#;

    #[test]
    fn defaults_are_applied() {
        let cfg = GridConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.targets[0].drill_reward, 50.0);
        assert_eq!(cfg.targets[0].measure_reward, 5.0);
        assert_eq!(cfg.shadows.static_penalty, -10.0);
        assert_eq!(cfg.end_penalty, -5.0);
        assert!(!cfg.simplified);
        assert_eq!(cfg.start, StartState { x: 1, y: 1, t: 0 });
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"discount\"", "\"colour\": 1, \"discount\"");
        assert!(matches!(GridConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(GridConfig::from_json(&text).is_err());
    }

    #[test]
    fn invariant_violations() {
        let base = GridConfig::from_json(MINIMAL).unwrap();
        let mut c = base.clone();
        c.targets[0].cell = Cell::new(4, 1);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.targets[0].window = Some([3, 2]);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.activity_durations = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.shadows.shadow_penalty = 1.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.targets[0].id = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = GridConfig::from_json(MINIMAL).unwrap();
        assert_eq!(GridConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
