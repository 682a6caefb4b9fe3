use serde::{Deserialize, Serialize};

use super::config::{Cell, GridConfig};
use crate::error::{Error, Result};
use crate::mdp::StateIndex;

/// Position, time and per-target tracking bits.
///
/// Full mode uses `measured`/`drilled`; simplified mode uses `visited`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoverState {
    pub x: u16,
    pub y: u16,
    pub t: u16,
    #[serde(default)]
    pub measured: u32,
    #[serde(default)]
    pub drilled: u32,
    #[serde(default)]
    pub visited: u32,
}

impl RoverState {
    pub fn at(x: u16, y: u16, t: u16) -> Self {
        RoverState {
            x,
            y,
            t,
            measured: 0,
            drilled: 0,
            visited: 0,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    pub fn tracking(&self) -> Tracking {
        Tracking {
            measured: self.measured,
            drilled: self.drilled,
            visited: self.visited,
        }
    }

    pub fn with_tracking(mut self, tr: Tracking) -> Self {
        self.measured = tr.measured;
        self.drilled = tr.drilled;
        self.visited = tr.visited;
        self
    }
}

/// Exploration history part of a [`RoverState`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tracking {
    pub measured: u32,
    pub drilled: u32,
    pub visited: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RoverAction {
    Up,
    Down,
    Left,
    Right,
    Measure,
    Drill,
}

impl RoverAction {
    /// Enumeration order; defines action indices and tie-breaking.
    pub const ALL: [RoverAction; 6] = [
        RoverAction::Up,
        RoverAction::Down,
        RoverAction::Left,
        RoverAction::Right,
        RoverAction::Measure,
        RoverAction::Drill,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_move(self) -> bool {
        self.index() < 4
    }

    /// Actions available in the given mode.
    pub fn available(simplified: bool) -> &'static [RoverAction] {
        if simplified {
            &Self::ALL[..4]
        } else {
            &Self::ALL
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoverAction::Up => "UP",
            RoverAction::Down => "DOWN",
            RoverAction::Left => "LEFT",
            RoverAction::Right => "RIGHT",
            RoverAction::Measure => "MEASURE",
            RoverAction::Drill => "DRILL",
        }
    }
}

const NO_COMBO: u32 = u32::MAX;

/// Bijection between rover states and dense indices.
///
/// Order is lexicographic in `(x, y, t, tracking)`; tracking combinations are
/// sorted by `(measured, drilled)` in full mode and by `visited` in simplified
/// mode. Full mode enumerates only combinations reachable from a fresh start:
/// a science target is `(0,0)`, `(1,0)` or `(1,1)`, a hibernation target
/// `(0,0)` or `(1,1)`. The end-of-episode sink takes the last index.
#[derive(Debug, Clone)]
pub struct StateIndexer {
    width: u16,
    height: u16,
    horizon: u16,
    simplified: bool,
    target_count: usize,
    combos: Vec<Tracking>,
    lookup: Vec<u32>,
}

impl StateIndexer {
    pub fn new(cfg: &GridConfig) -> Self {
        let k = cfg.targets.len();
        let mut combos = Vec::new();
        if cfg.simplified {
            for visited in 0..(1u32 << k) {
                combos.push(Tracking {
                    visited,
                    ..Tracking::default()
                });
            }
        } else {
            combos.push(Tracking::default());
            for (i, t) in cfg.targets.iter().enumerate() {
                let bit = 1u32 << i;
                let mut grown = Vec::with_capacity(combos.len() * 3);
                for c in &combos {
                    grown.push(*c);
                    if !t.is_hibernation {
                        grown.push(Tracking {
                            measured: c.measured | bit,
                            ..*c
                        });
                    }
                    grown.push(Tracking {
                        measured: c.measured | bit,
                        drilled: c.drilled | bit,
                        visited: 0,
                    });
                }
                combos = grown;
            }
            combos.sort_by_key(|c| (c.measured, c.drilled));
        }
        let key_space = if cfg.simplified { 1usize << k } else { 1usize << (2 * k) };
        let mut lookup = vec![NO_COMBO; key_space];
        for (i, c) in combos.iter().enumerate() {
            lookup[Self::key(cfg.simplified, k, c)] = i as u32;
        }
        StateIndexer {
            width: cfg.width,
            height: cfg.height,
            horizon: cfg.horizon,
            simplified: cfg.simplified,
            target_count: k,
            combos,
            lookup,
        }
    }

    #[inline]
    fn key(simplified: bool, k: usize, c: &Tracking) -> usize {
        if simplified {
            c.visited as usize
        } else {
            (c.measured as usize) | ((c.drilled as usize) << k)
        }
    }

    pub fn combos(&self) -> &[Tracking] {
        &self.combos
    }

    /// Number of non-sink states.
    pub fn rover_state_count(&self) -> usize {
        self.width as usize * self.height as usize * (self.horizon as usize + 1) * self.combos.len()
    }

    pub fn state_count(&self) -> usize {
        self.rover_state_count() + 1
    }

    pub fn sink(&self) -> StateIndex {
        self.rover_state_count()
    }

    #[inline]
    pub fn encode(&self, s: &RoverState) -> Option<StateIndex> {
        if s.x == 0 || s.x > self.width || s.y == 0 || s.y > self.height || s.t > self.horizon {
            return None;
        }
        let tr = s.tracking();
        if self.simplified && (tr.measured | tr.drilled) != 0
            || !self.simplified && tr.visited != 0
        {
            return None;
        }
        let key = Self::key(self.simplified, self.target_count, &tr);
        let combo = *self.lookup.get(key)?;
        if combo == NO_COMBO {
            return None;
        }
        let cell = (s.x as usize - 1) * self.height as usize + (s.y as usize - 1);
        let timed = cell * (self.horizon as usize + 1) + s.t as usize;
        Some(timed * self.combos.len() + combo as usize)
    }

    pub fn encode_or_err(&self, s: &RoverState) -> Result<StateIndex> {
        self.encode(s)
            .ok_or_else(|| Error::contract(format!("state {s:?} is not in the enumerated space")))
    }

    /// `None` for the sink or an out-of-range index.
    #[inline]
    pub fn decode(&self, i: StateIndex) -> Option<RoverState> {
        if i >= self.rover_state_count() {
            return None;
        }
        let c = self.combos.len();
        let combo = self.combos[i % c];
        let timed = i / c;
        let t = (timed % (self.horizon as usize + 1)) as u16;
        let cell = timed / (self.horizon as usize + 1);
        let y = (cell % self.height as usize) as u16 + 1;
        let x = (cell / self.height as usize) as u16 + 1;
        Some(RoverState::at(x, y, t).with_tracking(combo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rover::config::{Target, GridConfig};

    fn cfg(simplified: bool, targets: usize) -> GridConfig {
        GridConfig {
            schema_version: 1,
            width: 3,
            height: 2,
            horizon: 2,
            discount: 0.9,
            simplified,
            start: crate::rover::config::StartState { x: 1, y: 1, t: 0 },
            targets: (0..targets)
                .map(|i| Target::science(i, Cell::new(i as u16 + 1, 1), 1.0, 2.0))
                .collect(),
            shadows: Default::default(),
            activity_durations: [1.0, 0.0, 0.0],
            end_penalty: -1.0,
        }
    }

    #[test]
    fn full_mode_enumerates_reachable_combos_only() {
        let ix = StateIndexer::new(&cfg(false, 2));
        assert_eq!(ix.combos().len(), 9);
        assert!(ix.combos().iter().all(|c| c.drilled & !c.measured == 0));
        let bad = RoverState {
            drilled: 1,
            ..RoverState::at(1, 1, 0)
        };
        assert_eq!(ix.encode(&bad), None);
    }

    #[test]
    fn order_is_lexicographic() {
        let ix = StateIndexer::new(&cfg(false, 1));
        let states: Vec<_> = (0..ix.rover_state_count()).map(|i| ix.decode(i).unwrap()).collect();
        let key = |s: &RoverState| (s.x, s.y, s.t, s.measured, s.drilled);
        assert!(states.windows(2).all(|w| key(&w[0]) < key(&w[1])));
    }

    #[test]
    fn round_trip_every_index() {
        for simplified in [true, false] {
            let ix = StateIndexer::new(&cfg(simplified, 2));
            for i in 0..ix.rover_state_count() {
                assert_eq!(ix.encode(&ix.decode(i).unwrap()), Some(i));
            }
            assert_eq!(ix.decode(ix.sink()), None);
        }
    }

    #[test]
    fn out_of_range_states_do_not_encode() {
        let ix = StateIndexer::new(&cfg(true, 1));
        assert_eq!(ix.encode(&RoverState::at(0, 1, 0)), None);
        assert_eq!(ix.encode(&RoverState::at(1, 3, 0)), None);
        assert_eq!(ix.encode(&RoverState::at(1, 1, 3)), None);
    }
}
