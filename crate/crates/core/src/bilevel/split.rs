use serde::{Deserialize, Serialize};

use crate::rover::{RoverState, Tracking};

/// Instantaneous part of a rover state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Telemetry {
    pub x: u16,
    pub y: u16,
    pub t: u16,
}

/// Projection of a full state onto one low-level problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LowLevelState {
    pub telemetry: Telemetry,
    /// Whether the focal target is already measured (full mode only).
    pub measured_current: bool,
}

/// A tracking bit set during low-level execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagEvent {
    Measured(usize),
    Drilled(usize),
    Visited(usize),
}

pub fn split(s: &RoverState) -> (Telemetry, Tracking) {
    (
        Telemetry {
            x: s.x,
            y: s.y,
            t: s.t,
        },
        s.tracking(),
    )
}

pub fn merge(tel: Telemetry, tr: Tracking) -> RoverState {
    RoverState::at(tel.x, tel.y, tel.t).with_tracking(tr)
}

/// Drops tracking except the focal target's measured bit.
pub fn subset_of(s: &RoverState, focal: Option<usize>) -> LowLevelState {
    LowLevelState {
        telemetry: split(s).0,
        measured_current: focal.is_some_and(|i| s.measured & (1 << i) != 0),
    }
}

/// Lifts a finished low-level segment back to a full state: telemetry from
/// the segment end, tracking from `hl` plus the recorded flag events.
pub fn update_hl_state(hl: &RoverState, end: Telemetry, events: &[FlagEvent]) -> RoverState {
    let mut tr = hl.tracking();
    for e in events {
        match *e {
            FlagEvent::Measured(i) => tr.measured |= 1 << i,
            FlagEvent::Drilled(i) => tr.drilled |= 1 << i,
            FlagEvent::Visited(i) => tr.visited |= 1 << i,
        }
    }
    merge(end, tr)
}

/// Flag events implied by a transition `from -> to`, in target order.
pub fn flag_events(from: &RoverState, to: &RoverState, out: &mut Vec<FlagEvent>) {
    let bits = |mask: u32| (0..32).filter(move |i| mask & (1 << i) != 0);
    out.extend(bits(to.measured & !from.measured).map(FlagEvent::Measured));
    out.extend(bits(to.drilled & !from.drilled).map(FlagEvent::Drilled));
    out.extend(bits(to.visited & !from.visited).map(FlagEvent::Visited));
}
