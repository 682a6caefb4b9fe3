use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::Cell;
use super::dynamics::RoverWorld;
use super::state::{RoverAction, RoverState};
use crate::error::{Error, Result};
use crate::mdp::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Ascii,
    Svg,
}

const CELL_PX: u32 = 32;

struct Decoded {
    cells: Vec<RoverState>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

fn decode(world: &RoverWorld, trace: &Trace) -> Result<Decoded> {
    let ix = world.indexer();
    let lookup = |i| {
        ix.decode(i)
            .ok_or_else(|| Error::contract(format!("trace state {i} does not decode to a grid state")))
    };
    let mut cells = Vec::with_capacity(trace.len() + 1);
    for step in &trace.steps {
        cells.push(lookup(step.state)?);
    }
    if trace.final_state != ix.sink() {
        cells.push(lookup(trace.final_state)?);
    } else if trace.is_empty() {
        return Err(Error::contract("empty trace starting in the sink"));
    } else {
        // the sink has no position; the rover stays where the horizon ran out
        let last = *cells.last().expect("non-empty");
        cells.push(last);
    }
    Ok(Decoded {
        cells,
        actions: trace.steps.iter().map(|s| s.action).collect(),
        rewards: trace.steps.iter().map(|s| s.reward).collect(),
    })
}

/// Draws the grid, its targets, obstacles, the shadow layer at `shadow_t`
/// and the rover path of `trace`.
///
/// `shadow_t` defaults to the time of the first trace state. Both formats are
/// deterministic for fixed input.
pub fn render(
    world: &RoverWorld,
    trace: &Trace,
    format: RenderFormat,
    shadow_t: Option<u16>,
) -> Result<String> {
    let path = decode(world, trace)?;
    let t = shadow_t.unwrap_or(path.cells[0].t);
    Ok(match format {
        RenderFormat::Ascii => ascii(world, &path, t),
        RenderFormat::Svg => svg(world, &path, t),
    })
}

fn target_glyph(world: &RoverWorld, c: Cell) -> Option<char> {
    let i = world.target_at(c)?;
    Some(if world.config().targets[i].is_hibernation {
        'H'
    } else {
        char::from_digit(i as u32, 10).unwrap_or('T')
    })
}

fn ascii(world: &RoverWorld, path: &Decoded, t: u16) -> String {
    let cfg = world.config();
    let mut out = String::new();
    for y in (1..=cfg.height).rev() {
        for x in 1..=cfg.width {
            let c = Cell::new(x, y);
            let on_path = path.cells.iter().position(|s| s.cell() == c);
            let glyph = match on_path {
                Some(0) => 'S',
                Some(_) if path.cells.last().map(|s| s.cell()) == Some(c) => 'E',
                _ => match target_glyph(world, c) {
                    Some(g) => g,
                    None if on_path.is_some() => '*',
                    None if world.is_obstacle(c) => '#',
                    None if world.is_shadowed(c, t) => '~',
                    None => '.',
                },
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    for (k, s) in path.cells.iter().enumerate() {
        let _ = write!(out, "{k:>3} ({},{}) t={}", s.x, s.y, s.t);
        if let Some(&a) = path.actions.get(k) {
            let name = RoverAction::from_index(a).map_or("?", RoverAction::name);
            let _ = write!(out, " {name} r={}", path.rewards[k]);
        }
        out.push('\n');
    }
    out
}

fn svg(world: &RoverWorld, path: &Decoded, t: u16) -> String {
    let cfg = world.config();
    let (w, h) = (cfg.width as u32, cfg.height as u32);
    let centre = |c: Cell| {
        (
            (c.x as u32 - 1) * CELL_PX + CELL_PX / 2,
            (h - c.y as u32) * CELL_PX + CELL_PX / 2,
        )
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" data-shadow-t="{t}">"#,
        w * CELL_PX,
        h * CELL_PX
    );
    for x in 1..=cfg.width {
        for y in 1..=cfg.height {
            let c = Cell::new(x, y);
            let fill = if world.is_obstacle(c) {
                "#555555"
            } else if world.is_shadowed(c, t) {
                "#9999bb"
            } else {
                "#f4efe6"
            };
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}" stroke="#cccccc"/>"##,
                (x as u32 - 1) * CELL_PX,
                (h - y as u32) * CELL_PX
            );
        }
    }
    for target in &cfg.targets {
        let (cx, cy) = centre(target.cell);
        let colour = if target.is_hibernation { "#2a7ab0" } else { "#d9822b" };
        let _ = writeln!(
            out,
            r#"<circle class="target" data-id="{}" cx="{cx}" cy="{cy}" r="{}" fill="{colour}"/>"#,
            target.id,
            CELL_PX / 3
        );
    }
    for k in 0..path.actions.len() {
        let (a, b) = (path.cells[k], path.cells[k + 1]);
        let (x1, y1) = centre(a.cell());
        let (x2, y2) = centre(b.cell());
        let _ = writeln!(
            out,
            r##"<line class="step" data-step="{k}" data-from="{},{}" data-to="{},{}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#c0392b" stroke-width="3"/>"##,
            a.x, a.y, b.x, b.y
        );
    }
    for (k, s) in path.cells.iter().enumerate() {
        let (cx, cy) = centre(s.cell());
        let _ = writeln!(
            out,
            r#"<text x="{cx}" y="{cy}" font-size="9" text-anchor="middle">{k}</text>"#
        );
    }
    out.push_str("</svg>\n");
    out
}
