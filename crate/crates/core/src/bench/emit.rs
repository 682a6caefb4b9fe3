use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ResultRow, SolverKind, SweepRow};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "solver,iter_cap,wall_time_s,mean_return,std_error,converged,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Svg => "svg",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" | "svg-plot" => Ok(OutputFormat::Svg),
            other => Err(Error::config(format!("unknown output format '{other}'"))),
        }
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.solver.tag(),
            r.iter_cap,
            r.wall_time_s,
            r.mean_return,
            r.std_error,
            r.converged,
            r.seed
        );
    }
    out
}

pub fn to_json(rows: &[ResultRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("result rows serialize");
    s.push('\n');
    s
}

/// Sweep rows as CSV, one column per field.
pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::contract(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Mean return against log wall time, one line per solver with a shaded
/// band of one standard error. Failed rows are left out.
pub fn plot_svg(rows: &[ResultRow]) -> String {
    let mut series: BTreeMap<SolverKind, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.error.is_none() && r.mean_return.is_finite()) {
        series.entry(r.solver).or_default().push(r);
    }
    let x_of = |r: &ResultRow| r.wall_time_s.max(1e-6).log10();
    let se = |r: &ResultRow| if r.std_error.is_finite() { r.std_error } else { 0.0 };
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in pts {
        x0 = x0.min(x_of(r));
        x1 = x1.max(x_of(r));
        y0 = y0.min(r.mean_return - se(r));
        y1 = y1.max(r.mean_return + se(r));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 0.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (l, r, b, t) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"#);
    for d in (x0.floor() as i32)..=(x1.ceil() as i32) {
        let x = d as f64;
        if x < x0 || x > x1 {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">1e{d}</text>"#,
            px(x),
            b + 16.0
        );
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y0:.2}</text>"#, l - 4.0, b);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y1:.2}</text>"#, l - 4.0, t + 4.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">wall time (s)</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean return</text>"#,
        H / 2.0,
        H / 2.0
    );

    for (k, (solver, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| x_of(a).total_cmp(&x_of(b)).then(a.iter_cap.cmp(&b.iter_cap)));
        let color = COLORS[k % COLORS.len()];
        let upper: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(x_of(r)), py(r.mean_return + se(r)))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|r| format!("{:.2},{:.2}", px(x_of(r)), py(r.mean_return - se(r)))).collect();
        let _ = writeln!(s, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(x_of(r)), py(r.mean_return))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for r in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x_of(r)), py(r.mean_return));
        }
        let ly = t + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}" font-size="12" fill="{color}">{}</text>"#, r - 70.0, solver.tag());
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `rows` to `path` in the given format.
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    let body = match format {
        OutputFormat::Csv => to_csv(rows),
        OutputFormat::Json => to_json(rows),
        OutputFormat::Svg => plot_svg(rows),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(solver: SolverKind, cap: usize, t: f64, m: f64) -> ResultRow {
        ResultRow {
            solver,
            iter_cap: cap,
            wall_time_s: t,
            mean_return: m,
            std_error: 0.5,
            converged: cap > 5,
            seed: 7,
            error: None,
        }
    }

    #[test]
    fn csv_shapes() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
        let one = to_csv(&[row(SolverKind::BlVi, 10, 0.25, 70.5)]);
        assert_eq!(one, format!("{CSV_HEADER}\nbl_vi,10,0.25,70.5,0.5,true,7\n"));
    }

    #[test]
    fn svg_is_stable() {
        let rows = vec![
            row(SolverKind::Vi, 1, 0.01, 10.0),
            row(SolverKind::Vi, 10, 0.1, 60.0),
            row(SolverKind::BlVi, 1, 0.005, 20.0),
        ];
        let a = plot_svg(&rows);
        assert_eq!(a, plot_svg(&rows));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(plot_svg(&[]).ends_with("</svg>\n"));
    }
}
