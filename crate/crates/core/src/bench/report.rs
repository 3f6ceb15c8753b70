//! CSV and text-table rendering of suite means, plus an SVG overhead plot
//! of a single trace.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{MeanRow, MetricsReport};
use super::trace::Trace;
use crate::error::{Error, Result};
use crate::hateb::PlanningMode;
use crate::sim::PlannerKind;
use crate::world::{OccupancyGrid, CellIndex};

pub const NA: &str = "n/a";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::Usage(format!("unknown report format '{other}' (expected csv or table)"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scenario: String,
    planner: PlannerKind,
    acc: String,
    pl: String,
    tt: String,
    hrd: String,
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => render_csv(&report.rows),
        ReportFormat::Table => Ok(render_table(&report.rows, &report.warnings)),
    }
}

/// Renders the format named by `format`; unknown names are usage errors.
pub fn render_report_named(report: &MetricsReport, format: &str) -> Result<String> {
    render_report(report, format.parse()?)
}

fn render_csv(rows: &[MeanRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            scenario: r.scenario.clone(),
            planner: r.planner,
            acc: format!("{:.0}", r.acc),
            pl: num(r.pl),
            tt: num(r.tt),
            hrd: r.hrd.map_or_else(|| NA.to_string(), num),
        })
        .map_err(|e| Error::Internal(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["scenario", "planner", "acc", "pl", "tt", "hrd"])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn render_table(rows: &[MeanRow], warnings: &[String]) -> String {
    let header = ["scenario", "planner", "Acc (%)", "PL (m)", "TT (s)", "HRD (m)"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.scenario.clone(),
                r.planner.to_string(),
                format!("{:.0}", r.acc),
                num(r.pl),
                num(r.tt),
                r.hrd.map_or_else(|| NA.to_string(), num),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        for (i, (c, w)) in row.iter().zip(width).enumerate() {
            if i < 2 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "{c:>w$}");
            }
            out.push_str(if i + 1 < row.len() { "  " } else { "\n" });
        }
    };
    line(&mut out, &header);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for w in warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Reads a report written by `render_report(.., Csv)`.
pub fn parse_report_csv(text: &str) -> Result<MetricsReport> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["scenario", "planner", "acc", "pl", "tt", "hrd"] {
        return Err(Error::Format(format!("unexpected report header {:?}", headers)));
    }
    let parse = |field: &str, s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad {field} value '{s}'")))
    };
    let mut report = MetricsReport::default();
    for rec in rd.deserialize::<CsvRow>() {
        let r = rec.map_err(|e| Error::Format(e.to_string()))?;
        let acc = parse("acc", &r.acc)?;
        if !(0.0..=100.0).contains(&acc) {
            return Err(Error::Validation(format!("acc {acc} outside [0, 100]")));
        }
        report.rows.push(MeanRow {
            scenario: r.scenario,
            planner: r.planner,
            acc,
            pl: parse("pl", &r.pl)?,
            tt: parse("tt", &r.tt)?,
            hrd: if r.hrd == NA { None } else { Some(parse("hrd", &r.hrd)?) },
            runs: 0,
            errored: 0,
        });
    }
    Ok(report)
}

fn mode_color(mode: Option<PlanningMode>) -> &'static str {
    match mode {
        Some(PlanningMode::SingleBand) => "#1f77b4",
        Some(PlanningMode::DualBand) => "#2ca02c",
        Some(PlanningMode::VelObs) => "#ff7f0e",
        Some(PlanningMode::BackoffRecovery) => "#d62728",
        None => "#555555",
    }
}

/// Overhead view: occupied cells, the initial global path if given, human
/// paths, the robot trail colored by mode, and a disc per agent at its
/// final position.
pub fn render_trace_svg(trace: &Trace, map: &OccupancyGrid, global_path: Option<&[[f64; 2]]>) -> String {
    const PX: f64 = 40.0;
    let res = map.resolution();
    let origin = map.origin();
    let w = map.width() as f64 * res;
    let h = map.height() as f64 * res;
    let sx = |x: f64| (x - origin.x) * PX;
    let sy = |y: f64| (h - (y - origin.y)) * PX;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.1} {:.1}">"#,
        w * PX,
        h * PX,
        w * PX,
        h * PX
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r##"<g class="map" fill="#333333">"##);
    for row in 0..map.height() {
        let mut col = 0;
        while col < map.width() {
            if !map.is_occupied(CellIndex::new(col, row)) {
                col += 1;
                continue;
            }
            let start = col;
            while col < map.width() && map.is_occupied(CellIndex::new(col, row)) {
                col += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/>"#,
                start as f64 * res * PX,
                (h - (row + 1) as f64 * res) * PX,
                (col - start) as f64 * res * PX,
                res * PX
            );
        }
    }
    out.push_str("</g>\n");

    let poly = |pts: &mut dyn Iterator<Item = (f64, f64)>| -> String {
        pts.map(|(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect::<Vec<_>>().join(" ")
    };
    if let Some(path) = global_path {
        let _ = writeln!(
            out,
            r##"<polyline class="global-path" fill="none" stroke="#999999" stroke-dasharray="6 4" stroke-width="2" points="{}"/>"##,
            poly(&mut path.iter().map(|p| (p[0], p[1])))
        );
    }

    let mut human_paths: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &trace.steps {
        for hs in &s.humans {
            human_paths.entry(hs.id).or_default().push((hs.pose.x, hs.pose.y));
        }
    }
    for (id, pts) in &human_paths {
        let _ = writeln!(
            out,
            r##"<polyline class="human-path" data-id="{id}" fill="none" stroke="#9467bd" stroke-width="2" points="{}"/>"##,
            poly(&mut pts.iter().copied())
        );
    }

    // robot trail, one polyline per run of equal mode
    type Run = (Option<PlanningMode>, Vec<(f64, f64)>);
    let mut trail: Vec<Run> = Vec::new();
    for s in &trace.steps {
        let p = (s.robot.x, s.robot.y);
        match trail.last_mut() {
            Some((m, pts)) if *m == s.mode => pts.push(p),
            Some((_, pts)) => {
                let joint = *pts.last().unwrap_or(&p);
                trail.push((s.mode, vec![joint, p]));
            }
            None => trail.push((s.mode, vec![p])),
        }
    }
    if let (Some(f), Some((_, pts))) = (&trace.footer, trail.last_mut()) {
        pts.push((f.final_pose.x, f.final_pose.y));
    }
    for (mode, pts) in &trail {
        let _ = writeln!(
            out,
            r#"<polyline class="robot-trail" fill="none" stroke="{}" stroke-width="3" points="{}"/>"#,
            mode_color(*mode),
            poly(&mut pts.iter().copied())
        );
    }

    let robot_end = trace
        .footer
        .as_ref()
        .map(|f| f.final_pose)
        .or_else(|| trace.steps.last().map(|s| s.robot));
    if let Some(p) = robot_end {
        let _ = writeln!(
            out,
            r##"<circle class="agent robot" cx="{:.1}" cy="{:.1}" r="{:.1}" fill="#1f77b4" fill-opacity="0.5"/>"##,
            sx(p.x),
            sy(p.y),
            trace.header.robot_radius * PX
        );
    }
    let radii: BTreeMap<u32, f64> = trace.header.human_radii.iter().copied().collect();
    for (id, pts) in &human_paths {
        if let Some(&(x, y)) = pts.last() {
            let _ = writeln!(
                out,
                r##"<circle class="agent human" data-id="{id}" cx="{:.1}" cy="{:.1}" r="{:.1}" fill="#9467bd" fill-opacity="0.5"/>"##,
                sx(x),
                sy(y),
                radii.get(id).copied().unwrap_or(0.3) * PX
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
