//! Per-episode log, persisted as JSON Lines with a `kind` tag on each record.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hateb::{Classification, Event, PlanningMode};
use crate::predict::PredictionService;
use crate::sim::PlannerKind;
use crate::teb::VelocityCommand;
use crate::world::{Pose2D, SuccessRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: String,
    pub spec_hash: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub dt: f64,
    pub robot_radius: f64,
    pub goal: Pose2D,
    pub straight_distance: f64,
    /// Length of the initial global plan, if one was found.
    pub global_path_length: Option<f64>,
    pub success_rule: SuccessRule,
    pub human_radii: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSample {
    pub id: u32,
    pub pose: Pose2D,
    pub classification: Option<Classification>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceUse {
    pub human: u32,
    pub service: PredictionService,
}

/// Band positions; `human` is `None` for the robot band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSnapshot {
    pub human: Option<u32>,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    pub time: f64,
    /// Robot pose before the command is applied.
    pub robot: Pose2D,
    pub command: VelocityCommand,
    pub mode: Option<PlanningMode>,
    pub humans: Vec<HumanSample>,
    /// One entry per human band planned this step.
    pub services: Vec<ServiceUse>,
    pub bands: Vec<BandSnapshot>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Stuck,
    Abort,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub outcome: Outcome,
    pub time: f64,
    pub final_pose: Pose2D,
    pub steps: u64,
    pub goal_reached: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(TraceStep),
    Footer(TraceFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
    /// Missing when the trace was truncated.
    pub footer: Option<TraceFooter>,
}

impl Trace {
    pub fn collision_count(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| &s.events)
            .filter(|e| matches!(e, Event::Collision { .. }))
            .count()
    }

    pub fn human_collision_count(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| &s.events)
            .filter(|e| matches!(e, Event::Collision { human: Some(_), .. }))
            .count()
    }

    pub fn modes(&self) -> impl Iterator<Item = PlanningMode> + '_ {
        self.steps.iter().filter_map(|s| s.mode)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        let line = |rec: &TraceRecord, out: &mut W| -> Result<()> {
            let text = serde_json::to_string(rec).map_err(|e| Error::Internal(e.to_string()))?;
            out.write_all(text.as_bytes()).map_err(io)?;
            out.write_all(b"\n").map_err(io)
        };
        line(&TraceRecord::Header(self.header.clone()), &mut out)?;
        for s in &self.steps {
            line(&TraceRecord::Step(s.clone()), &mut out)?;
        }
        if let Some(f) = &self.footer {
            line(&TraceRecord::Footer(f.clone()), &mut out)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn parse_jsonl(text: &str) -> Result<Trace> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut footer = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord =
                serde_json::from_str(line).map_err(|e| Error::Format(format!("trace line {}: {e}", n + 1)))?;
            match rec {
                TraceRecord::Header(h) if header.is_none() => header = Some(h),
                TraceRecord::Step(s) if header.is_some() && footer.is_none() => steps.push(s),
                TraceRecord::Footer(f) if header.is_some() && footer.is_none() => footer = Some(f),
                _ => return Err(Error::Format(format!("trace line {}: record out of order", n + 1))),
            }
        }
        let header = header.ok_or_else(|| Error::Format("trace has no header".into()))?;
        Ok(Trace { header, steps, footer })
    }

    pub fn load(path: &Path) -> Result<Trace> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(&text)
    }
}
