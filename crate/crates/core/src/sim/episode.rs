use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::baseline::BaselinePlanner;
use super::{step, SimState};
use crate::bench::{BandSnapshot, HumanSample, Outcome, ServiceUse, Trace, TraceFooter, TraceHeader, TraceStep};
use crate::config::Config;
use crate::error::Error;
use crate::global_plan::GlobalPath;
use crate::hateb::{Event, HatebPlanner, PlanningMode, WorldSnapshot};
use crate::teb::{TimedBand, VelocityCommand};
use crate::world::{Pose2D, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Cohan,
    Baseline,
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Cohan => "cohan",
            PlannerKind::Baseline => "baseline",
        })
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "cohan" => Ok(PlannerKind::Cohan),
            "baseline" | "smb" => Ok(PlannerKind::Baseline),
            other => Err(Error::Usage(format!("unknown planner '{other}' (expected cohan or baseline)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub goal_tolerance: f64,
    /// Band snapshots are stored every this many steps.
    pub band_snapshot_every: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            goal_tolerance: 0.2,
            band_snapshot_every: 10,
        }
    }
}

enum Driver {
    Cohan(Box<HatebPlanner>),
    Baseline(Box<BaselinePlanner>),
}

fn band_points(band: &TimedBand) -> Vec<[f64; 2]> {
    band.configs().iter().map(|c| [c.x, c.y]).collect()
}

/// Runs one episode with default configuration.
pub fn run_episode(spec: &ScenarioSpec, planner: PlannerKind, seed: u64, dt: f64) -> Trace {
    run_episode_with(spec, planner, seed, dt, &Config::default())
}

pub fn run_episode_with(spec: &ScenarioSpec, kind: PlannerKind, seed: u64, dt: f64, cfg: &Config) -> Trace {
    let grid = Arc::new(spec.map.clone());
    let mut state = SimState::new(spec, seed);
    let robot_spec = &spec.robot;
    let mut planner_cfg = cfg.planner.clone();
    planner_cfg.hateb.control_dt = dt;
    planner_cfg.hateb.goal_tolerance = cfg.sim.goal_tolerance;
    let limits = planner_cfg.limits;

    let external: BTreeMap<u32, GlobalPath> = spec
        .humans
        .iter()
        .filter_map(|h| {
            h.external_path.as_ref().map(|w| {
                let mut p = GlobalPath {
                    waypoints: w.clone(),
                    total_cost: 0.0,
                };
                p.total_cost = p.length();
                (h.id, p)
            })
        })
        .collect();

    let driver = match kind {
        PlannerKind::Cohan => HatebPlanner::new(
            Arc::clone(&grid),
            robot_spec.start,
            robot_spec.goal,
            robot_spec.radius,
            planner_cfg.clone(),
            cfg.prediction.with_spec(&spec.prediction),
            external,
        )
        .map(|p| Driver::Cohan(Box::new(p))),
        PlannerKind::Baseline => {
            let mut b = cfg.baseline;
            b.goal_tolerance = cfg.sim.goal_tolerance;
            BaselinePlanner::new(
                Arc::clone(&grid),
                robot_spec.start,
                robot_spec.goal,
                robot_spec.radius,
                b,
                limits,
                planner_cfg.global,
                planner_cfg.inflation_decay,
                dt,
            )
            .map(|p| Driver::Baseline(Box::new(p)))
        }
    };

    let global_path_length = match &driver {
        Ok(Driver::Cohan(p)) => p.global_path().map(|g| g.length()),
        Ok(Driver::Baseline(p)) => p.global_path().map(|g| g.length()),
        Err(_) => None,
    };
    let header = TraceHeader {
        scenario: spec.name.clone(),
        spec_hash: spec.hash(),
        planner: kind,
        seed,
        dt,
        robot_radius: robot_spec.radius,
        goal: robot_spec.goal,
        straight_distance: robot_spec.start.distance(&robot_spec.goal),
        global_path_length,
        success_rule: spec.success_rule,
        human_radii: spec.humans.iter().map(|h| (h.id, h.radius)).collect(),
    };
    let mut driver = match driver {
        Ok(d) => d,
        Err(e) => {
            return Trace {
                header,
                steps: Vec::new(),
                footer: Some(TraceFooter {
                    outcome: Outcome::Abort,
                    time: 0.0,
                    final_pose: robot_spec.start,
                    steps: 0,
                    goal_reached: false,
                    reason: Some(format!("failed at start: {e}")),
                }),
            };
        }
    };

    let mut steps = Vec::new();
    let mut goal_reached = false;
    let mut aborted = false;
    let mut reason = None;
    loop {
        let t = state.time;
        let pose = state.robot.pose;
        let tracked = state.tracked_humans();
        let snapshot_bands = state.step.is_multiple_of(cfg.sim.band_snapshot_every.max(1));
        let (cmd, mode, services, bands, mut events, classes, planner_aborted) = match &mut driver {
            Driver::Cohan(p) => {
                let r = p.plan_step(&WorldSnapshot {
                    time: t,
                    robot: pose,
                    robot_velocity: state.robot.command,
                    humans: tracked.clone(),
                });
                let services: Vec<ServiceUse> = r
                    .human_bands
                    .iter()
                    .map(|b| ServiceUse {
                        human: b.id,
                        service: b.service,
                    })
                    .collect();
                let mut bands = Vec::new();
                if snapshot_bands {
                    bands.push(BandSnapshot {
                        human: None,
                        points: band_points(&r.robot_band),
                    });
                    for b in &r.human_bands {
                        bands.push(BandSnapshot {
                            human: Some(b.id),
                            points: band_points(&b.band),
                        });
                    }
                }
                let classes: BTreeMap<u32, _> = r.humans.iter().map(|h| (h.id, h.classification)).collect();
                (r.command, Some(r.mode), services, bands, r.events, Some(classes), r.aborted)
            }
            Driver::Baseline(b) => {
                let (cmd, events) = b.plan_step(t, &pose, &tracked);
                (cmd, None::<PlanningMode>, Vec::new(), Vec::new(), events, None, b.aborted())
            }
        };
        let legal = cmd.clamped(&limits);
        if legal != cmd {
            events.push(Event::CommandClamped);
        }
        let legal = if legal.v.is_finite() && legal.omega.is_finite() { legal } else { VelocityCommand::ZERO };
        let humans: Vec<HumanSample> = tracked
            .iter()
            .map(|h| HumanSample {
                id: h.id,
                pose: h.pose,
                classification: classes.as_ref().and_then(|c| c.get(&h.id).copied()),
            })
            .collect();
        if planner_aborted {
            aborted = true;
            reason = events.iter().find_map(|e| match e {
                Event::Abort { reason } => Some(reason.clone()),
                _ => None,
            });
            steps.push(TraceStep {
                step: state.step,
                time: t,
                robot: pose,
                command: VelocityCommand::ZERO,
                mode,
                humans,
                services,
                bands,
                events,
            });
            break;
        }
        for c in step(&mut state, &grid, legal, dt) {
            events.push(Event::Collision {
                human: c.human,
                distance: c.distance,
            });
        }
        let done = state.robot.pose.distance(&robot_spec.goal) <= cfg.sim.goal_tolerance;
        if done {
            goal_reached = true;
            events.push(Event::GoalReached);
        }
        steps.push(TraceStep {
            step: state.step - 1,
            time: t,
            robot: pose,
            command: legal,
            mode,
            humans,
            services,
            bands,
            events,
        });
        if done || state.time >= spec.time_limit_s - 1e-9 {
            break;
        }
    }

    let collided = !state.collisions.is_empty();
    let final_pose: Pose2D = state.robot.pose;
    let end_time = state.time;
    let outcome = if collided {
        Outcome::Collision
    } else if goal_reached {
        Outcome::Success
    } else if aborted {
        Outcome::Abort
    } else if no_recent_progress(&steps, &final_pose, robot_spec.goal, end_time, cfg) {
        Outcome::Stuck
    } else {
        Outcome::Timeout
    };
    Trace {
        header,
        footer: Some(TraceFooter {
            outcome,
            time: end_time,
            final_pose,
            steps: steps.len() as u64,
            goal_reached,
            reason,
        }),
        steps,
    }
}

/// No progress of at least `eps_progress` toward the goal in the final
/// `w_stuck` seconds.
fn no_recent_progress(steps: &[TraceStep], final_pose: &Pose2D, goal: Pose2D, end: f64, cfg: &Config) -> bool {
    let w = cfg.planner.hateb.w_stuck;
    let Some(past) = steps.iter().find(|s| s.time >= end - w - 1e-9) else {
        return false;
    };
    if end - past.time < w - 1e-6 {
        return false;
    }
    let before = past.robot.distance(&goal);
    let now = final_pose.distance(&goal);
    before - now < cfg.planner.hateb.eps_progress
}
