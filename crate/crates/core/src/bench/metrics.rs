//! Per-run metrics (Acc, PL, TT, HRD) and the repeated-seed suite runner.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::{Outcome, Trace};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::sim::{run_episode_with, PlannerKind};
use crate::world::{ScenarioSpec, SuccessRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub success: bool,
    pub collided: bool,
    pub outcome: Outcome,
    pub pl: f64,
    pub tt: f64,
    /// Minimum human-robot center distance; `None` without humans.
    pub hrd: Option<f64>,
}

/// Mean over the repeats of one (scenario, planner) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub scenario: String,
    pub planner: PlannerKind,
    pub acc: f64,
    pub pl: f64,
    pub tt: f64,
    pub hrd: Option<f64>,
    pub runs: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub runs: Vec<RunMetrics>,
    pub rows: Vec<MeanRow>,
    pub warnings: Vec<String>,
}

pub fn compute_metrics(trace: &Trace, spec: &ScenarioSpec) -> Result<RunMetrics> {
    let footer = trace
        .footer
        .as_ref()
        .ok_or_else(|| Error::MetricsUnavailable("trace has no footer".into()))?;
    if trace.steps.len() as u64 != footer.steps {
        return Err(Error::MetricsUnavailable(format!(
            "trace has {} steps, footer reports {}",
            trace.steps.len(),
            footer.steps
        )));
    }
    if trace.header.spec_hash != spec.hash() {
        return Err(Error::Validation(format!(
            "trace was recorded for a different scenario than '{}'",
            spec.name
        )));
    }
    let collided = trace.collision_count() > 0;
    let success = !collided
        && match spec.success_rule {
            SuccessRule::ReachGoal => footer.outcome == Outcome::Success,
            SuccessRule::DetectBlockageAndAbort => footer.outcome == Outcome::Abort,
        };

    let mut pl = 0.0;
    let mut prev = None;
    for p in trace.steps.iter().map(|s| s.robot.position()).chain(std::iter::once(footer.final_pose.position())) {
        if let Some(q) = prev {
            pl += p.distance(q);
        }
        prev = Some(p);
    }
    if !success && trace.header.planner == PlannerKind::Baseline {
        if let Some(g) = trace.header.global_path_length {
            pl = g;
        }
    }

    let t0 = trace.steps.first().map_or(0.0, |s| s.time);
    let mut hrd: Option<f64> = None;
    for s in &trace.steps {
        for h in &s.humans {
            let d = h.pose.position().distance(s.robot.position());
            hrd = Some(hrd.map_or(d, |m| m.min(d)));
        }
    }
    if collided && !spec.humans.is_empty() {
        hrd = Some(0.0);
    }
    Ok(RunMetrics {
        scenario: trace.header.scenario.clone(),
        planner: trace.header.planner,
        seed: trace.header.seed,
        success,
        collided,
        outcome: footer.outcome,
        pl,
        tt: footer.time - t0,
        hrd,
    })
}

/// One finished (or crashed) episode of a suite.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub scenario: usize,
    pub planner: PlannerKind,
    pub repeat: u32,
    pub seed: u64,
    pub trace: Option<Trace>,
    pub metrics: std::result::Result<RunMetrics, String>,
}

/// Runs every (scenario, planner, repeat) with seed `base_seed + repeat`,
/// so both planners face the same human scripts. Episodes run in parallel.
pub fn run_suite_runs(
    suite: &[ScenarioSpec],
    planners: &[PlannerKind],
    repeats: u32,
    base_seed: u64,
    cfg: &Config,
    keep_traces: bool,
) -> Result<Vec<SuiteRun>> {
    if repeats == 0 {
        return Err(Error::Validation("repeats must be at least 1".into()));
    }
    if planners.is_empty() {
        return Err(Error::Validation("no planners selected".into()));
    }
    let jobs: Vec<(usize, PlannerKind, u32)> = (0..suite.len())
        .flat_map(|s| planners.iter().flat_map(move |&p| (0..repeats).map(move |r| (s, p, r))))
        .collect();
    let dt = cfg.sim.dt;
    Ok(jobs
        .into_par_iter()
        .map(|(s, planner, repeat)| {
            let spec = &suite[s];
            let seed = base_seed + repeat as u64;
            let out = catch_unwind(AssertUnwindSafe(|| run_episode_with(spec, planner, seed, dt, cfg)));
            let (trace, metrics) = match out {
                Ok(t) => {
                    let m = compute_metrics(&t, spec).map_err(|e| e.to_string());
                    (keep_traces.then_some(t), m)
                }
                Err(p) => {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    (None, Err(format!("episode crashed: {msg}")))
                }
            };
            SuiteRun {
                scenario: s,
                planner,
                repeat,
                seed,
                trace,
                metrics,
            }
        })
        .collect())
}

/// Reduces finished runs to per-(scenario, planner) means; errored runs are
/// excluded and reported as warnings.
pub fn summarize(suite: &[ScenarioSpec], planners: &[PlannerKind], runs: &[SuiteRun]) -> MetricsReport {
    let mut report = MetricsReport::default();
    for (si, spec) in suite.iter().enumerate() {
        for &planner in planners {
            let group: Vec<&SuiteRun> = runs.iter().filter(|r| r.scenario == si && r.planner == planner).collect();
            let ok: Vec<&RunMetrics> = group.iter().filter_map(|r| r.metrics.as_ref().ok()).collect();
            let errored = group.len() - ok.len();
            for r in &group {
                if let Err(e) = &r.metrics {
                    report
                        .warnings
                        .push(format!("{} {} seed {}: {e}", spec.name, planner, r.seed));
                }
            }
            if ok.is_empty() {
                continue;
            }
            let n = ok.len() as f64;
            let hrds: Vec<f64> = ok.iter().filter_map(|m| m.hrd).collect();
            report.rows.push(MeanRow {
                scenario: spec.name.clone(),
                planner,
                acc: 100.0 * ok.iter().filter(|m| m.success).count() as f64 / n,
                pl: ok.iter().map(|m| m.pl).sum::<f64>() / n,
                tt: ok.iter().map(|m| m.tt).sum::<f64>() / n,
                hrd: (!hrds.is_empty()).then(|| hrds.iter().sum::<f64>() / hrds.len() as f64),
                runs: ok.len(),
                errored,
            });
            report.runs.extend(ok.into_iter().cloned());
        }
    }
    report
}

pub fn run_suite(
    suite: &[ScenarioSpec],
    planners: &[PlannerKind],
    repeats: u32,
    base_seed: u64,
    cfg: &Config,
) -> Result<MetricsReport> {
    let runs = run_suite_runs(suite, planners, repeats, base_seed, cfg, false)?;
    Ok(summarize(suite, planners, &runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::trace::{HumanSample, TraceFooter, TraceHeader, TraceStep};
    use crate::hateb::Event;
    use crate::teb::VelocityCommand;
    use crate::world::{load_scenario_with, Pose2D};

    fn spec(with_human: bool) -> ScenarioSpec {
        let humans = if with_human {
            r#"[{"id": 1, "start": [5, 3, 3.14159], "controller": "linear", "params": {"speed": 1.0}}]"#
        } else {
            "[]"
        };
        let text = format!(
            r#"{{"name": "m", "map": "m", "robot": {{"start": [1, 1, 0], "goal": [4, 1, 0]}},
                "humans": {humans}, "time_limit_s": 30, "success_rule": "reach-goal"}}"#
        );
        let map = format!("60 40 0.1\n{}", format!("{}\n", ".".repeat(60)).repeat(40));
        load_scenario_with(&text, |_| Ok(map)).unwrap()
    }

    fn trace(spec: &ScenarioSpec, xs: &[f64], human: Option<(f64, f64)>, collide_at: Option<usize>) -> Trace {
        let steps: Vec<TraceStep> = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| TraceStep {
                step: k as u64,
                time: k as f64 * 0.1,
                robot: Pose2D::new(x, 1.0, 0.0),
                command: VelocityCommand::ZERO,
                mode: None,
                humans: human
                    .map(|(hx, hy)| HumanSample {
                        id: 1,
                        pose: Pose2D::new(hx - k as f64 * 0.1, hy, 0.0),
                        classification: None,
                    })
                    .into_iter()
                    .collect(),
                services: vec![],
                bands: vec![],
                events: if collide_at == Some(k) {
                    vec![Event::Collision {
                        human: Some(1),
                        distance: 0.5,
                    }]
                } else {
                    vec![]
                },
            })
            .collect();
        let last = *xs.last().unwrap();
        Trace {
            header: TraceHeader {
                scenario: spec.name.clone(),
                spec_hash: spec.hash(),
                planner: PlannerKind::Cohan,
                seed: 0,
                dt: 0.1,
                robot_radius: 0.3,
                goal: spec.robot.goal,
                straight_distance: 3.0,
                global_path_length: Some(3.0),
                success_rule: spec.success_rule,
                human_radii: vec![],
            },
            footer: Some(TraceFooter {
                outcome: if collide_at.is_some() { Outcome::Collision } else { Outcome::Success },
                time: xs.len() as f64 * 0.1,
                final_pose: Pose2D::new(last + 0.05, 1.0, 0.0),
                steps: xs.len() as u64,
                goal_reached: true,
                reason: None,
            }),
            steps,
        }
    }

    #[test]
    fn straight_run_without_humans() {
        let s = spec(false);
        let xs: Vec<f64> = (0..60).map(|k| 1.0 + k as f64 * 0.05).collect();
        let m = compute_metrics(&trace(&s, &xs, None, None), &s).unwrap();
        assert!((m.pl - 3.0).abs() <= 0.1 * 0.5 + 1e-9, "{}", m.pl);
        assert!(m.success && m.hrd.is_none());
        assert!((m.tt - 6.0).abs() < 1e-12);
    }

    #[test]
    fn standing_robot_with_passing_human() {
        let s = spec(true);
        let mut t = trace(&s, &[1.0; 50], Some((5.0, 2.2)), None);
        let f = t.footer.as_mut().unwrap();
        f.outcome = Outcome::Timeout;
        f.final_pose = Pose2D::new(1.0, 1.0, 0.0);
        let m = compute_metrics(&t, &s).unwrap();
        assert!(!m.success);
        assert_eq!(m.pl, 0.0);
        assert!((m.hrd.unwrap() - 1.2).abs() < 1e-9);
    }

    #[test]
    fn collision_zeroes_hrd() {
        let s = spec(true);
        let xs: Vec<f64> = (0..50).map(|k| 1.0 + k as f64 * 0.01).collect();
        let m = compute_metrics(&trace(&s, &xs, Some((9.0, 3.0)), Some(40)), &s).unwrap();
        assert_eq!(m.hrd, Some(0.0));
        assert!(!m.success && m.collided);
    }

    #[test]
    fn truncated_trace_is_rejected() {
        let s = spec(false);
        let mut t = trace(&s, &[1.0, 1.1], None, None);
        t.footer = None;
        assert!(matches!(compute_metrics(&t, &s), Err(Error::MetricsUnavailable(_))));
    }

    #[test]
    fn zero_repeats_is_rejected() {
        let s = spec(false);
        assert!(run_suite(&[s], &[PlannerKind::Cohan], 0, 0, &Config::default()).is_err());
    }
}
