//! Human-aware planning layer: human state, planning modes, the joint
//! robot/human band planner and the backoff recovery.

mod backoff;
mod mode;
mod planner;

pub use backoff::{backoff_step, BackoffState, BackoffSubstate};
pub use mode::{update_mode, ModeContext};
pub use planner::{HatebPlanner, HumanBand, PlanResult, PlannerConfig, TrackedHuman, WorldSnapshot};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::teb::TimedBand;
use crate::world::{normalize_angle, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanRecord {
    pub id: u32,
    pub pose: Pose2D,
    pub velocity: Point2,
    pub classification: Classification,
    pub visible: bool,
    /// Visible and within the planning radius.
    pub observable: bool,
    pub band: Option<TimedBand>,
}

impl HumanRecord {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Entries of the planner and simulator event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ModeTransition {
        from: PlanningMode,
        to: PlanningMode,
        nearest_distance: Option<f64>,
        stuck_for: f64,
    },
    Replan {
        reason: String,
    },
    Stuck {
        duration: f64,
    },
    Abort {
        reason: String,
    },
    CollisionImminent {
        human: u32,
    },
    CommandClamped,
    /// Robot footprint overlapped a human (`human` set) or an obstacle.
    Collision {
        human: Option<u32>,
        distance: f64,
    },
    GoalReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlanningMode {
    SingleBand,
    DualBand,
    VelObs,
    BackoffRecovery,
}

impl PlanningMode {
    /// Whether `from → to` is an allowed transition (self-loops included).
    pub fn is_edge(from: PlanningMode, to: PlanningMode) -> bool {
        use PlanningMode::*;
        from == to
            || matches!(
                (from, to),
                (SingleBand, DualBand)
                    | (DualBand, SingleBand)
                    | (SingleBand, VelObs)
                    | (VelObs, SingleBand)
                    | (DualBand, VelObs)
                    | (VelObs, DualBand)
                    | (VelObs, BackoffRecovery)
                    | (BackoffRecovery, SingleBand)
            )
    }
}

/// Thresholds of classification, mode switching and recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HatebParams {
    pub v_static: f64,
    pub planning_radius: f64,
    pub visible_range: f64,
    /// Full field of view angle around the robot heading.
    pub field_of_view: f64,
    pub n_crowd: usize,
    pub w_stuck: f64,
    pub eps_progress: f64,
    /// Backoff is only entered when the nearest human is closer than this.
    pub backoff_distance: f64,
    /// A banded human must stay slow this long before VelObs.
    pub stop_debounce: f64,
    pub v_back: f64,
    pub t_wait: f64,
    pub l_back: f64,
    pub local_horizon: f64,
    pub band_spacing: f64,
    pub iterations: usize,
    pub replan_period: f64,
    pub human_replan_period: f64,
    pub goal_tolerance: f64,
    pub guard_horizon: f64,
    pub guard_margin: f64,
    pub max_divergences: usize,
    /// Control period used for acceleration limiting of commands.
    pub control_dt: f64,
}

impl Default for HatebParams {
    fn default() -> Self {
        Self {
            v_static: 0.1,
            planning_radius: 5.0,
            visible_range: 10.0,
            field_of_view: std::f64::consts::TAU,
            n_crowd: 3,
            w_stuck: 4.0,
            eps_progress: 0.1,
            backoff_distance: 2.5,
            stop_debounce: 1.0,
            v_back: 0.15,
            t_wait: 10.0,
            l_back: 3.0,
            local_horizon: 4.0,
            band_spacing: 0.3,
            iterations: 5,
            replan_period: 1.0,
            human_replan_period: 0.5,
            goal_tolerance: 0.2,
            guard_horizon: 1.0,
            guard_margin: 0.05,
            max_divergences: 3,
            control_dt: 0.1,
        }
    }
}

impl HatebParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.planning_radius,
            self.visible_range,
            self.field_of_view,
            self.w_stuck,
            self.v_back,
            self.l_back,
            self.local_horizon,
            self.band_spacing,
            self.replan_period,
            self.control_dt,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.v_static < 0.0 || self.t_wait < 0.0 {
            return Err(Error::Config("planner thresholds must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("at least one optimizer iteration per step is required".into()));
        }
        Ok(())
    }
}

/// Visibility, observability and static/dynamic classification.
pub fn classify_humans(tracked: &[TrackedHuman], robot: &Pose2D, params: &HatebParams) -> Vec<HumanRecord> {
    tracked
        .iter()
        .map(|t| {
            let rel = t.pose.position() - robot.position();
            let d = rel.norm();
            let bearing = if d > 1e-12 {
                normalize_angle(rel.y.atan2(rel.x) - robot.heading()).abs()
            } else {
                0.0
            };
            let visible = d <= params.visible_range && bearing <= params.field_of_view / 2.0 + 1e-12;
            let observable = visible && d <= params.planning_radius;
            let classification = if t.velocity.norm() >= params.v_static {
                Classification::Dynamic
            } else {
                Classification::Static
            };
            HumanRecord {
                id: t.id,
                pose: t.pose,
                velocity: t.velocity,
                classification,
                visible,
                observable,
                band: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracked(id: u32, x: f64, y: f64, vx: f64, vy: f64) -> TrackedHuman {
        TrackedHuman {
            id,
            pose: Pose2D::new(x, y, 0.0),
            velocity: Point2::new(vx, vy),
            radius: 0.3,
        }
    }

    #[test]
    fn classification_rules() {
        let p = HatebParams::default();
        let robot = Pose2D::new(0.0, 0.0, 0.0);
        let out = classify_humans(
            &[tracked(1, 8.0, 0.0, 1.0, 0.0), tracked(2, 0.0, 0.0, 0.0, 0.0), tracked(3, 2.0, 0.0, 0.05, 0.0), tracked(4, 12.0, 0.0, 0.0, 0.0)],
            &robot,
            &p,
        );
        assert!(out[0].visible && !out[0].observable);
        assert!(out[1].observable && out[1].classification == Classification::Static);
        assert_eq!(out[2].classification, Classification::Static);
        assert!(!out[3].visible && !out[3].observable);
        assert_eq!(out[0].classification, Classification::Dynamic);
    }

    #[test]
    fn narrow_field_of_view() {
        let p = HatebParams {
            field_of_view: std::f64::consts::PI,
            ..Default::default()
        };
        let out = classify_humans(&[tracked(1, -2.0, 0.0, 0.0, 0.0), tracked(2, 2.0, 0.1, 0.0, 0.0)], &Pose2D::new(0.0, 0.0, 0.0), &p);
        assert!(!out[0].visible);
        assert!(out[1].observable);
    }

    #[test]
    fn edges() {
        use PlanningMode::*;
        assert!(PlanningMode::is_edge(VelObs, BackoffRecovery));
        assert!(!PlanningMode::is_edge(DualBand, BackoffRecovery));
        assert!(!PlanningMode::is_edge(BackoffRecovery, VelObs));
        assert!(!PlanningMode::is_edge(SingleBand, BackoffRecovery));
    }
}
