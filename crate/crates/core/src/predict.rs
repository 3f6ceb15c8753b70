//! Human path prediction services and their activation rules.

use serde::{Deserialize, Serialize};

use crate::costmap::{CostmapStack, LETHAL};
use crate::error::{Error, Result};
use crate::global_plan::{plan_human_global, GlobalPath};
use crate::hateb::{HumanRecord, PlanningMode};
use crate::world::{DualBandService, Point2, Pose2D, PredictionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionService {
    PredictBehind,
    PredictGoal,
    PredictVelObs,
    PredictExternal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub dual_band: DualBandService,
    pub external: bool,
    pub goals: Vec<Pose2D>,
    /// Constant-velocity extrapolation horizon, seconds.
    pub horizon: f64,
    pub sample_dt: f64,
    pub behind_offset: f64,
    /// Search radius when snapping a predicted goal to free space.
    pub snap_radius: f64,
    /// Maximum start offset of an externally supplied path.
    pub external_tolerance: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            dual_band: DualBandService::None,
            external: false,
            goals: Vec::new(),
            horizon: 4.0,
            sample_dt: 0.25,
            behind_offset: 1.5,
            snap_radius: 1.0,
            external_tolerance: 0.5,
        }
    }
}

impl PredictionConfig {
    /// Scenario-level settings on top of `self`'s numeric parameters.
    pub fn with_spec(&self, spec: &PredictionSpec) -> PredictionConfig {
        PredictionConfig {
            dual_band: spec.service,
            external: spec.external,
            goals: spec.goals.clone(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dual_band == DualBandService::PredictGoal && self.goals.is_empty() {
            return Err(Error::Config("PredictGoal needs at least one candidate goal".into()));
        }
        if !(self.horizon > 0.0 && self.sample_dt > 0.0 && self.behind_offset >= 0.0) {
            return Err(Error::Config("prediction horizon, sampling and offset must be positive".into()));
        }
        Ok(())
    }
}

fn heading_of(human: &HumanRecord) -> f64 {
    if human.velocity.norm() > 1e-9 {
        human.velocity.y.atan2(human.velocity.x)
    } else {
        human.pose.heading()
    }
}

/// Nearest non-lethal cell center to `p` within `radius`, scanning rings.
fn snap_to_free(stack: &CostmapStack, p: Point2, radius: f64) -> Option<Point2> {
    let grid = stack.grid();
    if grid.world_to_grid(p).is_ok() && stack.cost_at(p) < LETHAL {
        return Some(p);
    }
    let (fc, fr) = grid.continuous_cell(p);
    let reach = (radius / grid.resolution()).ceil() as i64;
    let mut best: Option<(f64, Point2)> = None;
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (col, row) = (fc.floor() as i64 + dc, fr.floor() as i64 + dr);
            if col < 0 || row < 0 || col >= grid.width() as i64 || row >= grid.height() as i64 {
                continue;
            }
            let cell = crate::world::CellIndex::new(col as usize, row as usize);
            if stack.cost(cell) == LETHAL {
                continue;
            }
            let c = grid.grid_to_world(cell);
            let d = c.distance(p);
            if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Goal behind the robot along the human's heading.
pub fn predict_behind(human: &HumanRecord, robot: &Pose2D, stack: &CostmapStack, config: &PredictionConfig) -> Result<GlobalPath> {
    let heading = heading_of(human);
    let raw = robot.position() + Point2::from_angle(heading) * config.behind_offset;
    let goal = snap_to_free(stack, raw, config.snap_radius)
        .ok_or_else(|| Error::PredictionUnavailable(format!("no free cell near {:.2},{:.2}", raw.x, raw.y)))?;
    plan_human_global(stack, human, Pose2D::from_point(goal, heading))
        .map_err(|e| Error::PredictionUnavailable(e.to_string()))
}

/// Index of the candidate goal best aligned with the human's motion.
pub fn select_goal(human: &HumanRecord, goals: &[Pose2D]) -> Option<usize> {
    let p = human.pose.position();
    let dir = Point2::from_angle(heading_of(human));
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, g) in goals.iter().enumerate() {
        let to = g.position() - p;
        let d = to.norm();
        let align = if d > 1e-9 { dir.dot(to) / d } else { 1.0 };
        let better = match best {
            None => true,
            Some((ba, bd, _)) => align > ba + 1e-12 || ((align - ba).abs() <= 1e-12 && d < bd - 1e-12),
        };
        if better {
            best = Some((align, d, i));
        }
    }
    best.map(|b| b.2)
}

pub fn predict_goal(human: &HumanRecord, config: &PredictionConfig, stack: &CostmapStack) -> Result<GlobalPath> {
    let i = select_goal(human, &config.goals).ok_or_else(|| Error::Config("no candidate goals".into()))?;
    plan_human_global(stack, human, config.goals[i]).map_err(|e| Error::PredictionUnavailable(e.to_string()))
}

/// Constant-velocity extrapolation sampled every `sample_dt`.
pub fn predict_vel_obs(human: &HumanRecord, horizon: f64, sample_dt: f64, v_static: f64) -> Result<GlobalPath> {
    let speed = human.velocity.norm();
    if speed < v_static || speed <= 0.0 {
        return Err(Error::PredictionUnavailable(format!("human {} is not moving", human.id)));
    }
    let steps = (horizon / sample_dt - 1e-9).ceil().max(1.0) as usize;
    let p0 = human.pose.position();
    let points: Vec<Point2> = (0..=steps)
        .map(|k| p0 + human.velocity * (k as f64 * sample_dt).min(horizon))
        .collect();
    let heading = human.velocity.y.atan2(human.velocity.x);
    Ok(GlobalPath::from_points(&points, Some(heading)))
}

/// Accepts a supplied path whose start lies near the human.
pub fn predict_external(human: &HumanRecord, supplied: &GlobalPath, tolerance: f64) -> Result<GlobalPath> {
    let start = supplied
        .start()
        .ok_or_else(|| Error::PredictionUnavailable("empty external path".into()))?;
    let d = start.position().distance(human.pose.position());
    if d > tolerance {
        return Err(Error::PredictionUnavailable(format!("external path starts {d:.2} m from human {}", human.id)));
    }
    Ok(supplied.clone())
}

/// Service mandated for a human in the given mode.
pub fn select_service(mode: PlanningMode, config: &PredictionConfig, has_external: bool) -> Option<PredictionService> {
    match mode {
        PlanningMode::SingleBand => None,
        PlanningMode::VelObs | PlanningMode::BackoffRecovery => Some(PredictionService::PredictVelObs),
        PlanningMode::DualBand => {
            if config.external && has_external {
                return Some(PredictionService::PredictExternal);
            }
            Some(match config.dual_band {
                DualBandService::PredictBehind => PredictionService::PredictBehind,
                DualBandService::PredictGoal => PredictionService::PredictGoal,
                DualBandService::None => PredictionService::PredictVelObs,
            })
        }
    }
}

/// Runs the selected service, falling back along external → configured →
/// constant velocity. Returns the service that actually produced the path.
pub fn predict(
    human: &HumanRecord,
    mode: PlanningMode,
    config: &PredictionConfig,
    robot: &Pose2D,
    stack: &CostmapStack,
    external: Option<&GlobalPath>,
    v_static: f64,
) -> Option<(PredictionService, GlobalPath)> {
    let service = select_service(mode, config, external.is_some())?;
    let vel_obs = || {
        predict_vel_obs(human, config.horizon, config.sample_dt, v_static)
            .ok()
            .map(|p| (PredictionService::PredictVelObs, p))
    };
    let configured = || {
        let r = match config.dual_band {
            DualBandService::PredictBehind => predict_behind(human, robot, stack, config).map(|p| (PredictionService::PredictBehind, p)),
            DualBandService::PredictGoal => predict_goal(human, config, stack).map(|p| (PredictionService::PredictGoal, p)),
            DualBandService::None => return vel_obs(),
        };
        r.ok().or_else(vel_obs)
    };
    match service {
        PredictionService::PredictVelObs => vel_obs(),
        PredictionService::PredictExternal => external
            .and_then(|s| predict_external(human, s, config.external_tolerance).ok())
            .map(|p| (PredictionService::PredictExternal, p))
            .or_else(configured),
        _ => configured(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hateb::Classification;
    use crate::world::OccupancyGrid;

    fn human(x: f64, y: f64, vx: f64, vy: f64) -> HumanRecord {
        HumanRecord {
            id: 1,
            pose: Pose2D::new(x, y, vy.atan2(vx)),
            velocity: Point2::new(vx, vy),
            classification: Classification::Dynamic,
            visible: true,
            observable: true,
            band: None,
        }
    }

    fn open(w: usize, h: usize) -> CostmapStack {
        CostmapStack::from_grid(OccupancyGrid::new(w, h, 0.1).unwrap())
    }

    #[test]
    fn vel_obs_extrapolates() {
        let p = predict_vel_obs(&human(0.0, 0.0, 1.0, 0.0), 2.0, 0.25, 0.1).unwrap();
        let g = p.goal().unwrap();
        assert!((g.x - 2.0).abs() < 1e-12 && g.y.abs() < 1e-12);
        assert_eq!(p.waypoints.len(), 9);
        assert!(matches!(
            predict_vel_obs(&human(0.0, 0.0, 0.0, 0.0), 2.0, 0.25, 0.1),
            Err(Error::PredictionUnavailable(_))
        ));
    }

    #[test]
    fn behind_goal_on_heading_line() {
        let stack = open(80, 20);
        // human 4 m ahead of the robot walking straight at it
        let h = human(6.05, 1.05, -1.0, 0.0);
        let robot = Pose2D::new(2.05, 1.05, 0.0);
        let cfg = PredictionConfig {
            behind_offset: 2.0,
            ..Default::default()
        };
        let path = predict_behind(&h, &robot, &stack, &cfg).unwrap();
        let g = path.goal().unwrap();
        assert!((g.x - 0.05).abs() < 1e-9 && (g.y - 1.05).abs() < 1e-9);
    }

    #[test]
    fn behind_goal_in_wall_is_unavailable() {
        let mut grid = OccupancyGrid::new(60, 60, 0.1).unwrap();
        for r in 0..60 {
            for c in 0..30 {
                grid.set_occupied(crate::world::CellIndex::new(c, r), true);
            }
        }
        let stack = CostmapStack::from_grid(grid);
        let h = human(5.0, 3.0, -1.0, 0.0);
        let robot = Pose2D::new(4.0, 3.0, 0.0);
        let cfg = PredictionConfig {
            behind_offset: 2.5,
            ..Default::default()
        };
        assert!(matches!(predict_behind(&h, &robot, &stack, &cfg), Err(Error::PredictionUnavailable(_))));
        let (svc, _) = predict(
            &h,
            PlanningMode::DualBand,
            &PredictionConfig {
                dual_band: DualBandService::PredictBehind,
                ..cfg
            },
            &robot,
            &stack,
            None,
            0.1,
        )
        .unwrap();
        assert_eq!(svc, PredictionService::PredictVelObs);
    }

    #[test]
    fn goal_selection_prefers_alignment_then_distance() {
        let h = human(0.0, 0.0, 1.0, 0.0);
        let goals = [Pose2D::new(-3.0, 0.0, 0.0), Pose2D::new(3.0, 0.0, 0.0)];
        assert_eq!(select_goal(&h, &goals), Some(1));
        let goals = [Pose2D::new(3.0, 3.0, 0.0), Pose2D::new(1.0, -1.0, 0.0)];
        assert_eq!(select_goal(&h, &goals), Some(1));
    }

    #[test]
    fn external_pass_through_and_rejection() {
        let h = human(1.0, 1.0, 1.0, 0.0);
        let ok = GlobalPath::from_points(&[Point2::new(1.1, 1.0), Point2::new(3.0, 2.0)], None);
        assert_eq!(predict_external(&h, &ok, 0.5).unwrap(), ok);
        let far = GlobalPath::from_points(&[Point2::new(3.0, 1.0), Point2::new(5.0, 2.0)], None);
        assert!(predict_external(&h, &far, 0.5).is_err());
    }

    #[test]
    fn service_selection() {
        let mut cfg = PredictionConfig::default();
        assert_eq!(select_service(PlanningMode::SingleBand, &cfg, true), None);
        assert_eq!(select_service(PlanningMode::VelObs, &cfg, true), Some(PredictionService::PredictVelObs));
        assert_eq!(select_service(PlanningMode::DualBand, &cfg, false), Some(PredictionService::PredictVelObs));
        cfg.dual_band = DualBandService::PredictBehind;
        cfg.external = true;
        assert_eq!(select_service(PlanningMode::DualBand, &cfg, true), Some(PredictionService::PredictExternal));
        assert_eq!(select_service(PlanningMode::DualBand, &cfg, false), Some(PredictionService::PredictBehind));
    }
}
