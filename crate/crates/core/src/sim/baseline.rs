//! Reactive baseline: grid A* with humans as inflated discs and a
//! pure-pursuit follower. No human layers, prediction or modes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::costmap::{CostmapStack, INSCRIBED};
use crate::error::Result;
use crate::global_plan::{plan_global_with, GlobalPath, GlobalPlannerParams};
use crate::hateb::{Event, TrackedHuman};
use crate::teb::{KinodynamicLimits, ObstacleSet, VelocityCommand};
use crate::world::{normalize_angle, OccupancyGrid, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub lookahead: f64,
    pub replan_period: f64,
    /// Give up after having no path or a blocked lookahead this long.
    pub abort_after: f64,
    /// Clearance at which the follower starts slowing down.
    pub slow_distance: f64,
    /// Fraction of v_max kept when slowing for static obstacles.
    pub min_speed_fraction: f64,
    /// Half-angle of the forward cone used for clearance, radians.
    pub cone: f64,
    pub sensor_range: f64,
    pub goal_tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lookahead: 0.6,
            replan_period: 1.0,
            abort_after: 8.0,
            slow_distance: 0.8,
            min_speed_fraction: 0.2,
            cone: 0.6,
            sensor_range: 10.0,
            goal_tolerance: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselinePlanner {
    cfg: BaselineConfig,
    limits: KinodynamicLimits,
    global: GlobalPlannerParams,
    radius: f64,
    goal: Pose2D,
    inflated: CostmapStack,
    obstacles: ObstacleSet,
    path: Option<GlobalPath>,
    cursor: usize,
    last_replan: f64,
    stalled_since: Option<f64>,
    last_command: VelocityCommand,
    control_dt: f64,
    aborted: bool,
}

impl BaselinePlanner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Arc<OccupancyGrid>,
        start: Pose2D,
        goal: Pose2D,
        radius: f64,
        cfg: BaselineConfig,
        limits: KinodynamicLimits,
        global: GlobalPlannerParams,
        decay: f64,
        control_dt: f64,
    ) -> Result<Self> {
        let inflated = CostmapStack::from_grid((*grid).clone()).inflate(radius, decay);
        let path = plan_global_with(&inflated, start, goal, &global)?;
        Ok(Self {
            cfg,
            limits,
            global,
            radius,
            goal,
            obstacles: ObstacleSet::from_grid(&grid, 0.5),
            inflated,
            path: Some(path),
            cursor: 0,
            last_replan: 0.0,
            stalled_since: None,
            last_command: VelocityCommand::ZERO,
            control_dt,
            aborted: false,
        })
    }

    pub fn global_path(&self) -> Option<&GlobalPath> {
        self.path.as_ref()
    }

    /// Returns the command and any events; the planner aborts after being
    /// stalled for `abort_after` seconds.
    pub fn plan_step(&mut self, time: f64, robot: &Pose2D, humans: &[TrackedHuman]) -> (VelocityCommand, Vec<Event>) {
        let mut events = Vec::new();
        if self.aborted {
            return (VelocityCommand::ZERO, events);
        }
        if robot.position().distance(self.goal.position()) <= self.cfg.goal_tolerance {
            return (self.limit(VelocityCommand::ZERO), events);
        }
        let seen: Vec<&TrackedHuman> = humans
            .iter()
            .filter(|h| h.pose.position().distance(robot.position()) <= self.cfg.sensor_range)
            .collect();
        if time - self.last_replan >= self.cfg.replan_period - 1e-9 {
            self.last_replan = time;
            let centers: Vec<Point2> = seen.iter().map(|h| h.pose.position()).collect();
            let disc = seen.iter().map(|h| h.radius).fold(0.0, f64::max);
            let stack = if centers.is_empty() {
                self.inflated.clone()
            } else {
                // plain obstacles: lethal discs without the inflation ramp
                self.inflated.with_obstacle_discs(&centers, disc, self.radius, 0.0)
            };
            self.path = plan_global_with(&stack, *robot, self.goal, &self.global).ok();
            self.cursor = 0;
            events.push(Event::Replan {
                reason: if self.path.is_some() { "periodic".into() } else { "no path".into() },
            });
        }

        let path = self.path.take();
        let pursued = path.as_ref().and_then(|p| self.pursue(p, robot, &seen));
        self.path = path;
        let raw = match pursued {
            Some(cmd) => {
                self.stalled_since = None;
                cmd
            }
            None => {
                let since = *self.stalled_since.get_or_insert(time);
                if time - since >= self.cfg.abort_after - 1e-9 {
                    self.aborted = true;
                    events.push(Event::Abort {
                        reason: "blocked".into(),
                    });
                }
                VelocityCommand::ZERO
            }
        };
        (self.limit(raw), events)
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    fn limit(&mut self, cmd: VelocityCommand) -> VelocityCommand {
        let dt = self.control_dt;
        let prev = self.last_command;
        let dv = self.limits.a_max * dt;
        let dw = self.limits.alpha_max * dt;
        let out = VelocityCommand::new(
            cmd.v.clamp(prev.v - dv, prev.v + dv),
            cmd.omega.clamp(prev.omega - dw, prev.omega + dw),
        )
        .clamped(&self.limits);
        self.last_command = out;
        out
    }

    /// Pure pursuit toward the lookahead point; `None` when it is blocked.
    fn pursue(&mut self, path: &GlobalPath, robot: &Pose2D, humans: &[&TrackedHuman]) -> Option<VelocityCommand> {
        let w = &path.waypoints;
        if w.len() < 2 {
            return Some(VelocityCommand::ZERO);
        }
        // advance the cursor to the nearest waypoint ahead
        let mut best = (f64::INFINITY, self.cursor);
        for (i, wp) in w.iter().enumerate().skip(self.cursor) {
            let d = wp.position().distance(robot.position());
            if d < best.0 {
                best = (d, i);
            }
        }
        self.cursor = best.1;
        let mut target = w[w.len() - 1].position();
        for wp in &w[self.cursor..] {
            if wp.position().distance(robot.position()) >= self.cfg.lookahead {
                target = wp.position();
                break;
            }
        }
        let blocked = humans
            .iter()
            .any(|h| h.pose.position().distance(target) < h.radius + self.radius)
            || self.inflated.cost_at(target) >= INSCRIBED;
        if blocked {
            return None;
        }

        let local = robot.to_local(target);
        let bearing = local.y.atan2(local.x);
        if bearing.abs() > std::f64::consts::FRAC_PI_2 {
            return Some(VelocityCommand::new(0.0, bearing.signum() * self.limits.omega_max));
        }

        // clearance in the forward cone
        let heading = robot.heading();
        let in_cone = |q: Point2| {
            let d = q - robot.position();
            normalize_angle(d.y.atan2(d.x) - heading).abs() <= self.cfg.cone
        };
        let mut wall = f64::INFINITY;
        if let Some((q, d)) = self.obstacles.nearest_within(robot.position(), self.radius + self.cfg.slow_distance) {
            if in_cone(q) {
                wall = d - self.radius;
            }
        }
        let mut person = f64::INFINITY;
        for h in humans {
            let q = h.pose.position();
            if in_cone(q) {
                person = person.min(q.distance(robot.position()) - self.radius - h.radius);
            }
        }
        let s = self.cfg.slow_distance;
        let f_wall = (wall / s).clamp(self.cfg.min_speed_fraction, 1.0);
        let f_person = (person / s).clamp(0.0, 1.0);
        let v = self.limits.v_max * f_wall.min(f_person);
        let l2 = local.dot(local).max(1e-9);
        let omega = v * 2.0 * local.y / l2;
        // turn in place when the curvature demand exceeds the rate limit
        if omega.abs() > self.limits.omega_max {
            let scale = self.limits.omega_max / omega.abs();
            return Some(VelocityCommand::new(v * scale, omega * scale));
        }
        Some(VelocityCommand::new(v, omega))
    }
}
