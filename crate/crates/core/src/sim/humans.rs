//! Scripted, non-reactive human motion. Every controller is a closed-form
//! function of time, so stepping is exact and independent of the robot.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::world::{ControllerKind, ControllerParams, HumanSpec, NoiseSpec, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub pose: Pose2D,
    pub velocity: Point2,
}

/// A human script with its per-seed perturbation applied.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanController {
    pub id: u32,
    pub kind: ControllerKind,
    pub params: ControllerParams,
    pub start: Pose2D,
    pub radius: f64,
}

impl HumanController {
    pub fn from_spec(spec: &HumanSpec) -> Self {
        Self {
            id: spec.id,
            kind: spec.controller,
            params: spec.params.clone(),
            start: spec.start,
            radius: spec.radius,
        }
    }

    /// Jitters start position, speed and script times by `noise`.
    pub fn perturbed(spec: &HumanSpec, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut c = Self::from_spec(spec);
        let mut sym = |half: f64| if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 };
        let offset = Point2::new(sym(noise.position), sym(noise.position));
        let speed_factor = 1.0 + sym(noise.speed);
        let dt_stop = sym(noise.timing);
        let dt_trigger = sym(noise.timing);
        c.start = Pose2D::from_point(c.start.position() + offset, c.start.heading());
        if let Some(center) = c.params.center.as_mut() {
            center[0] += offset.x;
            center[1] += offset.y;
        }
        c.params.speed = (c.params.speed * speed_factor).clamp(0.0, 2.0);
        c.params.stop_time = (c.params.stop_time + dt_stop).max(0.0);
        c.params.trigger_time = (c.params.trigger_time + dt_trigger).max(0.0);
        c
    }

    /// State at absolute time `t`.
    pub fn state_at(&self, t: f64) -> AgentState {
        let p = &self.params;
        let t = t.max(0.0);
        let still = AgentState {
            pose: self.start,
            velocity: Point2::default(),
        };
        match self.kind {
            ControllerKind::Idle => still,
            ControllerKind::Linear => self.straight(t),
            ControllerKind::MoveAndStop => {
                let moving = t < p.stop_time;
                let mut s = self.straight(t.min(p.stop_time));
                if !moving {
                    s.velocity = Point2::default();
                }
                s
            }
            ControllerKind::Circular => {
                let center = p.center.map(|c| Point2::new(c[0], c[1])).unwrap_or_default();
                let rel = self.start.position() - center;
                let phi0 = rel.y.atan2(rel.x);
                let dir = if p.direction < 0.0 { -1.0 } else { 1.0 };
                let rate = if p.radius > 0.0 { dir * p.speed / p.radius } else { 0.0 };
                let phi = phi0 + rate * t;
                let pos = center + Point2::from_angle(phi) * p.radius;
                let tangent = phi + dir * std::f64::consts::FRAC_PI_2;
                AgentState {
                    pose: Pose2D::from_point(pos, tangent),
                    velocity: Point2::from_angle(tangent) * p.speed,
                }
            }
            ControllerKind::RunToPoint => {
                let Some(target) = p.target else { return still };
                if t < p.trigger_time {
                    return still;
                }
                let d = target.position() - self.start.position();
                let total = d.norm();
                if total < 1e-12 || p.speed <= 0.0 {
                    return still;
                }
                let heading = d.y.atan2(d.x);
                let run = p.speed * (t - p.trigger_time);
                if run >= total {
                    return AgentState {
                        pose: Pose2D::from_point(target.position(), heading),
                        velocity: Point2::default(),
                    };
                }
                AgentState {
                    pose: Pose2D::from_point(self.start.position() + d * (run / total), heading),
                    velocity: Point2::from_angle(heading) * p.speed,
                }
            }
        }
    }

    fn straight(&self, moved_for: f64) -> AgentState {
        let dir = self.start.direction();
        AgentState {
            pose: Pose2D::from_point(self.start.position() + dir * (self.params.speed * moved_for), self.start.heading()),
            velocity: dir * self.params.speed,
        }
    }
}

/// Advances a human from `time` by `dt`.
pub fn human_controller_step(controller: &HumanController, time: f64, dt: f64) -> AgentState {
    controller.state_at(time + dt)
}
