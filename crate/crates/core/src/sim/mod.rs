//! Deterministic kinematic simulator with scripted humans and the reactive
//! baseline planner.

mod baseline;
mod episode;
mod humans;

pub use baseline::{BaselineConfig, BaselinePlanner};
pub use episode::{run_episode, run_episode_with, PlannerKind, SimConfig};
pub use humans::{human_controller_step, AgentState, HumanController};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hateb::TrackedHuman;
use crate::teb::VelocityCommand;
use crate::world::{OccupancyGrid, Pose2D, ScenarioSpec};

/// Exact unicycle motion over `dt` (circular arc when turning).
pub fn integrate_unicycle(pose: &Pose2D, cmd: VelocityCommand, dt: f64) -> Pose2D {
    let th = pose.heading();
    let dth = cmd.omega * dt;
    if dth.abs() < 1e-9 {
        // second-order expansion avoids the 0/0 of the arc formula
        let mid = th + dth / 2.0;
        return Pose2D::new(pose.x + cmd.v * dt * mid.cos(), pose.y + cmd.v * dt * mid.sin(), th + dth);
    }
    let r = cmd.v / cmd.omega;
    Pose2D::new(
        pose.x + r * ((th + dth).sin() - th.sin()),
        pose.y - r * ((th + dth).cos() - th.cos()),
        th + dth,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub pose: Pose2D,
    pub command: VelocityCommand,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionRecord {
    /// `None` means a static obstacle.
    pub human: Option<u32>,
    pub time: f64,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub step: u64,
    pub time: f64,
    pub robot: RobotState,
    pub controllers: Vec<HumanController>,
    pub humans: Vec<AgentState>,
    /// Contact onsets, append-only.
    pub collisions: Vec<CollisionRecord>,
    pub seed: u64,
    in_contact: Vec<bool>,
    wall_contact: bool,
}

impl SimState {
    pub fn new(spec: &ScenarioSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controllers: Vec<HumanController> = spec
            .humans
            .iter()
            .map(|h| HumanController::perturbed(h, &spec.noise, &mut rng))
            .collect();
        let humans = controllers.iter().map(|c| c.state_at(0.0)).collect();
        Self {
            step: 0,
            time: 0.0,
            robot: RobotState {
                pose: spec.robot.start,
                command: VelocityCommand::ZERO,
                radius: spec.robot.radius,
            },
            in_contact: vec![false; controllers.len()],
            controllers,
            humans,
            collisions: Vec::new(),
            seed,
            wall_contact: false,
        }
    }

    pub fn tracked_humans(&self) -> Vec<TrackedHuman> {
        self.controllers
            .iter()
            .zip(&self.humans)
            .map(|(c, s)| TrackedHuman {
                id: c.id,
                pose: s.pose,
                velocity: s.velocity,
                radius: c.radius,
            })
            .collect()
    }
}

/// Whether two discs overlap; symmetric in its arguments.
pub fn discs_collide(a: crate::world::Point2, ra: f64, b: crate::world::Point2, rb: f64) -> bool {
    a.distance(b) < ra + rb
}

/// Advances the world by `dt`. Returns the collisions that started.
pub fn step(state: &mut SimState, grid: &OccupancyGrid, command: VelocityCommand, dt: f64) -> Vec<CollisionRecord> {
    state.robot.pose = integrate_unicycle(&state.robot.pose, command, dt);
    state.robot.command = command;
    state.step += 1;
    state.time = state.step as f64 * dt;
    for (c, s) in state.controllers.iter().zip(state.humans.iter_mut()) {
        *s = c.state_at(state.time);
    }
    let mut started = Vec::new();
    let rp = state.robot.pose.position();
    for (i, (c, s)) in state.controllers.iter().zip(&state.humans).enumerate() {
        let hit = discs_collide(rp, state.robot.radius, s.pose.position(), c.radius);
        if hit && !state.in_contact[i] {
            started.push(CollisionRecord {
                human: Some(c.id),
                time: state.time,
                distance: rp.distance(s.pose.position()),
            });
        }
        state.in_contact[i] = hit;
    }
    let wall = !grid.disc_is_free(rp, state.robot.radius);
    if wall && !state.wall_contact {
        started.push(CollisionRecord {
            human: None,
            time: state.time,
            distance: 0.0,
        });
    }
    state.wall_contact = wall;
    state.collisions.extend(started.iter().copied());
    started
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn euler(pose: &Pose2D, cmd: VelocityCommand, dt: f64, n: usize) -> Pose2D {
        let h = dt / n as f64;
        let (mut x, mut y, mut th) = (pose.x, pose.y, pose.heading());
        for _ in 0..n {
            // midpoint rule per substep
            let mid = th + cmd.omega * h / 2.0;
            x += cmd.v * h * mid.cos();
            y += cmd.v * h * mid.sin();
            th += cmd.omega * h;
        }
        Pose2D::new(x, y, th)
    }

    #[test]
    fn straight_and_rotation() {
        let o = Pose2D::new(0.0, 0.0, 0.0);
        let p = integrate_unicycle(&o, VelocityCommand::new(1.0, 0.0), 0.1);
        assert!((p.x - 0.1).abs() < 1e-15 && p.y == 0.0 && p.heading() == 0.0);
        let p = integrate_unicycle(&o, VelocityCommand::new(0.0, PI), 0.5);
        assert!((p.heading() - PI / 2.0).abs() < 1e-12 && p.x == 0.0 && p.y == 0.0);
    }

    #[test]
    fn arc_on_unit_circle() {
        let o = Pose2D::new(0.0, 0.0, 0.0);
        let p = integrate_unicycle(&o, VelocityCommand::new(1.0, 1.0), PI / 2.0);
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arc_matches_fine_euler() {
        let start = Pose2D::new(1.0, -2.0, 0.7);
        for (v, w) in [(0.5, 0.3), (-0.15, 1.0), (0.4, -1.5), (0.3, 1e-11)] {
            let cmd = VelocityCommand::new(v, w);
            let a = integrate_unicycle(&start, cmd, 0.1);
            let b = euler(&start, cmd, 0.1, 1000);
            assert!(a.distance(&b) < 1e-6);
        }
    }
}
