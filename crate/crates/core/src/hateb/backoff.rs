//! Backoff recovery: reverse along the driven trail until a lateral pocket
//! opens up, then wait for the blocking human to pass.

use serde::{Deserialize, Serialize};

use super::{HumanRecord, ModeContext};
use crate::costmap::CostmapStack;
use crate::teb::VelocityCommand;
use crate::world::{Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackoffSubstate {
    #[default]
    Reversing,
    Waiting,
    Done,
    /// No pocket within the reversing budget, or a dead end.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackoffState {
    pub substate: BackoffSubstate,
    pub reversed: f64,
    pub wait_deadline: Option<f64>,
    /// Human the robot makes way for.
    pub human: Option<u32>,
    pub abort_reason: Option<String>,
    last: Option<Pose2D>,
    cursor: Option<usize>,
}

impl BackoffState {
    pub fn start(human: Option<u32>) -> Self {
        Self {
            human,
            ..Default::default()
        }
    }
}

const LOOKBACK: f64 = 0.4;

/// Whether a robot-sized disc fits right beside the robot on either side.
fn lateral_pocket(stack: &CostmapStack, robot: &Pose2D, radius: f64) -> bool {
    let normal = Point2::from_angle(robot.heading() + std::f64::consts::FRAC_PI_2);
    let grid = stack.grid();
    [1.0, -1.0].iter().any(|side| {
        let c = robot.position() + normal * (*side * (2.0 * radius + 0.05));
        grid.disc_is_free(c, radius) && grid.disc_is_free(robot.position() + normal * (*side * radius), radius)
    })
}

/// One control step of the recovery. `trail` holds past robot poses,
/// oldest first.
pub fn backoff_step(
    ctx: &mut ModeContext,
    robot: &Pose2D,
    stack: &CostmapStack,
    trail: &[Pose2D],
    humans: &[HumanRecord],
    radius: f64,
) -> VelocityCommand {
    let p = ctx.params;
    let time = ctx.time;
    let state = &mut ctx.backoff;
    if let Some(last) = state.last {
        state.reversed += last.distance(robot);
    }
    state.last = Some(*robot);
    match state.substate {
        BackoffSubstate::Done | BackoffSubstate::Aborted => VelocityCommand::ZERO,
        BackoffSubstate::Waiting => {
            let passed = state
                .human
                .and_then(|id| humans.iter().find(|h| h.id == id))
                .is_none_or(|h| robot.to_local(h.pose.position()).x < 0.0);
            if passed || state.wait_deadline.is_some_and(|d| time >= d - 1e-9) {
                state.substate = BackoffSubstate::Done;
            }
            VelocityCommand::ZERO
        }
        BackoffSubstate::Reversing => {
            if lateral_pocket(stack, robot, radius) {
                state.substate = BackoffSubstate::Waiting;
                state.wait_deadline = Some(time + p.t_wait);
                return VelocityCommand::ZERO;
            }
            if state.reversed >= p.l_back {
                state.substate = BackoffSubstate::Aborted;
                state.abort_reason = Some(format!("no free pocket within {:.1} m of reversing", p.l_back));
                return VelocityCommand::ZERO;
            }
            // walk the trail backwards to a point LOOKBACK behind the robot
            let mut i = state.cursor.unwrap_or(trail.len()).min(trail.len());
            while i > 0 && trail[i - 1].position().distance(robot.position()) < LOOKBACK {
                i -= 1;
            }
            state.cursor = Some(i);
            let target = if i > 0 { Some(trail[i - 1].position()) } else { None };
            let behind = robot.position() - robot.direction() * (radius * 0.5);
            let blocked = !stack.grid().disc_is_free(behind, radius * 0.9);
            let Some(target) = target.filter(|_| !blocked) else {
                state.substate = BackoffSubstate::Aborted;
                state.abort_reason = Some("dead end behind the robot".into());
                return VelocityCommand::ZERO;
            };
            let local = robot.to_local(target);
            let l2 = local.dot(local).max(1e-9);
            let v = -p.v_back;
            let omega = if local.x < 0.0 { 2.0 * v * local.y / l2 } else { 0.0 };
            VelocityCommand::new(v, omega)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hateb::{Classification, HatebParams};
    use crate::world::{CellIndex, OccupancyGrid};

    /// Corridor 1.0 m wide along x, optional alcove on the upper wall.
    fn corridor(alcove_at: Option<f64>) -> CostmapStack {
        let mut g = OccupancyGrid::new(100, 30, 0.1).unwrap();
        for c in 0..100 {
            for r in 0..30 {
                let y = r as f64 * 0.1 + 0.05;
                let x = c as f64 * 0.1 + 0.05;
                let in_corridor = (1.0..2.0).contains(&y);
                let in_alcove = alcove_at.is_some_and(|a| (x - a).abs() < 0.5 && (2.0..2.9).contains(&y));
                if !(in_corridor || in_alcove) {
                    g.set_occupied(CellIndex::new(c, r), true);
                }
            }
        }
        CostmapStack::from_grid(g)
    }

    fn human_ahead(x: f64) -> HumanRecord {
        HumanRecord {
            id: 7,
            pose: Pose2D::new(x, 1.5, std::f64::consts::PI),
            velocity: Point2::new(0.0, 0.0),
            classification: Classification::Static,
            visible: true,
            observable: true,
            band: None,
        }
    }

    fn trail(from: f64, to: f64) -> Vec<Pose2D> {
        let n = ((to - from) / 0.05).round() as usize;
        (0..=n).map(|k| Pose2D::new(from + k as f64 * 0.05, 1.5, 0.0)).collect()
    }

    fn run(stack: &CostmapStack, start_x: f64, trail_from: f64, human: HumanRecord, steps: usize) -> (ModeContext, Pose2D) {
        let mut ctx = ModeContext::new(HatebParams::default(), 0.0, 5.0);
        ctx.backoff = BackoffState::start(Some(7));
        let tr = trail(trail_from, start_x);
        let mut pose = Pose2D::new(start_x, 1.5, 0.0);
        for k in 0..steps {
            ctx.time = k as f64 * 0.1;
            let cmd = backoff_step(&mut ctx, &pose, stack, &tr, std::slice::from_ref(&human), 0.3);
            let th = pose.heading() + cmd.omega * 0.1;
            pose = Pose2D::new(pose.x + cmd.v * 0.1 * th.cos(), pose.y + cmd.v * 0.1 * th.sin(), th);
            if matches!(ctx.backoff.substate, BackoffSubstate::Done | BackoffSubstate::Aborted) {
                break;
            }
        }
        (ctx, pose)
    }

    #[test]
    fn reverses_to_alcove_and_waits() {
        let stack = corridor(Some(4.0));
        let (ctx, pose) = run(&stack, 5.0, 0.5, human_ahead(6.2), 60);
        assert_eq!(ctx.backoff.substate, BackoffSubstate::Waiting);
        assert!(pose.x < 5.0 && (pose.x - 4.0).abs() < 0.5, "stopped at {}", pose.x);
        assert!(ctx.backoff.wait_deadline.is_some());
    }

    #[test]
    fn human_passing_finishes_wait() {
        let stack = corridor(Some(4.0));
        let mut ctx = ModeContext::new(HatebParams::default(), 0.0, 5.0);
        ctx.backoff = BackoffState {
            substate: BackoffSubstate::Waiting,
            wait_deadline: Some(100.0),
            human: Some(7),
            ..Default::default()
        };
        let pose = Pose2D::new(4.0, 1.5, 0.0);
        backoff_step(&mut ctx, &pose, &stack, &[], &[human_ahead(5.0)], 0.3);
        assert_eq!(ctx.backoff.substate, BackoffSubstate::Waiting);
        backoff_step(&mut ctx, &pose, &stack, &[], &[human_ahead(3.0)], 0.3);
        assert_eq!(ctx.backoff.substate, BackoffSubstate::Done);
    }

    #[test]
    fn budget_exhausted_aborts() {
        let stack = corridor(None);
        let (ctx, _) = run(&stack, 8.0, 0.5, human_ahead(9.0), 400);
        assert_eq!(ctx.backoff.substate, BackoffSubstate::Aborted);
        assert!(ctx.backoff.reversed >= 3.0 - 1e-9);
    }

    #[test]
    fn dead_end_aborts() {
        let stack = corridor(None);
        let (ctx, pose) = run(&stack, 2.0, 1.0, human_ahead(3.0), 400);
        assert_eq!(ctx.backoff.substate, BackoffSubstate::Aborted);
        assert!(pose.x > 0.9);
        assert!(ctx.backoff.reversed < 3.0);
    }
}
