//! Grid A* global planner over the combined cost field.
//!
//! Edge weights are `step × (1 + scale · mean_cost / LETHAL)` where `step` is
//! 1 or √2 cells. Weights are quantized to integer micro-cells, which makes
//! path costs exact, tie-breaking platform independent and results
//! bit-reproducible.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::costmap::{CostmapStack, LETHAL};
use crate::error::{Error, Result};
use crate::hateb::HumanRecord;
use crate::world::{CellIndex, Point2, Pose2D};

/// Integer units per cell of travel.
pub const WEIGHT_SCALE: f64 = 1_000_000.0;
const STRAIGHT_FLOOR: u64 = 1_000_000;
const DIAGONAL_FLOOR: u64 = 1_414_213;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalPlannerParams {
    /// Multiplier on the normalized mean cell cost.
    pub cost_scale: f64,
    /// Cells with cost at or above this value are impassable.
    pub impassable: u8,
}

impl Default for GlobalPlannerParams {
    fn default() -> Self {
        Self {
            cost_scale: 3.0,
            impassable: LETHAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    pub waypoints: Vec<Pose2D>,
    /// Accumulated traversal cost in meters-equivalent.
    pub total_cost: f64,
}

impl GlobalPath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn start(&self) -> Option<&Pose2D> {
        self.waypoints.first()
    }

    pub fn goal(&self) -> Option<&Pose2D> {
        self.waypoints.last()
    }

    /// Straight polyline through the given points with tangent headings.
    pub fn from_points(points: &[Point2], goal_heading: Option<f64>) -> GlobalPath {
        let waypoints = assign_headings(points, goal_heading);
        let mut path = GlobalPath {
            waypoints,
            total_cost: 0.0,
        };
        path.total_cost = path.length();
        path
    }
}

fn assign_headings(points: &[Point2], goal_heading: Option<f64>) -> Vec<Pose2D> {
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    let mut last_heading = goal_heading.unwrap_or(0.0);
    for i in 0..n {
        let heading = if i + 1 < n {
            let d = points[i + 1] - points[i];
            if d.norm() > 1e-12 {
                d.y.atan2(d.x)
            } else {
                last_heading
            }
        } else {
            goal_heading.unwrap_or(last_heading)
        };
        last_heading = heading;
        out.push(Pose2D::from_point(points[i], heading));
    }
    out
}

/// Integer weight of an edge between adjacent cells.
pub fn edge_weight(cost_a: u8, cost_b: u8, diagonal: bool, cost_scale: f64) -> u64 {
    let step = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
    let mean = (cost_a as f64 + cost_b as f64) / 2.0;
    (step * (1.0 + cost_scale * mean / LETHAL as f64) * WEIGHT_SCALE).round() as u64
}

fn octile(a: CellIndex, b: CellIndex) -> u64 {
    let dx = a.col.abs_diff(b.col) as u64;
    let dy = a.row.abs_diff(b.row) as u64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) * STRAIGHT_FLOOR + lo * DIAGONAL_FLOOR
}

pub fn plan_global(stack: &CostmapStack, start: Pose2D, goal: Pose2D) -> Result<GlobalPath> {
    plan_global_with(stack, start, goal, &GlobalPlannerParams::default())
}

pub fn plan_global_with(stack: &CostmapStack, start: Pose2D, goal: Pose2D, params: &GlobalPlannerParams) -> Result<GlobalPath> {
    let grid = stack.grid();
    let s = grid
        .pose_to_grid(&start)
        .map_err(|_| Error::PlanInput(format!("start {start} outside the map")))?;
    let g = grid
        .pose_to_grid(&goal)
        .map_err(|_| Error::PlanInput(format!("goal {goal} outside the map")))?;
    if stack.cost(s) >= params.impassable {
        return Err(Error::PlanInput(format!("start {start} lies in lethal cost")));
    }
    if stack.cost(g) >= params.impassable {
        return Err(Error::PlanInput(format!("goal {goal} lies in lethal cost")));
    }
    let (cells, cost_units) = astar(stack, s, g, params).ok_or(Error::NoPath)?;

    let mut points = Vec::with_capacity(cells.len() + 1);
    points.push(start.position());
    if cells.len() > 2 {
        for c in &cells[1..cells.len() - 1] {
            points.push(grid.grid_to_world(*c));
        }
    }
    points.push(goal.position());
    Ok(GlobalPath {
        waypoints: assign_headings(&points, Some(goal.heading())),
        total_cost: cost_units as f64 / WEIGHT_SCALE * grid.resolution(),
    })
}

/// Plans for a human from its current pose, ignoring its own layer cost.
pub fn plan_human_global(stack: &CostmapStack, human: &HumanRecord, predicted_goal: Pose2D) -> Result<GlobalPath> {
    let own_free = stack.without_human_near(human.pose.position(), 1e-6);
    plan_global(&own_free, human.pose, predicted_goal)
}

/// Returns the cell sequence and its integer cost.
fn astar(stack: &CostmapStack, start: CellIndex, goal: CellIndex, params: &GlobalPlannerParams) -> Option<(Vec<CellIndex>, u64)> {
    let grid = stack.grid();
    let n = grid.len();
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let costs = stack.costs();
    let mut g_score = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let si = grid.linear(start);
    let gi = grid.linear(goal);
    g_score[si] = 0;
    let mut open = BinaryHeap::new();
    let h0 = octile(start, goal);
    open.push(Reverse((h0, h0, si)));

    while let Some(Reverse((_, _, idx))) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == gi {
            break;
        }
        let cell = grid.cell_of(idx);
        for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (col, row) = (cell.col as i64 + dc, cell.row as i64 + dr);
            if col < 0 || row < 0 || col >= w || row >= h {
                continue;
            }
            let ni = (row * w + col) as usize;
            if closed[ni] || costs[ni] >= params.impassable {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            let tentative = g_score[idx] + edge_weight(costs[idx], costs[ni], diagonal, params.cost_scale);
            if tentative < g_score[ni] {
                g_score[ni] = tentative;
                parent[ni] = idx;
                let hn = octile(CellIndex::new(col as usize, row as usize), goal);
                open.push(Reverse((tentative + hn, hn, ni)));
            }
        }
    }
    if g_score[gi] == u64::MAX {
        return None;
    }
    let mut cells = vec![goal];
    let mut cur = gi;
    while cur != si {
        cur = parent[cur];
        cells.push(grid.cell_of(cur));
    }
    cells.reverse();
    Some((cells, g_score[gi]))
}
