//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use hanav::costmap::{CostmapStack, HumanLayerParams};
use hanav::global_plan::GlobalPath;
use hanav::teb::{
    band_maintenance, evaluate_band, gradient, initialize_band, optimize, AgentRole, BandAgent, KinodynamicLimits,
    ObjectiveWeights, ObstacleSet, TebParams, TebProblem, TimedBand, VelocityCommand,
};
use hanav::world::{CellIndex, OccupancyGrid, Point2, Pose2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum rest-to-rest time over `d` with speed and acceleration caps.
pub fn trapezoid_time(d: f64, v_max: f64, a_max: f64) -> f64 {
    if d >= v_max * v_max / a_max {
        d / v_max + v_max / a_max
    } else {
        2.0 * (d / a_max).sqrt()
    }
}

/// Optimizes a band along a straight free corridor the way the planner does:
/// maintenance followed by a batch of iterations, repeated.
pub fn optimized_straight_band(length: f64, limits: &KinodynamicLimits) -> TimedBand {
    let params = TebParams::default();
    let weights = ObjectiveWeights::default();
    let path = GlobalPath::from_points(&[Point2::new(0.0, 0.0), Point2::new(length, 0.0)], Some(0.0));
    let mut band = initialize_band(&path, limits, 0.25).unwrap();
    let empty = ObstacleSet::default();
    for _ in 0..25 {
        band = band_maintenance(&band, params.dt_ref, params.hysteresis, params.dt_floor, params.max_configs);
        band = optimize(&band, None, &empty, &[], &weights, limits, &params, 0.3, 15).unwrap().0;
    }
    band
}

/// Plain Dijkstra over the 8-connected grid with the documented edge
/// weight `step × (1 + scale · mean / 255)` in integer micro-cells.
pub fn dijkstra_units(stack: &CostmapStack, start: CellIndex, goal: CellIndex, scale: f64) -> Option<u64> {
    let grid = stack.grid();
    let (w, h) = (grid.width(), grid.height());
    let cost = |c: usize, r: usize| stack.cost(CellIndex::new(c, r));
    if cost(start.col, start.row) == 255 || cost(goal.col, goal.row) == 255 {
        return None;
    }
    let mut dist = vec![u64::MAX; w * h];
    let mut heap = BinaryHeap::new();
    dist[start.row * w + start.col] = 0;
    heap.push(Reverse((0u64, start.col, start.row)));
    while let Some(Reverse((d, c, r))) = heap.pop() {
        if d > dist[r * w + c] {
            continue;
        }
        if (c, r) == (goal.col, goal.row) {
            return Some(d);
        }
        for dc in -1i64..=1 {
            for dr in -1i64..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                    continue;
                }
                let (nc, nr) = (nc as usize, nr as usize);
                if cost(nc, nr) == 255 {
                    continue;
                }
                let step = if dc != 0 && dr != 0 { 2f64.sqrt() } else { 1.0 };
                let mean = (cost(c, r) as f64 + cost(nc, nr) as f64) / 2.0;
                let wgt = (step * (1.0 + scale * mean / 255.0) * 1e6).round() as u64;
                let nd = d + wgt;
                if nd < dist[nr * w + nc] {
                    dist[nr * w + nc] = nd;
                    heap.push(Reverse((nd, nc, nr)));
                }
            }
        }
    }
    None
}

/// Random occupancy grid with the given obstacle density.
pub fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(w, h, 0.1).unwrap();
    for r in 0..h {
        for c in 0..w {
            if rng.gen_bool(density) {
                g.set_occupied(CellIndex::new(c, r), true);
            }
        }
    }
    g
}

pub fn safety_reference(human: Point2, q: Point2, p: &HumanLayerParams) -> f64 {
    let d = ((q.x - human.x).powi(2) + (q.y - human.y).powi(2)).sqrt();
    if d > p.safety_cutoff {
        0.0
    } else {
        p.safety_amplitude * (-(d * d) / (2.0 * p.safety_sigma * p.safety_sigma)).exp()
    }
}

pub fn visibility_reference(human: &Pose2D, q: Point2, p: &HumanLayerParams) -> f64 {
    let (dx, dy) = (q.x - human.x, q.y - human.y);
    let ahead = dx * human.heading().cos() + dy * human.heading().sin();
    let d = (dx * dx + dy * dy).sqrt();
    if ahead >= 0.0 || d > p.visibility_cutoff {
        0.0
    } else {
        p.visibility_amplitude * (-(d * d) / (2.0 * p.visibility_sigma * p.visibility_sigma)).exp()
    }
}

/// A random joint problem touching every objective term: a robot band near
/// point obstacles and static humans, one planned human band and one fixed
/// walker.
pub struct RandomProblem {
    pub agents: Vec<BandAgent>,
    pub obstacles: ObstacleSet,
    pub stack: CostmapStack,
}

fn wobbly_band(rng: &mut ChaCha8Rng, from: Point2, to: Point2, n: usize) -> TimedBand {
    let mut configs = Vec::with_capacity(n);
    for k in 0..n {
        let s = k as f64 / (n - 1) as f64;
        let p = from + (to - from) * s;
        let jitter = if k == 0 || k + 1 == n { 0.0 } else { 0.15 };
        let x = p.x + rng.gen_range(-jitter..=jitter);
        let y = p.y + rng.gen_range(-jitter..=jitter);
        let base = (to.y - from.y).atan2(to.x - from.x);
        configs.push(Pose2D::new(x, y, base + rng.gen_range(-0.6..0.6)));
    }
    let dts = (0..n - 1).map(|_| rng.gen_range(0.15..0.9)).collect();
    TimedBand::new(configs, dts).unwrap()
}

pub fn random_problem(seed: u64) -> RandomProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..12);
    let end = Point2::new(4.5, 2.0 + rng.gen_range(-1.0..1.0));
    let robot = wobbly_band(&mut rng, Point2::new(0.5, 2.0), end, n);
    let mut r = BandAgent::robot(robot, KinodynamicLimits::default(), 0.3);
    r.start_velocity = VelocityCommand::new(rng.gen_range(0.0..0.4), rng.gen_range(-0.5..0.5));

    let m = rng.gen_range(4..9);
    let hb = wobbly_band(&mut rng, Point2::new(4.5, 2.3), Point2::new(0.8, 1.8), m);
    let anchor = hb.configs().iter().map(|c| Point2::new(c.x + 0.1, c.y - 0.1)).collect();
    let human = BandAgent {
        band: hb,
        role: AgentRole::Human {
            nominal_speed: rng.gen_range(0.4..1.2),
        },
        limits: KinodynamicLimits::pedestrian(),
        radius: 0.3,
        start_velocity: VelocityCommand::new(0.6, 0.0),
        goal_velocity: None,
        fixed: false,
        anchor,
    };
    let walker = wobbly_band(&mut rng, Point2::new(2.5, 4.0), Point2::new(2.5, 0.0), 6);
    let fixed = BandAgent::fixed_other(walker, 0.3);

    let points = (0..6)
        .map(|_| Point2::new(rng.gen_range(0.5..4.5), rng.gen_range(1.2..2.8)))
        .collect();
    let grid = OccupancyGrid::new(60, 40, 0.1).unwrap();
    let sources: Vec<Pose2D> = (0..2)
        .map(|_| Pose2D::new(rng.gen_range(1.0..4.0), rng.gen_range(1.0..3.0), rng.gen_range(-3.0..3.0)))
        .collect();
    let stack = CostmapStack::from_grid(grid).with_human_sources(&sources, &HumanLayerParams::default());
    RandomProblem {
        agents: vec![r, human, fixed],
        obstacles: ObstacleSet::new(points, 0.5),
        stack,
    }
}

impl RandomProblem {
    pub fn problem(&self) -> TebProblem<'_> {
        TebProblem {
            agents: self.agents.clone(),
            obstacles: &self.obstacles,
            stack: Some(&self.stack),
            weights: ObjectiveWeights::default(),
            params: TebParams::default(),
        }
    }
}

/// One free variable of a band: interior configuration component or time
/// difference.
#[derive(Clone, Copy)]
enum Var {
    Config(usize, usize, usize),
    Dt(usize, usize),
}

fn variables(agents: &[BandAgent]) -> Vec<Var> {
    let mut out = Vec::new();
    for (a, agent) in agents.iter().enumerate() {
        let n = agent.band.len();
        if agent.fixed || n < 2 {
            continue;
        }
        for k in 1..n - 1 {
            for comp in 0..3 {
                out.push(Var::Config(a, k, comp));
            }
        }
        for i in 0..n - 1 {
            out.push(Var::Dt(a, i));
        }
    }
    out
}

fn shifted(agents: &[BandAgent], var: Var, h: f64) -> Vec<BandAgent> {
    let mut out = agents.to_vec();
    let (a, band) = match var {
        Var::Config(a, _, _) | Var::Dt(a, _) => (a, &agents[a].band),
    };
    let mut configs = band.configs().to_vec();
    let mut dts = band.time_diffs().to_vec();
    match var {
        Var::Config(_, k, 0) => configs[k].x += h,
        Var::Config(_, k, 1) => configs[k].y += h,
        Var::Config(_, k, _) => {
            let th = configs[k].heading();
            configs[k].set_heading(th + h);
        }
        Var::Dt(_, i) => dts[i] += h,
    }
    out[a].band = TimedBand::new(configs, dts).unwrap();
    out
}

/// Largest component-wise error between the analytic gradient and central
/// finite differences, relative to `max(1, |fd|)`.
pub fn gradient_error(problem: &TebProblem<'_>, h: f64) -> f64 {
    let analytic = gradient(problem);
    let vars = variables(&problem.agents);
    assert_eq!(analytic.len(), vars.len());
    let mut worst: f64 = 0.0;
    for (i, var) in vars.iter().enumerate() {
        let mut plus = problem.clone();
        plus.agents = shifted(&problem.agents, *var, h);
        let mut minus = problem.clone();
        minus.agents = shifted(&problem.agents, *var, -h);
        let fd = (evaluate_band(&plus).total - evaluate_band(&minus).total) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}
