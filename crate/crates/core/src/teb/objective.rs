//! Residual model of the band objective.
//!
//! Every objective term is a sum of squared scalar residuals `u`, weighted by
//! its `γ_k`. Residuals carry analytic partial derivatives with respect to
//! the free variables (interior configurations and all time differences of
//! every non-fixed band), which feed both the gradient and the Gauss-Newton
//! normal equations.

use super::band::{TimedBand, VelocityCommand};
use super::obstacles::ObstacleSet;
use super::{KinodynamicLimits, ObjectiveWeights, TebParams};
use crate::costmap::{CostmapStack, LETHAL};
use crate::world::{normalize_angle, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentRole {
    Robot,
    /// Planned-for human, pulled towards its observed walking speed.
    Human { nominal_speed: f64 },
}

#[derive(Debug, Clone)]
pub struct BandAgent {
    pub band: TimedBand,
    pub role: AgentRole,
    pub limits: KinodynamicLimits,
    pub radius: f64,
    pub start_velocity: VelocityCommand,
    /// Required velocity at the last configuration; `None` leaves it free.
    pub goal_velocity: Option<VelocityCommand>,
    /// Fixed agents take part in separation terms only.
    pub fixed: bool,
    /// Predicted positions a human band is pulled back to, one per
    /// configuration; empty for none.
    pub anchor: Vec<Point2>,
}

impl BandAgent {
    pub fn robot(band: TimedBand, limits: KinodynamicLimits, radius: f64) -> Self {
        Self {
            band,
            role: AgentRole::Robot,
            limits,
            radius,
            start_velocity: VelocityCommand::ZERO,
            goal_velocity: Some(VelocityCommand::ZERO),
            fixed: false,
            anchor: Vec::new(),
        }
    }

    /// A fixed obstacle agent following `band` (a single pose means standing).
    pub fn fixed_other(band: TimedBand, radius: f64) -> Self {
        Self {
            band,
            role: AgentRole::Human { nominal_speed: 0.0 },
            limits: KinodynamicLimits::pedestrian(),
            radius,
            start_velocity: VelocityCommand::ZERO,
            goal_velocity: None,
            fixed: true,
            anchor: Vec::new(),
        }
    }
}

/// Everything the objective depends on. Agent 0 is the robot.
#[derive(Debug, Clone)]
pub struct TebProblem<'a> {
    pub agents: Vec<BandAgent>,
    pub obstacles: &'a ObstacleSet,
    pub stack: Option<&'a CostmapStack>,
    pub weights: ObjectiveWeights,
    pub params: TebParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    pub time: f64,
    pub obstacle: f64,
    pub kinodynamic: f64,
    pub human_safety: f64,
    pub human_visibility: f64,
    pub agent_separation: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn values(&self) -> [f64; 6] {
        [
            self.time,
            self.obstacle,
            self.kinodynamic,
            self.human_safety,
            self.human_visibility,
            self.agent_separation,
        ]
    }

    fn add(&mut self, kind: Kind, value: f64) {
        match kind {
            Kind::Time => self.time += value,
            Kind::Obstacle => self.obstacle += value,
            Kind::Kinodynamic => self.kinodynamic += value,
            Kind::HumanSafety => self.human_safety += value,
            Kind::HumanVisibility => self.human_visibility += value,
            Kind::Separation => self.agent_separation += value,
        }
    }

    fn finish(&mut self, weights: &ObjectiveWeights) {
        self.total = self
            .values()
            .iter()
            .zip(weights.as_array())
            .map(|(f, w)| if w == 0.0 { 0.0 } else { w * f })
            .sum();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEvaluation {
    /// One breakdown per agent; fixed agents report zeros.
    pub per_agent: Vec<ObjectiveBreakdown>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Time,
    Obstacle,
    Kinodynamic,
    HumanSafety,
    HumanVisibility,
    Separation,
}

const MAX_PARTIALS: usize = 12;

/// One scalar residual with its non-zero partials.
pub(crate) struct Row {
    pub kind: Kind,
    pub owner: usize,
    pub u: f64,
    pub len: usize,
    pub idx: [usize; MAX_PARTIALS],
    pub val: [f64; MAX_PARTIALS],
}

impl Row {
    fn new(kind: Kind, owner: usize, u: f64) -> Self {
        Self {
            kind,
            owner,
            u,
            len: 0,
            idx: [0; MAX_PARTIALS],
            val: [0.0; MAX_PARTIALS],
        }
    }

    fn push(&mut self, var: Option<usize>, value: f64) {
        if let Some(v) = var {
            if value != 0.0 {
                self.idx[self.len] = v;
                self.val[self.len] = value;
                self.len += 1;
            }
        }
    }
}

/// Index of the free variables across all agents.
#[derive(Debug, Clone)]
pub(crate) struct VarLayout {
    base: Vec<Option<usize>>,
    n: Vec<usize>,
    pub total: usize,
}

impl VarLayout {
    pub fn new(agents: &[BandAgent]) -> Self {
        let mut base = Vec::with_capacity(agents.len());
        let mut n = Vec::with_capacity(agents.len());
        let mut total = 0;
        for a in agents {
            let len = a.band.len();
            n.push(len);
            if a.fixed || len < 2 {
                base.push(None);
            } else {
                base.push(Some(total));
                total += 3 * (len - 2) + (len - 1);
            }
        }
        Self { base, n, total }
    }

    /// Variable of component `comp` (x, y, heading) of configuration `k`.
    pub fn config(&self, agent: usize, k: usize, comp: usize) -> Option<usize> {
        let b = self.base[agent]?;
        let n = self.n[agent];
        if k == 0 || k + 1 >= n {
            return None;
        }
        Some(b + 3 * (k - 1) + comp)
    }

    pub fn dt(&self, agent: usize, i: usize) -> Option<usize> {
        let b = self.base[agent]?;
        let n = self.n[agent];
        Some(b + 3 * (n - 2) + i)
    }

    pub fn is_free(&self, agent: usize) -> bool {
        self.base[agent].is_some()
    }
}

/// Per-iteration discrete choices: obstacle binding and time alignment.
#[derive(Debug, Clone)]
pub(crate) struct Association {
    /// For each agent and configuration, the bound obstacle point.
    obstacle: Vec<Vec<Option<Point2>>>,
    /// (robot config, other agent, other config)
    pairs: Vec<(usize, usize, usize)>,
    /// A free configuration lies in a lethal cell.
    pub lethal: bool,
}

impl Association {
    pub fn compute(problem: &TebProblem<'_>) -> Self {
        let bind = problem.params.obstacle_bind_factor * problem.params.d_safe;
        let mut lethal = false;
        let mut obstacle = Vec::with_capacity(problem.agents.len());
        for agent in &problem.agents {
            if agent.fixed {
                obstacle.push(Vec::new());
                continue;
            }
            let cfgs = agent.band.configs();
            let n = cfgs.len();
            let mut row = Vec::with_capacity(n);
            for (k, c) in cfgs.iter().enumerate() {
                let interior = k > 0 && k + 1 < n;
                if interior {
                    if let Some(stack) = problem.stack {
                        if stack.cost_at(c.position()) == LETHAL {
                            lethal = true;
                        }
                    }
                    if !c.x.is_finite() || !c.y.is_finite() || !c.heading().is_finite() {
                        lethal = true;
                    }
                }
                row.push(if interior {
                    problem.obstacles.nearest_within(c.position(), bind).map(|(p, _)| p)
                } else {
                    None
                });
            }
            obstacle.push(row);
        }

        let mut pairs = Vec::new();
        if let Some(robot) = problem.agents.first() {
            if !robot.fixed {
                let t_robot = robot.band.timestamps();
                for (b, other) in problem.agents.iter().enumerate().skip(1) {
                    let t_other = other.band.timestamps();
                    let horizon = *t_other.last().expect("non-empty");
                    for (k, t) in t_robot.iter().enumerate().skip(1) {
                        if other.band.len() == 1 {
                            pairs.push((k, b, 0));
                            continue;
                        }
                        // past its horizon the other agent stays at its last pose
                        if *t > horizon {
                            pairs.push((k, b, other.band.len() - 1));
                            continue;
                        }
                        let j = match t_other.binary_search_by(|x| x.total_cmp(t)) {
                            Ok(j) => j,
                            Err(j) => {
                                if j == 0 {
                                    0
                                } else if j >= t_other.len() {
                                    t_other.len() - 1
                                } else if (t_other[j] - t) < (t - t_other[j - 1]) {
                                    j
                                } else {
                                    j - 1
                                }
                            }
                        };
                        pairs.push((k, b, j));
                    }
                }
            }
        }
        Self { obstacle, pairs, lethal }
    }
}

/// Kinematics of one segment with partials w.r.t.
/// `[x_i, y_i, θ_i, x_j, y_j, θ_j, ΔT_i]`.
struct Segment {
    v: f64,
    dv: [f64; 7],
    w: f64,
    dw: [f64; 7],
    nh: f64,
    dnh: [f64; 7],
}

fn segment(a: &crate::world::Pose2D, b: &crate::world::Pose2D, dt: f64) -> Segment {
    let (si, ci) = a.heading().sin_cos();
    let (sj, cj) = b.heading().sin_cos();
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let cs = ci + cj;
    let ss = si + sj;
    let long = 0.5 * (cs * dx + ss * dy);
    let dlong = [
        -0.5 * cs,
        -0.5 * ss,
        0.5 * (-si * dx + ci * dy),
        0.5 * cs,
        0.5 * ss,
        0.5 * (-sj * dx + cj * dy),
        0.0,
    ];
    let v = long / dt;
    let mut dv = [0.0; 7];
    for k in 0..6 {
        dv[k] = dlong[k] / dt;
    }
    dv[6] = -v / dt;

    let turn = normalize_angle(b.heading() - a.heading());
    let w = turn / dt;
    let dw = [0.0, 0.0, -1.0 / dt, 0.0, 0.0, 1.0 / dt, -w / dt];

    let nh = cs * dy - ss * dx;
    let dnh = [ss, -cs, -si * dy - ci * dx, -ss, cs, -sj * dy - cj * dx, 0.0];
    Segment { v, dv, w, dw, nh, dnh }
}

fn hinge_upper(value: f64, limit: f64) -> f64 {
    (value - limit).max(0.0)
}

/// Enumerates every residual of the problem.
pub(crate) fn for_each_residual<F: FnMut(&Row)>(problem: &TebProblem<'_>, layout: &VarLayout, assoc: &Association, mut sink: F) {
    let params = &problem.params;
    for (a, agent) in problem.agents.iter().enumerate() {
        if agent.fixed {
            continue;
        }
        let cfgs = agent.band.configs();
        let dts = agent.band.time_diffs();
        let n = cfgs.len();
        if n < 2 {
            continue;
        }
        let is_robot = agent.role == AgentRole::Robot;
        let seg_vars = |i: usize| -> [Option<usize>; 7] {
            [
                layout.config(a, i, 0),
                layout.config(a, i, 1),
                layout.config(a, i, 2),
                layout.config(a, i + 1, 0),
                layout.config(a, i + 1, 1),
                layout.config(a, i + 1, 2),
                layout.dt(a, i),
            ]
        };

        // time
        if is_robot {
            for (i, dt) in dts.iter().enumerate() {
                let u = dt.sqrt();
                let mut row = Row::new(Kind::Time, a, u);
                row.push(layout.dt(a, i), 0.5 / u);
                sink(&row);
            }
        }

        // obstacles and human layers on interior configurations
        for k in 1..n - 1 {
            let p = cfgs[k].position();
            if let Some(o) = assoc.obstacle[a][k] {
                let d = p.distance(o);
                let u = (params.d_safe - d).max(0.0);
                if u > 0.0 {
                    let mut row = Row::new(Kind::Obstacle, a, u);
                    if d > 1e-12 {
                        row.push(layout.config(a, k, 0), -(p.x - o.x) / d);
                        row.push(layout.config(a, k, 1), -(p.y - o.y) / d);
                    }
                    sink(&row);
                }
            }
            if is_robot {
                if let Some(stack) = problem.stack {
                    human_layer_rows(stack, p, a, k, layout, &mut sink);
                }
            }
        }

        // humans keep close to their predicted path
        if !is_robot && agent.anchor.len() == n && params.human_path_gain > 0.0 {
            let g = params.human_path_gain.sqrt();
            for k in 1..n - 1 {
                let (p, q) = (cfgs[k].position(), agent.anchor[k]);
                for (comp, u) in [(0, p.x - q.x), (1, p.y - q.y)] {
                    let mut row = Row::new(Kind::Kinodynamic, a, g * u);
                    row.push(layout.config(a, k, comp), g);
                    sink(&row);
                }
            }
        }

        // kinodynamics
        let segs: Vec<Segment> = (0..n - 1).map(|i| segment(&cfgs[i], &cfgs[i + 1], dts[i])).collect();
        let lim = &agent.limits;
        let nh_gain = params.nonholonomic_gain.sqrt();
        for (i, s) in segs.iter().enumerate() {
            let vars = seg_vars(i);
            let emit7 = |u: f64, scale: f64, d: &[f64; 7], sink: &mut F| {
                let mut row = Row::new(Kind::Kinodynamic, a, u);
                for k in 0..7 {
                    row.push(vars[k], scale * d[k]);
                }
                sink(&row);
            };
            let over = hinge_upper(s.v, lim.v_max);
            if over > 0.0 {
                emit7(over, 1.0, &s.dv, &mut sink);
            }
            let under = hinge_upper(lim.v_min, s.v);
            if under > 0.0 {
                emit7(under, -1.0, &s.dv, &mut sink);
            }
            let spin = hinge_upper(s.w.abs(), lim.omega_max);
            if spin > 0.0 {
                emit7(spin, s.w.signum(), &s.dw, &mut sink);
            }
            emit7(nh_gain * s.nh, nh_gain, &s.dnh, &mut sink);
            if let AgentRole::Human { nominal_speed } = agent.role {
                let g = params.human_speed_gain.sqrt();
                emit7(g * (s.v - nominal_speed), g, &s.dv, &mut sink);
            }
        }

        // accelerations between consecutive segments
        for i in 0..segs.len().saturating_sub(1) {
            let (s1, s2) = (&segs[i], &segs[i + 1]);
            let t = dts[i] + dts[i + 1];
            let vars = [
                layout.config(a, i, 0),
                layout.config(a, i, 1),
                layout.config(a, i, 2),
                layout.config(a, i + 1, 0),
                layout.config(a, i + 1, 1),
                layout.config(a, i + 1, 2),
                layout.config(a, i + 2, 0),
                layout.config(a, i + 2, 1),
                layout.config(a, i + 2, 2),
                layout.dt(a, i),
                layout.dt(a, i + 1),
            ];
            for (value, d1, d2, limit) in [(s1.v, &s1.dv, &s2.dv, lim.a_max), (s1.w, &s1.dw, &s2.dw, lim.alpha_max)] {
                let second = if limit == lim.a_max { s2.v } else { s2.w };
                let acc = 2.0 * (second - value) / t;
                let u = hinge_upper(acc.abs(), limit);
                if u <= 0.0 {
                    continue;
                }
                let sg = acc.signum();
                // d1 over [ci, cj, dti]; d2 over [cj, ck, dtj]
                let mut local = [0.0; 11];
                for k in 0..3 {
                    local[k] -= d1[k];
                    local[3 + k] += d2[k] - d1[3 + k];
                    local[6 + k] += d2[3 + k];
                }
                local[9] -= d1[6];
                local[10] += d2[6];
                let mut row = Row::new(Kind::Kinodynamic, a, u);
                for k in 0..11 {
                    let mut g = 2.0 * local[k] / t;
                    if k >= 9 {
                        g -= acc / t;
                    }
                    row.push(vars[k], sg * g);
                }
                sink(&row);
            }
        }

        // boundary accelerations against the start and goal velocities
        {
            let s0 = &segs[0];
            let vars = seg_vars(0);
            let dt0 = dts[0];
            let start = agent.start_velocity;
            for (value, d, reference, limit) in [(s0.v, &s0.dv, start.v, lim.a_max), (s0.w, &s0.dw, start.omega, lim.alpha_max)] {
                let acc = (value - reference) / dt0;
                let u = hinge_upper(acc.abs(), limit);
                if u <= 0.0 {
                    continue;
                }
                let sg = acc.signum();
                let mut row = Row::new(Kind::Kinodynamic, a, u);
                for k in 0..6 {
                    row.push(vars[k], sg * d[k] / dt0);
                }
                row.push(vars[6], sg * (d[6] / dt0 - acc / dt0));
                sink(&row);
            }
        }
        if let Some(goal) = agent.goal_velocity {
            let last = segs.len() - 1;
            let sl = &segs[last];
            let vars = seg_vars(last);
            let dtl = dts[last];
            for (value, d, reference, limit) in [(sl.v, &sl.dv, goal.v, lim.a_max), (sl.w, &sl.dw, goal.omega, lim.alpha_max)] {
                let acc = (reference - value) / dtl;
                let u = hinge_upper(acc.abs(), limit);
                if u <= 0.0 {
                    continue;
                }
                let sg = acc.signum();
                let mut row = Row::new(Kind::Kinodynamic, a, u);
                for k in 0..6 {
                    row.push(vars[k], -sg * d[k] / dtl);
                }
                row.push(vars[6], sg * (-d[6] / dtl - acc / dtl));
                sink(&row);
            }
        }
    }

    // separation between the robot and every other agent
    if let Some(robot) = problem.agents.first() {
        let gap = params.d_agent;
        for &(k, b, j) in &assoc.pairs {
            let other = &problem.agents[b];
            let p = robot.band.configs()[k].position();
            let q = other.band.configs()[j].position();
            let limit = robot.radius + other.radius + gap;
            let d = p.distance(q);
            let u = (limit - d).max(0.0);
            if u <= 0.0 {
                continue;
            }
            let mut row = Row::new(Kind::Separation, 0, u);
            if d > 1e-12 {
                let (ex, ey) = ((p.x - q.x) / d, (p.y - q.y) / d);
                row.push(layout.config(0, k, 0), -ex);
                row.push(layout.config(0, k, 1), -ey);
                row.push(layout.config(b, j, 0), ex);
                row.push(layout.config(b, j, 1), ey);
            }
            sink(&row);
        }
    }
}

fn human_layer_rows<F: FnMut(&Row)>(stack: &CostmapStack, p: Point2, a: usize, k: usize, layout: &VarLayout, sink: &mut F) {
    let params = stack.human_params();
    let mut best_s: Option<(f64, Point2)> = None;
    let mut best_v: Option<(f64, Point2)> = None;
    for src in stack.human_sources() {
        let s = crate::costmap::human_safety_cost(src, p, params);
        if s > 0.0 && best_s.is_none_or(|(b, _)| s > b) {
            best_s = Some((s, src.position()));
        }
        let v = crate::costmap::human_visibility_cost(src, p, params);
        if v > 0.0 && best_v.is_none_or(|(b, _)| v > b) {
            best_v = Some((v, src.position()));
        }
    }
    let lethal = LETHAL as f64;
    for (best, sigma, kind) in [
        (best_s, params.safety_sigma, Kind::HumanSafety),
        (best_v, params.visibility_sigma, Kind::HumanVisibility),
    ] {
        if let Some((cost, h)) = best {
            let u = (cost / lethal).sqrt();
            let mut row = Row::new(kind, a, u);
            let f = -u / (2.0 * sigma * sigma);
            row.push(layout.config(a, k, 0), f * (p.x - h.x));
            row.push(layout.config(a, k, 1), f * (p.y - h.y));
            sink(&row);
        }
    }
}

/// Weights that apply to an agent's own terms.
pub(crate) fn agent_weights(problem: &TebProblem<'_>, agent: usize) -> ObjectiveWeights {
    let w = problem.weights;
    match problem.agents[agent].role {
        AgentRole::Robot => w,
        AgentRole::Human { .. } => ObjectiveWeights {
            time: 0.0,
            human_safety: 0.0,
            human_visibility: 0.0,
            ..w
        },
    }
}

pub(crate) fn kind_weight(w: &ObjectiveWeights, kind: Kind) -> f64 {
    match kind {
        Kind::Time => w.time,
        Kind::Obstacle => w.obstacle,
        Kind::Kinodynamic => w.kinodynamic,
        Kind::HumanSafety => w.human_safety,
        Kind::HumanVisibility => w.human_visibility,
        Kind::Separation => w.agent_separation,
    }
}

pub(crate) fn evaluate_with(problem: &TebProblem<'_>, layout: &VarLayout, assoc: &Association) -> JointEvaluation {
    let mut per_agent = vec![ObjectiveBreakdown::default(); problem.agents.len()];
    if assoc.lethal {
        per_agent[0] = ObjectiveBreakdown {
            total: f64::INFINITY,
            ..Default::default()
        };
        return JointEvaluation {
            per_agent,
            total: f64::INFINITY,
        };
    }
    for_each_residual(problem, layout, assoc, |row| {
        per_agent[row.owner].add(row.kind, row.u * row.u);
    });
    let mut total = 0.0;
    for (i, b) in per_agent.iter_mut().enumerate() {
        let w = agent_weights(problem, i);
        b.finish(&w);
        total += b.total;
    }
    if !total.is_finite() {
        total = f64::INFINITY;
    }
    JointEvaluation { per_agent, total }
}

/// Objective of the whole joint problem.
pub fn evaluate_band(problem: &TebProblem<'_>) -> JointEvaluation {
    let layout = VarLayout::new(&problem.agents);
    let assoc = Association::compute(problem);
    evaluate_with(problem, &layout, &assoc)
}

/// Objective breakdown of a single robot band against fixed other agents.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_objective(
    band: &TimedBand,
    stack: Option<&CostmapStack>,
    obstacles: &ObstacleSet,
    others: &[BandAgent],
    weights: &ObjectiveWeights,
    limits: &KinodynamicLimits,
    params: &TebParams,
    radius: f64,
) -> ObjectiveBreakdown {
    let mut agents = vec![BandAgent::robot(band.clone(), *limits, radius)];
    agents.extend(others.iter().cloned().map(|mut o| {
        o.fixed = true;
        o
    }));
    let problem = TebProblem {
        agents,
        obstacles,
        stack,
        weights: *weights,
        params: *params,
    };
    evaluate_band(&problem).per_agent[0]
}

/// Analytic gradient of the total objective w.r.t. the free variables, in
/// layout order (per agent: interior x, y, θ triples, then time differences).
pub fn gradient(problem: &TebProblem<'_>) -> Vec<f64> {
    let layout = VarLayout::new(&problem.agents);
    let assoc = Association::compute(problem);
    let weights: Vec<ObjectiveWeights> = (0..problem.agents.len()).map(|i| agent_weights(problem, i)).collect();
    let mut g = vec![0.0; layout.total];
    for_each_residual(problem, &layout, &assoc, |row| {
        let w = kind_weight(&weights[row.owner], row.kind);
        if w == 0.0 {
            return;
        }
        for k in 0..row.len {
            g[row.idx[k]] += 2.0 * w * row.u * row.val[k];
        }
    });
    g
}

/// Reads the free variables out of the agents' bands, in layout order.
pub(crate) fn pack(agents: &[BandAgent], layout: &VarLayout) -> Vec<f64> {
    let mut x = vec![0.0; layout.total];
    for (a, agent) in agents.iter().enumerate() {
        if !layout.is_free(a) {
            continue;
        }
        let n = agent.band.len();
        for k in 1..n - 1 {
            let c = agent.band.configs()[k];
            x[layout.config(a, k, 0).unwrap()] = c.x;
            x[layout.config(a, k, 1).unwrap()] = c.y;
            x[layout.config(a, k, 2).unwrap()] = c.heading();
        }
        for i in 0..n - 1 {
            x[layout.dt(a, i).unwrap()] = agent.band.time_diffs()[i];
        }
    }
    x
}

/// Writes the free variables back, flooring time differences.
pub(crate) fn unpack(agents: &mut [BandAgent], layout: &VarLayout, x: &[f64], dt_floor: f64) {
    for (a, agent) in agents.iter_mut().enumerate() {
        if !layout.is_free(a) {
            continue;
        }
        let n = agent.band.len();
        let cfgs = agent.band.configs_mut();
        for k in 1..n - 1 {
            cfgs[k] = crate::world::Pose2D::new(
                x[layout.config(a, k, 0).unwrap()],
                x[layout.config(a, k, 1).unwrap()],
                x[layout.config(a, k, 2).unwrap()],
            );
        }
        let dts = agent.band.time_diffs_mut();
        for (i, dt) in dts.iter_mut().enumerate() {
            *dt = x[layout.dt(a, i).unwrap()].max(dt_floor);
        }
    }
}

/// Ordering key of every variable: time along its band, then agent.
pub(crate) fn variable_keys(agents: &[BandAgent], layout: &VarLayout) -> Vec<(f64, usize, usize)> {
    let mut keys = vec![(0.0, 0, 0); layout.total];
    for (a, agent) in agents.iter().enumerate() {
        if !layout.is_free(a) {
            continue;
        }
        let ts = agent.band.timestamps();
        let n = agent.band.len();
        for k in 1..n - 1 {
            for comp in 0..3 {
                let v = layout.config(a, k, comp).unwrap();
                keys[v] = (ts[k], a, v);
            }
        }
        for i in 0..n - 1 {
            let v = layout.dt(a, i).unwrap();
            keys[v] = ((ts[i] + ts[i + 1]) / 2.0, a, v);
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::HumanLayerParams;
    use crate::world::{OccupancyGrid, Pose2D};

    fn line(xs: &[f64], dt: f64) -> TimedBand {
        let configs = xs.iter().map(|x| Pose2D::new(*x, 0.0, 0.0)).collect();
        TimedBand::new(configs, vec![dt; xs.len() - 1]).unwrap()
    }

    fn breakdown(band: &TimedBand, obstacles: &ObstacleSet, others: &[BandAgent], stack: Option<&CostmapStack>) -> ObjectiveBreakdown {
        let params = TebParams::default();
        evaluate_objective(
            band,
            stack,
            obstacles,
            others,
            &ObjectiveWeights::default(),
            &KinodynamicLimits::default(),
            &params,
            0.3,
        )
    }

    #[test]
    fn time_term_is_total_time() {
        let band = line(&[0.0, 0.1, 0.2, 0.3], 0.4);
        let b = breakdown(&band, &ObstacleSet::default(), &[], None);
        assert!((b.time - band.total_time()).abs() < 1e-12);
    }

    #[test]
    fn obstacle_penalty_only_inside_clearance() {
        let band = line(&[0.0, 0.1, 0.2, 0.3], 0.4);
        let far = ObstacleSet::new(vec![Point2::new(0.1, 0.45)], 0.5);
        assert_eq!(breakdown(&band, &far, &[], None).obstacle, 0.0);
        let near = ObstacleSet::new(vec![Point2::new(0.1, 0.3)], 0.5);
        let b = breakdown(&band, &near, &[], None);
        // the middle configs bind the same point, at 0.3 and √(0.01 + 0.09)
        let expect = (0.4f64 - 0.3).powi(2) + (0.4 - 0.1f64.sqrt()).powi(2);
        assert!((b.obstacle - expect).abs() < 1e-12, "{}", b.obstacle);
    }

    #[test]
    fn separation_against_standing_agent() {
        let band = line(&[0.0, 0.1, 0.2, 0.3], 0.4);
        let other = BandAgent::fixed_other(TimedBand::at_goal(Pose2D::new(1.0, 0.0, 0.0)), 0.3);
        let b = breakdown(&band, &ObstacleSet::default(), &[other], None);
        let limit = 0.3 + 0.3 + TebParams::default().d_agent;
        let expect: f64 = [0.1f64, 0.2, 0.3].iter().map(|x| (limit - (1.0 - x)).max(0.0).powi(2)).sum();
        assert!((b.agent_separation - expect).abs() < 1e-12);
    }

    #[test]
    fn other_agent_held_at_last_pose_past_horizon() {
        let band = line(&[0.0, 0.1, 0.2, 0.3], 1.0);
        // the walker's band ends at t = 0.5 next to the robot's late configs
        let walker = TimedBand::new(vec![Pose2D::new(5.0, 0.0, 0.0), Pose2D::new(0.3, 0.5, 0.0)], vec![0.5]).unwrap();
        let other = BandAgent::fixed_other(walker, 0.3);
        let b = breakdown(&band, &ObstacleSet::default(), &[other], None);
        assert!(b.agent_separation > 0.0);
    }

    #[test]
    fn human_layer_term_follows_field() {
        let band = line(&[0.0, 0.5, 1.0], 1.0);
        let grid = OccupancyGrid::new(40, 40, 0.1).unwrap();
        let human = Pose2D::new(0.5, 0.4, std::f64::consts::FRAC_PI_2);
        let params = HumanLayerParams::default();
        let stack = CostmapStack::from_grid(grid).with_human_sources(&[human], &params);
        let b = breakdown(&band, &ObstacleSet::default(), &[], Some(&stack));
        let s = params.safety_amplitude * (-0.16 / (2.0 * params.safety_sigma.powi(2))).exp();
        let v = params.visibility_amplitude * (-0.16 / (2.0 * params.visibility_sigma.powi(2))).exp();
        assert!((b.human_safety - s / LETHAL as f64).abs() < 1e-12);
        assert!((b.human_visibility - v / LETHAL as f64).abs() < 1e-12);
    }

    #[test]
    fn humans_pay_no_time_or_layer_cost() {
        let obstacles = ObstacleSet::default();
        let human = BandAgent {
            band: line(&[2.0, 1.5, 1.0], 0.5),
            role: AgentRole::Human { nominal_speed: 1.0 },
            limits: KinodynamicLimits::pedestrian(),
            radius: 0.3,
            start_velocity: VelocityCommand::ZERO,
            goal_velocity: None,
            fixed: false,
            anchor: Vec::new(),
        };
        let problem = TebProblem {
            agents: vec![BandAgent::robot(line(&[0.0, 0.1, 0.2], 0.4), KinodynamicLimits::default(), 0.3), human],
            obstacles: &obstacles,
            stack: None,
            weights: ObjectiveWeights::default(),
            params: TebParams::default(),
        };
        let eval = evaluate_band(&problem);
        assert_eq!(eval.per_agent[1].time, 0.0);
        assert!(eval.per_agent[1].kinodynamic > 0.0);
        assert!((eval.total - eval.per_agent.iter().map(|b| b.total).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn lethal_interior_config_is_infinite() {
        let mut grid = OccupancyGrid::new(20, 20, 0.1).unwrap();
        grid.set_occupied(crate::world::CellIndex::new(5, 0), true);
        let stack = CostmapStack::from_grid(grid);
        let band = line(&[0.0, 0.55, 1.0], 1.0);
        let b = breakdown(&band, &ObstacleSet::default(), &[], Some(&stack));
        assert!(b.total.is_infinite());
    }

    #[test]
    fn layout_counts_only_free_agents() {
        let agents = vec![
            BandAgent::robot(line(&[0.0, 0.1, 0.2, 0.3], 0.4), KinodynamicLimits::default(), 0.3),
            BandAgent::fixed_other(line(&[1.0, 1.1], 0.4), 0.3),
        ];
        let layout = VarLayout::new(&agents);
        assert_eq!(layout.total, 3 * 2 + 3);
        assert_eq!(layout.config(0, 0, 0), None);
        assert_eq!(layout.config(0, 1, 2), Some(2));
        assert_eq!(layout.dt(0, 0), Some(6));
        assert_eq!(layout.dt(1, 0), None);
    }
}
