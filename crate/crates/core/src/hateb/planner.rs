use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::backoff::{backoff_step, BackoffState, BackoffSubstate};
use super::mode::{update_mode, ModeContext};
use super::{classify_humans, Event, HatebParams, HumanRecord, PlanningMode};
use crate::costmap::{CostmapStack, HumanLayerParams, LETHAL};
use crate::error::{Error, Result};
use crate::global_plan::{plan_global_with, GlobalPath, GlobalPlannerParams};
use crate::predict::{predict, predict_vel_obs, PredictionConfig, PredictionService};
use crate::teb::{
    band_maintenance, extract_command, initialize_band, optimize_problem, AgentRole, BandAgent, KinodynamicLimits,
    ObjectiveWeights, ObstacleSet, TebParams, TebProblem, TimedBand, VelocityCommand,
};
use crate::world::{OccupancyGrid, Point2, Pose2D};

/// All tunables of the human-aware planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub hateb: HatebParams,
    pub teb: TebParams,
    pub weights: ObjectiveWeights,
    pub limits: KinodynamicLimits,
    pub human_limits: KinodynamicLimits,
    pub human_layers: HumanLayerParams,
    pub global: GlobalPlannerParams,
    pub inflation_decay: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            hateb: HatebParams::default(),
            teb: TebParams::default(),
            weights: ObjectiveWeights::default(),
            limits: KinodynamicLimits::default(),
            human_limits: KinodynamicLimits::pedestrian(),
            human_layers: HumanLayerParams::default(),
            global: GlobalPlannerParams::default(),
            inflation_decay: 5.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.hateb.validate()?;
        self.teb.validate()?;
        self.weights.validate()?;
        self.limits.validate()?;
        self.human_limits.validate()?;
        self.human_layers.validate()?;
        if !(self.inflation_decay >= 0.0) {
            return Err(Error::Config("inflation decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedHuman {
    pub id: u32,
    pub pose: Pose2D,
    pub velocity: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub time: f64,
    pub robot: Pose2D,
    /// Velocity the robot is currently executing.
    pub robot_velocity: VelocityCommand,
    pub humans: Vec<TrackedHuman>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanBand {
    pub id: u32,
    pub service: PredictionService,
    pub band: TimedBand,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub command: VelocityCommand,
    pub mode: PlanningMode,
    pub robot_band: TimedBand,
    pub human_bands: Vec<HumanBand>,
    pub events: Vec<Event>,
    pub humans: Vec<HumanRecord>,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
struct CachedPrediction {
    time: f64,
    service: PredictionService,
    path: GlobalPath,
}

/// Stateful human-aware planner; one instance per robot and episode.
#[derive(Debug, Clone)]
pub struct HatebPlanner {
    cfg: PlannerConfig,
    prediction: PredictionConfig,
    radius: f64,
    goal: Pose2D,
    inflated: CostmapStack,
    obstacles: Arc<ObstacleSet>,
    external: BTreeMap<u32, GlobalPath>,
    global_path: Option<GlobalPath>,
    path_cursor: usize,
    last_replan: f64,
    force_replan: bool,
    band: Option<TimedBand>,
    mode: PlanningMode,
    ctx: ModeContext,
    divergences: usize,
    last_command: VelocityCommand,
    trail: Vec<Pose2D>,
    predictions: BTreeMap<u32, CachedPrediction>,
    was_stuck: bool,
    /// Side of the last chosen passing variant, 0 for the base band.
    pass_side: i8,
    aborted: bool,
}

impl HatebPlanner {
    pub fn new(
        grid: Arc<OccupancyGrid>,
        start: Pose2D,
        goal: Pose2D,
        radius: f64,
        cfg: PlannerConfig,
        prediction: PredictionConfig,
        external: BTreeMap<u32, GlobalPath>,
    ) -> Result<Self> {
        cfg.validate()?;
        prediction.validate()?;
        let bucket = (cfg.teb.d_safe * cfg.teb.obstacle_bind_factor).max(0.2);
        let obstacles = Arc::new(ObstacleSet::from_grid(&grid, bucket));
        let inflated = CostmapStack::from_grid((*grid).clone()).inflate(radius, cfg.inflation_decay);
        let path = plan_global_with(&inflated, start, goal, &cfg.global)?;
        let ctx = ModeContext::new(cfg.hateb, 0.0, start.position().distance(goal.position()));
        Ok(Self {
            prediction,
            radius,
            goal,
            inflated,
            obstacles,
            external,
            global_path: Some(path),
            path_cursor: 0,
            last_replan: 0.0,
            force_replan: false,
            band: None,
            mode: PlanningMode::SingleBand,
            ctx,
            divergences: 0,
            last_command: VelocityCommand::ZERO,
            trail: vec![start],
            predictions: BTreeMap::new(),
            was_stuck: false,
            pass_side: 0,
            aborted: false,
            cfg,
        })
    }

    pub fn mode(&self) -> PlanningMode {
        self.mode
    }

    pub fn context(&self) -> &ModeContext {
        &self.ctx
    }

    pub fn global_path(&self) -> Option<&GlobalPath> {
        self.global_path.as_ref()
    }

    /// One planning cycle: classify, switch modes, optimize, command.
    pub fn plan_step(&mut self, snap: &WorldSnapshot) -> PlanResult {
        let mut events = Vec::new();
        let robot = snap.robot;
        let p = self.cfg.hateb;
        let mut humans = classify_humans(&snap.humans, &robot, &p);
        let dist_goal = robot.position().distance(self.goal.position());
        self.ctx.observe(snap.time, robot.position(), dist_goal, &humans);
        if self.ctx.stuck && !self.was_stuck {
            events.push(Event::Stuck {
                duration: self.ctx.stuck_for,
            });
        }
        self.was_stuck = self.ctx.stuck;
        if self.trail.last().is_none_or(|t| t.distance(&robot) >= 0.05) && self.mode != PlanningMode::BackoffRecovery {
            self.trail.push(robot);
        }

        let next = update_mode(self.mode, &self.ctx, &humans);
        if next != self.mode {
            events.push(Event::ModeTransition {
                from: self.mode,
                to: next,
                nearest_distance: self.ctx.nearest_distance,
                stuck_for: self.ctx.stuck_for,
            });
            if next == PlanningMode::BackoffRecovery {
                self.ctx.backoff = BackoffState::start(self.ctx.nearest_id);
            }
            if self.mode == PlanningMode::BackoffRecovery {
                self.ctx.reset_progress(snap.time, dist_goal);
                self.was_stuck = false;
                self.force_replan = true;
                self.band = None;
            }
            self.mode = next;
        }

        let stack = self.inflated.apply_human_layers(&humans, &self.cfg.human_layers);
        let mut human_bands = Vec::new();
        let raw = if self.aborted {
            VelocityCommand::ZERO
        } else if self.mode == PlanningMode::BackoffRecovery {
            let cmd = backoff_step(&mut self.ctx, &robot, &stack, &self.trail, &humans, self.radius);
            if self.ctx.backoff.substate == BackoffSubstate::Aborted {
                self.aborted = true;
                events.push(Event::Abort {
                    reason: self.ctx.backoff.abort_reason.clone().unwrap_or_default(),
                });
            }
            cmd
        } else if dist_goal <= p.goal_tolerance {
            self.band = Some(TimedBand::at_goal(robot));
            VelocityCommand::ZERO
        } else {
            self.band_step(snap, &stack, &mut humans, &mut human_bands, &mut events)
        };

        let mut command = raw;
        if let Some(id) = self.collision_imminent(&robot, raw, &snap.humans) {
            events.push(Event::CollisionImminent { human: id });
            command.v = 0.0;
        }
        command = self.limit(command);
        self.last_command = command;

        PlanResult {
            command,
            mode: self.mode,
            robot_band: self.band.clone().unwrap_or_else(|| TimedBand::at_goal(robot)),
            human_bands,
            events,
            humans,
            aborted: self.aborted,
        }
    }

    fn limit(&self, cmd: VelocityCommand) -> VelocityCommand {
        let lim = &self.cfg.limits;
        let dt = self.cfg.hateb.control_dt;
        let prev = self.last_command;
        let dv = lim.a_max * dt;
        let dw = lim.alpha_max * dt;
        VelocityCommand::new(
            cmd.v.clamp(prev.v - dv, prev.v + dv),
            cmd.omega.clamp(prev.omega - dw, prev.omega + dw),
        )
        .clamped(lim)
    }

    /// Human whose disc the commanded motion would enter, if braking helps.
    fn collision_imminent(&self, robot: &Pose2D, cmd: VelocityCommand, humans: &[TrackedHuman]) -> Option<u32> {
        let p = &self.cfg.hateb;
        if cmd.v.abs() < 1e-9 {
            return None;
        }
        let steps = (p.guard_horizon / 0.1).ceil() as usize;
        let mut worst: Option<(f64, u32)> = None;
        for h in humans {
            let limit = self.radius + h.radius + p.guard_margin;
            let mut moving = f64::INFINITY;
            let mut still = f64::INFINITY;
            let mut pose = *robot;
            for k in 0..=steps {
                let t = k as f64 * 0.1;
                let hp = h.pose.position() + h.velocity * t;
                moving = moving.min(pose.position().distance(hp) - limit);
                still = still.min(robot.position().distance(hp) - limit);
                pose = crate::sim::integrate_unicycle(&pose, cmd, 0.1);
            }
            if moving < 0.0 && moving < still - 1e-9 && worst.is_none_or(|w| moving < w.0) {
                worst = Some((moving, h.id));
            }
        }
        worst.map(|w| w.1)
    }

    fn replan(&mut self, robot: &Pose2D, stack: &CostmapStack, humans: &[HumanRecord], radii: &BTreeMap<u32, f64>, reason: &str, events: &mut Vec<Event>) {
        let discs: Vec<Point2> = humans
            .iter()
            .filter(|h| h.observable && h.classification == super::Classification::Static)
            .map(|h| h.pose.position())
            .collect();
        let disc_radius = humans
            .iter()
            .filter(|h| h.observable && h.classification == super::Classification::Static)
            .map(|h| radii.get(&h.id).copied().unwrap_or(0.3))
            .fold(0.0, f64::max);
        let planning = if discs.is_empty() {
            stack.clone()
        } else {
            stack.with_obstacle_discs(&discs, disc_radius, self.radius, self.cfg.inflation_decay)
        };
        match plan_global_with(&planning, *robot, self.goal, &self.cfg.global) {
            Ok(path) => {
                self.global_path = Some(path);
                self.path_cursor = 0;
            }
            Err(_) if self.global_path.is_some() => {}
            Err(_) => {
                self.global_path = Some(GlobalPath::from_points(&[robot.position(), self.goal.position()], Some(self.goal.heading())));
                self.path_cursor = 0;
            }
        }
        events.push(Event::Replan { reason: reason.into() });
    }

    fn band_step(
        &mut self,
        snap: &WorldSnapshot,
        stack: &CostmapStack,
        humans: &mut [HumanRecord],
        human_bands: &mut Vec<HumanBand>,
        events: &mut Vec<Event>,
    ) -> VelocityCommand {
        let robot = snap.robot;
        let p = self.cfg.hateb;
        let radii: BTreeMap<u32, f64> = snap.humans.iter().map(|h| (h.id, h.radius)).collect();
        if self.force_replan || snap.time - self.last_replan >= p.replan_period - 1e-9 {
            let reason = if self.force_replan { "recovery" } else { "periodic" };
            self.replan(&robot, stack, humans, &radii, reason, events);
            self.last_replan = snap.time;
            self.force_replan = false;
        }

        let (local, local_goal, is_final) = {
            let path = self.global_path.as_ref().expect("global path is always set");
            local_path(path, robot.position(), &mut self.path_cursor, p.local_horizon)
        };
        let local_goal = if is_final { self.goal } else { local_goal };
        // a fresh band along the current path every cycle; warm-started
        // bands drift into shapes the optimizer cannot leave
        let band = self.fresh_band(&local, &robot, local_goal);
        let band = band_maintenance(&band, self.cfg.teb.dt_ref, self.cfg.teb.hysteresis, self.cfg.teb.dt_floor, self.cfg.teb.max_configs);

        // human agents
        let robot_time = band.total_time().max(2.0);
        let banded = self.select_banded(humans, &robot);
        let mut agents = vec![BandAgent {
            band,
            role: AgentRole::Robot,
            limits: self.cfg.limits,
            radius: self.radius,
            start_velocity: snap.robot_velocity,
            goal_velocity: if is_final { Some(VelocityCommand::ZERO) } else { None },
            fixed: false,
            anchor: Vec::new(),
        }];
        let mut services = Vec::new();
        for h in humans.iter() {
            if !h.observable {
                continue;
            }
            let radius = radii.get(&h.id).copied().unwrap_or(0.3);
            if banded.contains(&h.id) {
                if let Some((service, hb)) = self.human_band(h, &robot, stack, snap.time, robot_time) {
                    services.push((h.id, service));
                    let anchor = hb.configs().iter().map(|c| c.position()).collect();
                    agents.push(BandAgent {
                        band: hb,
                        anchor,
                        role: AgentRole::Human { nominal_speed: h.speed() },
                        limits: self.cfg.human_limits,
                        radius,
                        start_velocity: VelocityCommand::new(h.speed(), 0.0),
                        goal_velocity: None,
                        fixed: false,
                    });
                    continue;
                }
            }
            let fixed = predict_vel_obs(h, self.prediction.horizon, self.prediction.sample_dt, p.v_static.max(1e-6))
                .ok()
                .map(|path| constant_speed_band(&path, h.speed()))
                .unwrap_or_else(|| TimedBand::at_goal(h.pose));
            agents.push(BandAgent::fixed_other(fixed, radius));
        }

        let obstacles = Arc::clone(&self.obstacles);
        let mut problem = TebProblem {
            agents,
            obstacles: &obstacles,
            stack: Some(stack),
            weights: self.cfg.weights,
            params: self.cfg.teb,
        };
        let iterations = p.iterations;
        // the base band plus bent copies passing a conflicting agent on
        // either side; the lowest optimized objective wins, with a bias
        // towards the side taken last cycle
        let mut candidates = vec![(0i8, problem.agents[0].band.clone())];
        candidates.extend(passing_variants(&problem.agents[0].band, &problem.agents[1..], self.radius, self.cfg.teb.d_agent));
        let mut best: Option<(f64, i8, Vec<BandAgent>)> = None;
        for (side, cand_band) in candidates {
            let mut cand = problem.clone();
            cand.agents[0].band = cand_band;
            let Ok(rep) = optimize_problem(&mut cand, iterations) else { continue };
            let score = if side == self.pass_side { 0.9 * rep.final_value } else { rep.final_value };
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, side, cand.agents));
            }
        }
        match best {
            Some((_, side, agents)) => {
                problem.agents = agents;
                self.pass_side = side;
                self.divergences = 0;
            }
            None => {
                self.divergences += 1;
                events.push(Event::Replan {
                    reason: "diverged".into(),
                });
                if self.divergences >= p.max_divergences {
                    self.aborted = true;
                    events.push(Event::Abort {
                        reason: format!("optimization diverged {} times", self.divergences),
                    });
                }
                self.replan(&robot, stack, humans, &radii, "diverged", events);
                self.last_replan = snap.time;
                let path = self.global_path.as_ref().expect("global path is always set");
                self.path_cursor = 0;
                let (local, goal, fin) = local_path(path, robot.position(), &mut self.path_cursor, p.local_horizon);
                let goal = if fin { self.goal } else { goal };
                problem.agents[0].band = self.fresh_band(&local, &robot, goal);
                let _ = optimize_problem(&mut problem, iterations);
            }
        }

        let mut agents = problem.agents.into_iter();
        let robot_band = agents.next().expect("robot agent").band;
        let mut human_iter = agents.filter(|a| !a.fixed);
        for (id, service) in services {
            let hb = human_iter.next().expect("one agent per banded human").band;
            if let Some(rec) = humans.iter_mut().find(|h| h.id == id) {
                rec.band = Some(hb.clone());
            }
            human_bands.push(HumanBand { id, service, band: hb });
        }
        let cmd = if self.aborted {
            VelocityCommand::ZERO
        } else {
            extract_command(&robot_band, &self.cfg.limits)
        };
        self.band = Some(robot_band);
        cmd
    }

    /// Ids of the humans that get a planned band in the current mode.
    fn select_banded(&self, humans: &[HumanRecord], robot: &Pose2D) -> Vec<u32> {
        let mut cands: Vec<(f64, u32)> = humans
            .iter()
            .filter(|h| match self.mode {
                PlanningMode::DualBand => self.ctx.is_effective_dynamic(h),
                PlanningMode::VelObs => h.observable && h.speed() >= self.cfg.hateb.v_static,
                _ => false,
            })
            .map(|h| (h.pose.position().distance(robot.position()), h.id))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.into_iter().take(2).map(|c| c.1).collect()
    }

    fn human_band(&mut self, h: &HumanRecord, robot: &Pose2D, stack: &CostmapStack, time: f64, robot_time: f64) -> Option<(PredictionService, TimedBand)> {
        let speed = h.speed().max(0.2);
        let reuse = self.predictions.get(&h.id).filter(|c| {
            time - c.time < self.cfg.hateb.human_replan_period
                && matches!(c.service, PredictionService::PredictBehind | PredictionService::PredictGoal | PredictionService::PredictExternal)
                && Some(c.service) == crate::predict::select_service(self.mode, &self.prediction, self.external.contains_key(&h.id))
        });
        let (service, path) = match reuse {
            Some(c) => (c.service, c.path.clone()),
            None => {
                let external = self.external.get(&h.id).map(|p| trim_to_nearest(p, h.pose.position()));
                let own = stack.without_human_near(h.pose.position(), 1e-6);
                let (service, path) = predict(h, self.mode, &self.prediction, robot, &own, external.as_ref(), self.cfg.hateb.v_static)?;
                self.predictions.insert(
                    h.id,
                    CachedPrediction {
                        time,
                        service,
                        path: path.clone(),
                    },
                );
                (service, path)
            }
        };
        let mut cursor = 0;
        let (mut pts, _, _) = local_path(&path, h.pose.position(), &mut cursor, speed * robot_time);
        // keep the band out of lethal cells
        if let Some(cut) = pts.iter().skip(1).position(|q| stack.cost_at(*q) == LETHAL) {
            pts.truncate(cut + 1);
        }
        if pts.len() < 2 {
            return None;
        }
        let heading = if h.speed() > 1e-9 { h.velocity.y.atan2(h.velocity.x) } else { h.pose.heading() };
        let mut gp = GlobalPath::from_points(&pts, None);
        gp.waypoints[0] = Pose2D::from_point(pts[0], heading);
        let band = initialize_band(&gp, &self.cfg.human_limits, self.cfg.hateb.band_spacing).ok()?;
        if band.len() < 2 {
            return None;
        }
        Some((service, rescale_speed(band, 0.8 * self.cfg.human_limits.v_max, speed)))
    }

    fn fresh_band(&self, local: &[Point2], robot: &Pose2D, goal: Pose2D) -> TimedBand {
        let mut pts = local.to_vec();
        if pts.len() < 2 {
            pts = vec![robot.position(), goal.position()];
        }
        let mut gp = GlobalPath::from_points(&pts, Some(goal.heading()));
        gp.waypoints[0] = *robot;
        let n = gp.waypoints.len();
        gp.waypoints[n - 1] = goal;
        initialize_band(&gp, &self.cfg.limits, self.cfg.hateb.band_spacing).unwrap_or_else(|_| TimedBand::at_goal(*robot))
    }
}

/// Bends `band` around the other agent it approaches closest (in time
/// alignment), once to each side. Empty when no agent comes closer than
/// the separation limit.
fn passing_variants(band: &TimedBand, others: &[BandAgent], radius: f64, gap: f64) -> Vec<(i8, TimedBand)> {
    let n = band.len();
    if n < 3 {
        return Vec::new();
    }
    let ts = band.timestamps();
    let cfgs = band.configs();
    let mut worst: Option<(f64, usize, Point2, f64)> = None;
    for other in others {
        let limit = radius + other.radius + gap;
        let ots = other.band.timestamps();
        let ocf = other.band.configs();
        for k in 1..n - 1 {
            let j = ots.partition_point(|t| *t < ts[k]).min(ocf.len() - 1);
            let q = ocf[j].position();
            let d = cfgs[k].position().distance(q);
            if d < limit && worst.is_none_or(|(w, ..)| d - limit < w) {
                worst = Some((d - limit, k, q, limit));
            }
        }
    }
    let Some((_, k, q, limit)) = worst else {
        return Vec::new();
    };
    let dir = cfgs[k + 1].position() - cfgs[k - 1].position();
    if dir.norm() < 1e-9 {
        return Vec::new();
    }
    let dir = dir * (1.0 / dir.norm());
    let normal = Point2::new(-dir.y, dir.x);
    let lateral = (q - cfgs[k].position()).dot(normal);
    let mut arc = vec![0.0; n];
    for i in 1..n {
        arc[i] = arc[i - 1] + cfgs[i].position().distance(cfgs[i - 1].position());
    }
    let sigma = 0.8;
    [1i8, -1]
        .iter()
        .map(|&side| {
            let shift = lateral + f64::from(side) * limit;
            let mut out = band.clone();
            {
                let c = out.configs_mut();
                for i in 1..n - 1 {
                    let w = (-(arc[i] - arc[k]).powi(2) / (2.0 * sigma * sigma)).exp();
                    let p = cfgs[i].position() + normal * (shift * w);
                    c[i] = Pose2D::from_point(p, c[i].heading());
                }
                for i in 1..n - 1 {
                    let d = c[i + 1].position() - c[i - 1].position();
                    c[i] = Pose2D::from_point(c[i].position(), d.y.atan2(d.x));
                }
            }
            (side, out)
        })
        .collect()
}

fn rescale_speed(mut band: TimedBand, from: f64, to: f64) -> TimedBand {
    let f = from / to;
    for dt in band.time_diffs_mut() {
        *dt *= f;
    }
    band
}

fn constant_speed_band(path: &GlobalPath, speed: f64) -> TimedBand {
    let configs = path.waypoints.clone();
    let dts = configs
        .windows(2)
        .map(|w| (w[0].distance(&w[1]) / speed.max(1e-6)).max(1e-3))
        .collect();
    TimedBand::new(configs, dts).unwrap_or_else(|_| TimedBand::at_goal(path.waypoints[0]))
}

/// External path with its prefix before the point nearest to `p` removed.
fn trim_to_nearest(path: &GlobalPath, p: Point2) -> GlobalPath {
    let mut cursor = 0;
    let (pts, _, _) = local_path(path, p, &mut cursor, f64::INFINITY);
    let mut out = GlobalPath::from_points(&pts[1..], path.goal().map(|g| g.heading()));
    if out.waypoints.is_empty() {
        out = path.clone();
    }
    out
}

/// Polyline from `from` along `path` for `horizon` meters, starting at the
/// projection of `from` onto the path (searched from `cursor` forward).
/// Returns the points, the end pose and whether the end is the path goal.
fn local_path(path: &GlobalPath, from: Point2, cursor: &mut usize, horizon: f64) -> (Vec<Point2>, Pose2D, bool) {
    let w = &path.waypoints;
    let goal = *w.last().expect("non-empty path");
    if w.len() < 2 {
        return (vec![from, goal.position()], goal, true);
    }
    let c0 = (*cursor).min(w.len() - 2);
    let mut best = (f64::INFINITY, c0, w[c0].position());
    for j in c0..w.len() - 1 {
        let a = w[j].position();
        let b = w[j + 1].position();
        let ab = b - a;
        let l2 = ab.dot(ab);
        let t = if l2 > 0.0 { ((from - a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + ab * t;
        let d = q.distance(from);
        if d < best.0 - 1e-12 {
            best = (d, j, q);
        }
        // the path may wind back; stop scanning far past the robot
        if d > best.0 + 2.0 * horizon.min(5.0) + 1.0 {
            break;
        }
    }
    *cursor = best.1;
    let mut pts = vec![from];
    let mut prev = best.2;
    let mut acc = from.distance(prev);
    if acc > 1e-9 {
        pts.push(prev);
    }
    for wp in &w[best.1 + 1..] {
        let q = wp.position();
        let seg = prev.distance(q);
        if acc + seg >= horizon {
            let t = if seg > 0.0 { (horizon - acc) / seg } else { 0.0 };
            let end = prev + (q - prev) * t;
            let d = q - prev;
            pts.push(end);
            let last_idx = w.len() - 1;
            let is_goal = (end.distance(w[last_idx].position())) < 1e-9;
            return (pts, Pose2D::from_point(end, d.y.atan2(d.x)), is_goal);
        }
        acc += seg;
        pts.push(q);
        prev = q;
    }
    (pts, goal, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::OccupancyGrid;

    fn open_grid(w: usize, h: usize) -> Arc<OccupancyGrid> {
        Arc::new(OccupancyGrid::new(w, h, 0.1).unwrap())
    }

    fn planner(grid: Arc<OccupancyGrid>, start: Pose2D, goal: Pose2D) -> HatebPlanner {
        HatebPlanner::new(grid, start, goal, 0.3, PlannerConfig::default(), PredictionConfig::default(), BTreeMap::new()).unwrap()
    }

    #[test]
    fn local_path_horizon() {
        let path = GlobalPath::from_points(&[Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)], Some(0.0));
        let mut c = 0;
        let (pts, end, fin) = local_path(&path, Point2::new(1.0, 0.5), &mut c, 4.0);
        assert!(!fin);
        assert!((end.x - 4.5).abs() < 1e-9, "{end:?}");
        assert_eq!(pts[0], Point2::new(1.0, 0.5));
        let (_, end, fin) = local_path(&path, Point2::new(8.0, 0.0), &mut c, 4.0);
        assert!(fin);
        assert_eq!(end.x, 10.0);
    }

    #[test]
    fn open_space_single_band() {
        let start = Pose2D::new(1.0, 1.0, 0.0);
        let goal = Pose2D::new(3.0, 1.0, 0.0);
        let mut pl = planner(open_grid(40, 20), start, goal);
        let r = pl.plan_step(&WorldSnapshot {
            time: 0.0,
            robot: start,
            robot_velocity: VelocityCommand::ZERO,
            humans: vec![],
        });
        assert_eq!(r.mode, PlanningMode::SingleBand);
        assert!(r.human_bands.is_empty());
        assert!(r.command.v > 0.0 && r.command.v <= 0.05 + 1e-12);
    }

    #[test]
    fn two_nearest_dynamic_humans_banded() {
        let start = Pose2D::new(1.0, 2.0, 0.0);
        let goal = Pose2D::new(7.0, 2.0, 0.0);
        let mut pl = planner(open_grid(80, 40), start, goal);
        let humans = vec![
            TrackedHuman { id: 3, pose: Pose2D::new(4.5, 2.5, std::f64::consts::PI), velocity: Point2::new(-0.8, 0.0), radius: 0.3 },
            TrackedHuman { id: 1, pose: Pose2D::new(3.0, 3.0, std::f64::consts::PI), velocity: Point2::new(-0.8, 0.0), radius: 0.3 },
            TrackedHuman { id: 2, pose: Pose2D::new(4.0, 1.0, std::f64::consts::PI), velocity: Point2::new(-0.8, 0.0), radius: 0.3 },
        ];
        let snap = WorldSnapshot { time: 0.0, robot: start, robot_velocity: VelocityCommand::ZERO, humans };
        let r = pl.plan_step(&snap);
        assert_eq!(r.mode, PlanningMode::DualBand);
        let mut ids: Vec<u32> = r.human_bands.iter().map(|b| b.id).collect();
        ids.sort();
        assert_eq!(ids, vec![1, 2]);
        assert!(r.human_bands.iter().all(|b| b.service == PredictionService::PredictVelObs));
    }
}
