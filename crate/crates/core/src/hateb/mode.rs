use std::collections::{BTreeMap, VecDeque};

use super::backoff::{BackoffState, BackoffSubstate};
use super::{HatebParams, HumanRecord, PlanningMode};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct HumanHistory {
    ever_dynamic: bool,
    slow_since: Option<f64>,
    speed: f64,
}

/// Distances, speeds and progress memory that drive the mode machine.
#[derive(Debug, Clone)]
pub struct ModeContext {
    pub params: HatebParams,
    pub time: f64,
    /// Distance to the nearest observable human.
    pub nearest_distance: Option<f64>,
    pub nearest_id: Option<u32>,
    pub human_speeds: Vec<(u32, f64)>,
    /// (time, distance to goal) over the last `w_stuck` seconds.
    pub progress: VecDeque<(f64, f64)>,
    pub stuck: bool,
    /// Time since the last progress of at least `eps_progress`.
    pub stuck_for: f64,
    pub backoff: BackoffState,
    anchor: (f64, f64),
    history: BTreeMap<u32, HumanHistory>,
}

impl ModeContext {
    pub fn new(params: HatebParams, time: f64, distance_to_goal: f64) -> Self {
        Self {
            params,
            time,
            nearest_distance: None,
            nearest_id: None,
            human_speeds: Vec::new(),
            progress: VecDeque::from([(time, distance_to_goal)]),
            stuck: false,
            stuck_for: 0.0,
            backoff: BackoffState::default(),
            anchor: (time, distance_to_goal),
            history: BTreeMap::new(),
        }
    }

    /// Updates histories and the stuck flag with a new observation.
    pub fn observe(&mut self, time: f64, robot_position: crate::world::Point2, distance_to_goal: f64, humans: &[HumanRecord]) {
        self.time = time;
        let p = &self.params;
        self.human_speeds = humans.iter().map(|h| (h.id, h.speed())).collect();
        for h in humans {
            let e = self.history.entry(h.id).or_default();
            e.speed = h.speed();
            if h.speed() >= p.v_static {
                e.ever_dynamic = true;
                e.slow_since = None;
            } else if e.ever_dynamic && e.slow_since.is_none() {
                e.slow_since = Some(time);
            }
        }
        let nearest = humans
            .iter()
            .filter(|h| h.observable)
            .map(|h| (h.pose.position().distance(robot_position), h.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.nearest_distance = nearest.map(|n| n.0);
        self.nearest_id = nearest.map(|n| n.1);

        if distance_to_goal <= self.anchor.1 - p.eps_progress {
            self.anchor = (time, distance_to_goal);
        }
        self.stuck_for = time - self.anchor.0;
        self.stuck = self.stuck_for >= p.w_stuck - 1e-9;
        self.progress.push_back((time, distance_to_goal));
        while self.progress.len() > 1 && self.progress[1].0 <= time - p.w_stuck + 1e-9 {
            self.progress.pop_front();
        }
    }

    /// Restarts the progress window, e.g. after a recovery.
    pub fn reset_progress(&mut self, time: f64, distance_to_goal: f64) {
        self.anchor = (time, distance_to_goal);
        self.progress.clear();
        self.progress.push_back((time, distance_to_goal));
        self.stuck = false;
        self.stuck_for = 0.0;
    }

    /// Moving, or stopped for less than the debounce after having moved.
    pub fn is_effective_dynamic(&self, h: &HumanRecord) -> bool {
        if !h.observable {
            return false;
        }
        if h.speed() >= self.params.v_static {
            return true;
        }
        match self.history.get(&h.id) {
            Some(HumanHistory {
                ever_dynamic: true,
                slow_since: Some(s),
                ..
            }) => self.time - s < self.params.stop_debounce,
            _ => false,
        }
    }

    /// Was moving and has now been slow for at least the debounce.
    pub fn has_stopped(&self, h: &HumanRecord) -> bool {
        match self.history.get(&h.id) {
            Some(HumanHistory {
                ever_dynamic: true,
                slow_since: Some(s),
                ..
            }) => h.speed() < self.params.v_static && self.time - s >= self.params.stop_debounce,
            _ => false,
        }
    }
}

/// One step of the mode machine.
pub fn update_mode(mode: PlanningMode, ctx: &ModeContext, humans: &[HumanRecord]) -> PlanningMode {
    use PlanningMode::*;
    if mode == BackoffRecovery {
        return match ctx.backoff.substate {
            BackoffSubstate::Done => SingleBand,
            _ => BackoffRecovery,
        };
    }
    let p = &ctx.params;
    let dynamic = humans.iter().filter(|h| ctx.is_effective_dynamic(h)).count();
    let nearest_stopped = ctx
        .nearest_id
        .and_then(|id| humans.iter().find(|h| h.id == id))
        .is_some_and(|h| ctx.has_stopped(h));
    let desired = if dynamic > p.n_crowd || nearest_stopped {
        VelObs
    } else if dynamic > 0 {
        DualBand
    } else {
        SingleBand
    };
    if mode == VelObs && ctx.stuck && ctx.nearest_distance.is_some_and(|d| d < p.backoff_distance) {
        return BackoffRecovery;
    }
    desired
}
