use serde::{Deserialize, Serialize};

use super::KinodynamicLimits;
use crate::error::{Error, Result};
use crate::global_plan::GlobalPath;
use crate::world::{normalize_angle, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clamped(self, limits: &KinodynamicLimits) -> Self {
        Self {
            v: self.v.clamp(limits.v_min, limits.v_max),
            omega: self.omega.clamp(-limits.omega_max, limits.omega_max),
        }
    }
}

/// Configurations `x_0..x_n` and the `n` time differences between them.
///
/// The first and last configurations are pinned: the optimizer never moves
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedBand {
    configs: Vec<Pose2D>,
    time_diffs: Vec<f64>,
}

// a band always holds at least two configurations
#[allow(clippy::len_without_is_empty)]
impl TimedBand {
    pub fn new(configs: Vec<Pose2D>, time_diffs: Vec<f64>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Validation("band needs at least one configuration".into()));
        }
        if configs.len() != time_diffs.len() + 1 {
            return Err(Error::Validation(format!(
                "band has {} configurations but {} time differences",
                configs.len(),
                time_diffs.len()
            )));
        }
        if time_diffs.iter().any(|dt| !(*dt > 0.0) || !dt.is_finite()) {
            return Err(Error::Validation("time differences must be positive".into()));
        }
        Ok(Self { configs, time_diffs })
    }

    /// Single-configuration band: the agent is at its goal or stationary.
    pub fn at_goal(pose: Pose2D) -> Self {
        Self {
            configs: vec![pose],
            time_diffs: Vec::new(),
        }
    }

    pub fn configs(&self) -> &[Pose2D] {
        &self.configs
    }

    pub fn time_diffs(&self) -> &[f64] {
        &self.time_diffs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn is_at_goal(&self) -> bool {
        self.time_diffs.is_empty()
    }

    pub fn start(&self) -> &Pose2D {
        &self.configs[0]
    }

    pub fn goal(&self) -> &Pose2D {
        self.configs.last().expect("band is never empty")
    }

    pub fn total_time(&self) -> f64 {
        self.time_diffs.iter().sum()
    }

    pub fn path_length(&self) -> f64 {
        self.configs.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Cumulative time stamp of every configuration.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.configs.len());
        let mut acc = 0.0;
        t.push(0.0);
        for dt in &self.time_diffs {
            acc += dt;
            t.push(acc);
        }
        t
    }

    /// Linearly interpolated position at time `t` (clamped to the band).
    pub fn position_at(&self, t: f64) -> Point2 {
        let mut acc = 0.0;
        for (i, dt) in self.time_diffs.iter().enumerate() {
            if t <= acc + dt {
                let s = ((t - acc) / dt).clamp(0.0, 1.0);
                let a = self.configs[i].position();
                let b = self.configs[i + 1].position();
                return a + (b - a) * s;
            }
            acc += dt;
        }
        self.goal().position()
    }

    pub(crate) fn configs_mut(&mut self) -> &mut [Pose2D] {
        &mut self.configs
    }

    pub(crate) fn time_diffs_mut(&mut self) -> &mut [f64] {
        &mut self.time_diffs
    }

    /// Replaces the first configuration (the current agent state).
    pub fn set_start(&mut self, pose: Pose2D) {
        self.configs[0] = pose;
    }

    /// Moves the goal pin. The last time difference is rescaled to the new
    /// segment length at `speed`.
    pub fn set_goal(&mut self, pose: Pose2D, speed: f64, dt_floor: f64) {
        let n = self.configs.len();
        if n == 1 {
            if pose.distance(&self.configs[0]) > 1e-9 {
                let dt = (pose.distance(&self.configs[0]) / speed).max(dt_floor);
                self.configs.push(pose);
                self.time_diffs.push(dt);
            }
            return;
        }
        let prev = self.configs[n - 2];
        self.configs[n - 1] = pose;
        self.time_diffs[n - 2] = (prev.distance(&pose) / speed).max(dt_floor);
    }

    /// Drops the configurations before index `k` (keeping `k` as new start).
    pub fn drop_front(&mut self, k: usize) {
        let k = k.min(self.configs.len() - 1);
        if k == 0 {
            return;
        }
        self.configs.drain(..k);
        self.time_diffs.drain(..k);
    }

    /// Smallest distance between any configuration and `p`.
    pub fn min_distance_to(&self, p: Point2) -> f64 {
        self.configs
            .iter()
            .map(|c| c.position().distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Resamples a global path into a band with spacing at most `spacing`.
pub fn initialize_band(path: &GlobalPath, limits: &KinodynamicLimits, spacing: f64) -> Result<TimedBand> {
    if path.waypoints.len() < 2 {
        return match path.waypoints.first() {
            Some(p) => Ok(TimedBand::at_goal(*p)),
            None => Err(Error::PlanInput("empty path".into())),
        };
    }
    if !(spacing > 0.0) {
        return Err(Error::PlanInput("band spacing must be positive".into()));
    }
    let length = path.length();
    let start = path.waypoints[0];
    let goal = *path.waypoints.last().expect("non-empty");
    if length <= 1e-12 {
        return Ok(TimedBand::at_goal(goal));
    }
    let segments = (length / spacing - 1e-9).ceil().max(1.0) as usize;
    let step = length / segments as f64;
    let speed = 0.8 * limits.v_max;

    let mut configs = Vec::with_capacity(segments + 1);
    configs.push(start);
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    for k in 1..segments {
        let s = step * k as f64;
        while seg + 1 < path.waypoints.len() - 1
            && seg_start + path.waypoints[seg].distance(&path.waypoints[seg + 1]) < s
        {
            seg_start += path.waypoints[seg].distance(&path.waypoints[seg + 1]);
            seg += 1;
        }
        let a = path.waypoints[seg].position();
        let b = path.waypoints[seg + 1].position();
        let seg_len = a.distance(b);
        let frac = if seg_len > 0.0 { ((s - seg_start) / seg_len).clamp(0.0, 1.0) } else { 0.0 };
        let d = b - a;
        configs.push(Pose2D::from_point(a + d * frac, d.y.atan2(d.x)));
    }
    configs.push(goal);
    let time_diffs = configs
        .windows(2)
        .map(|w| (w[0].distance(&w[1]) / speed).max(1e-6))
        .collect();
    TimedBand::new(configs, time_diffs)
}

/// Splits long intervals and merges short ones around `dt_ref`.
pub fn band_maintenance(band: &TimedBand, dt_ref: f64, hysteresis: f64, dt_floor: f64, max_configs: usize) -> TimedBand {
    let mut configs = band.configs.clone();
    let mut dts = band.time_diffs.clone();

    // merge: a short interval absorbs its shorter neighbour, unless the
    // result would itself need splitting
    let lo = dt_ref * (1.0 - hysteresis);
    let hi = dt_ref * (1.0 + hysteresis);
    let mut i = 0;
    while i < dts.len() && dts.len() > 1 {
        if dts[i] >= lo {
            i += 1;
            continue;
        }
        let left = (i > 0).then(|| dts[i - 1]);
        let right = (i + 1 < dts.len()).then(|| dts[i + 1]);
        let with_left = match (left, right) {
            (Some(l), Some(r)) => l <= r,
            (Some(_), None) => true,
            _ => false,
        };
        let (a, b) = if with_left { (i - 1, i) } else { (i, i + 1) };
        if dts[a] + dts[b] <= hi {
            dts[a] += dts[b];
            dts.remove(b);
            configs.remove(b);
            i = a;
        } else {
            i += 1;
        }
    }

    // split: one midpoint per oversized interval
    let mut out_c = Vec::with_capacity(configs.len() * 2);
    let mut out_t = Vec::with_capacity(dts.len() * 2);
    out_c.push(configs[0]);
    for (k, dt) in dts.iter().enumerate() {
        let a = configs[k];
        let b = configs[k + 1];
        if *dt > dt_ref * (1.0 + hysteresis) && out_c.len() + (dts.len() - k) < max_configs {
            let mid = Pose2D::from_point(
                (a.position() + b.position()) * 0.5,
                a.heading() + normalize_angle(b.heading() - a.heading()) / 2.0,
            );
            let half = dt / 2.0;
            out_c.push(mid);
            out_t.push(half);
            out_c.push(b);
            out_t.push(dt - half);
        } else {
            out_c.push(b);
            out_t.push(*dt);
        }
    }
    for dt in &mut out_t {
        if *dt < dt_floor {
            *dt = dt_floor;
        }
    }
    TimedBand {
        configs: out_c,
        time_diffs: out_t,
    }
}

/// Velocity command from the first band segment.
pub fn extract_command(band: &TimedBand, limits: &KinodynamicLimits) -> VelocityCommand {
    if band.configs.len() < 2 {
        return VelocityCommand::ZERO;
    }
    let a = band.configs[0];
    let b = band.configs[1];
    let dt = band.time_diffs[0];
    let longitudinal = (b.position() - a.position()).dot(a.direction());
    let turn = normalize_angle(b.heading() - a.heading());
    VelocityCommand::new(longitudinal / dt, turn / dt).clamped(limits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(length: f64) -> GlobalPath {
        GlobalPath::from_points(&[Point2::new(0.0, 0.0), Point2::new(length, 0.0)], Some(0.0))
    }

    #[test]
    fn initialization_rule() {
        let limits = KinodynamicLimits { v_max: 0.5, ..Default::default() };
        let band = initialize_band(&straight(1.0), &limits, 0.25).unwrap();
        assert_eq!(band.len(), 5);
        for dt in band.time_diffs() {
            assert!((dt - 0.625).abs() < 1e-12);
        }
        let short = initialize_band(&straight(0.1), &limits, 0.25).unwrap();
        assert_eq!(short.len(), 2);
        let zero = initialize_band(&straight(0.0), &limits, 0.25).unwrap();
        assert!(zero.is_at_goal());
        assert!(zero.time_diffs().is_empty());
    }

    #[test]
    fn initialization_follows_polyline() {
        let path = GlobalPath::from_points(
            &[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)],
            Some(1.0),
        );
        let band = initialize_band(&path, &KinodynamicLimits::default(), 0.3).unwrap();
        assert_eq!(band.start().position(), Point2::new(0.0, 0.0));
        assert_eq!(band.goal().position(), Point2::new(1.0, 1.0));
        for w in band.configs().windows(2) {
            assert!(w[0].distance(&w[1]) <= 0.3 + 1e-9);
        }
    }

    #[test]
    fn maintenance_uniform_is_identity() {
        let configs: Vec<Pose2D> = (0..6).map(|i| Pose2D::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let band = TimedBand::new(configs, vec![0.3; 5]).unwrap();
        assert_eq!(band_maintenance(&band, 0.3, 0.1, 1e-3, 100), band);
    }

    #[test]
    fn maintenance_splits_long_interval() {
        let configs = vec![Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(0.3, 0.0, 0.0), Pose2D::new(1.2, 0.0, 0.0)];
        let band = TimedBand::new(configs, vec![0.3, 0.9]).unwrap();
        let out = band_maintenance(&band, 0.3, 0.1, 1e-3, 100);
        assert_eq!(out.len(), 4);
        assert!((out.configs()[2].x - 0.75).abs() < 1e-12);
        assert!((out.time_diffs()[1] + out.time_diffs()[2] - 0.9).abs() < 1e-15);
        assert_eq!(out.start(), band.start());
        assert_eq!(out.goal(), band.goal());
    }

    #[test]
    fn maintenance_merges_tiny_intervals() {
        let configs: Vec<Pose2D> = (0..10).map(|i| Pose2D::new(i as f64 * 0.05, 0.0, 0.0)).collect();
        let dts: Vec<f64> = (0..9).map(|i| if i % 2 == 0 { 0.01 } else { 0.3 }).collect();
        let band = TimedBand::new(configs, dts).unwrap();
        let out = band_maintenance(&band, 0.3, 0.1, 1e-3, 100);
        assert!(out.len() < band.len());
        assert!((out.total_time() - band.total_time()).abs() < 1e-9);
        assert_eq!(out.start(), band.start());
        assert_eq!(out.goal(), band.goal());
    }

    #[test]
    fn command_from_first_segment() {
        let limits = KinodynamicLimits::default();
        let band = TimedBand::new(vec![Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(0.1, 0.0, 0.0)], vec![0.25]).unwrap();
        let cmd = extract_command(&band, &limits);
        assert!((cmd.v - 0.4).abs() < 1e-12);
        assert_eq!(cmd.omega, 0.0);
        assert_eq!(extract_command(&TimedBand::at_goal(Pose2D::default()), &limits), VelocityCommand::ZERO);
        let spin = TimedBand::new(vec![Pose2D::new(1.0, 1.0, 0.0), Pose2D::new(1.0, 1.0, 0.2)], vec![0.5]).unwrap();
        let cmd = extract_command(&spin, &limits);
        assert_eq!(cmd.v, 0.0);
        assert!((cmd.omega - 0.4).abs() < 1e-12);
    }

    #[test]
    fn invalid_bands_rejected() {
        assert!(TimedBand::new(vec![], vec![]).is_err());
        assert!(TimedBand::new(vec![Pose2D::default(); 2], vec![0.0]).is_err());
        assert!(TimedBand::new(vec![Pose2D::default(); 3], vec![0.1]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn maintenance_preserves_invariants(dts in proptest::collection::vec(0.001f64..1.5, 1..30)) {
                let configs: Vec<Pose2D> = (0..=dts.len()).map(|i| Pose2D::new(i as f64 * 0.1, (i as f64).sin(), i as f64 * 0.2)).collect();
                let band = TimedBand::new(configs, dts).unwrap();
                let out = band_maintenance(&band, 0.3, 0.1, 1e-3, 200);
                prop_assert_eq!(out.configs().len(), out.time_diffs().len() + 1);
                prop_assert!(out.time_diffs().iter().all(|dt| *dt >= 1e-3));
                prop_assert_eq!(out.start(), band.start());
                prop_assert_eq!(out.goal(), band.goal());
                prop_assert!((out.total_time() - band.total_time()).abs() < 1e-9);
            }
        }
    }
}
