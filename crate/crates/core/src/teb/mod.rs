//! Timed elastic band: a trajectory as a sequence of poses plus the time
//! intervals between them, deformed locally by weighted least squares.
//!
//! The optimizer minimizes `Σ_k γ_k f_k(B)` over configurations and time
//! differences, where each `f_k` is a sum of squared residuals (time,
//! obstacle clearance, kinodynamic limits, human layers, agent separation).

mod band;
mod objective;
mod obstacles;
mod optimizer;

pub use band::{band_maintenance, extract_command, initialize_band, TimedBand, VelocityCommand};
pub use objective::{
    evaluate_band, evaluate_objective, gradient, AgentRole, BandAgent, JointEvaluation, ObjectiveBreakdown,
    TebProblem,
};
pub use obstacles::ObstacleSet;
pub use optimizer::{optimize, optimize_problem, OptimizeReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinodynamicLimits {
    pub v_max: f64,
    /// Negative values allow reversing.
    pub v_min: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for KinodynamicLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            v_min: -0.15,
            omega_max: 1.0,
            a_max: 0.5,
            alpha_max: 1.5,
        }
    }
}

impl KinodynamicLimits {
    /// Typical pedestrian limits used for planned human bands.
    pub fn pedestrian() -> Self {
        Self {
            v_max: 1.5,
            v_min: 0.0,
            omega_max: 2.0,
            a_max: 1.0,
            alpha_max: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0 && self.omega_max > 0.0 && self.a_max > 0.0 && self.alpha_max > 0.0) {
            return Err(Error::Config("kinodynamic maxima must be positive".into()));
        }
        if self.v_min > self.v_max {
            return Err(Error::Config("v_min must not exceed v_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub time: f64,
    pub obstacle: f64,
    pub kinodynamic: f64,
    pub human_safety: f64,
    pub human_visibility: f64,
    pub agent_separation: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            time: 1.0,
            obstacle: 50.0,
            kinodynamic: 100.0,
            human_safety: 20.0,
            human_visibility: 10.0,
            agent_separation: 50.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("objective weights must be finite and non-negative".into()));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one objective weight must be positive".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.time,
            self.obstacle,
            self.kinodynamic,
            self.human_safety,
            self.human_visibility,
            self.agent_separation,
        ]
    }
}

/// Band shaping and penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TebParams {
    /// Desired center-to-obstacle clearance, meters.
    pub d_safe: f64,
    /// Desired free gap between agent footprints, meters.
    pub d_agent: f64,
    pub dt_ref: f64,
    pub hysteresis: f64,
    pub dt_floor: f64,
    /// Obstacles bind to a configuration within `obstacle_bind_factor · d_safe`.
    pub obstacle_bind_factor: f64,
    /// Gain on the lateral (nonholonomic) residual inside the kinodynamic term.
    pub nonholonomic_gain: f64,
    /// Gain pulling human bands to their observed walking speed.
    pub human_speed_gain: f64,
    /// Gain pulling human bands back to their predicted positions.
    pub human_path_gain: f64,
    pub max_configs: usize,
}

impl Default for TebParams {
    fn default() -> Self {
        Self {
            d_safe: 0.4,
            d_agent: 0.5,
            dt_ref: 0.3,
            hysteresis: 0.1,
            dt_floor: 1e-3,
            obstacle_bind_factor: 1.2,
            nonholonomic_gain: 10.0,
            human_speed_gain: 1.0,
            human_path_gain: 4.0,
            max_configs: 120,
        }
    }
}

impl TebParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_safe > 0.0 && self.d_agent >= 0.0 && self.dt_ref > 0.0 && self.dt_floor > 0.0) {
            return Err(Error::Config("band parameters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(Error::Config("hysteresis must lie in [0, 1)".into()));
        }
        if self.max_configs < 2 {
            return Err(Error::Config("max_configs must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(KinodynamicLimits::default().validate().is_ok());
        assert!(KinodynamicLimits::pedestrian().validate().is_ok());
        assert!(ObjectiveWeights::default().validate().is_ok());
        assert!(TebParams::default().validate().is_ok());
    }

    #[test]
    fn invalid_values_rejected() {
        let l = KinodynamicLimits {
            v_min: 1.0,
            ..Default::default()
        };
        assert!(l.validate().is_err());
        let w = ObjectiveWeights {
            time: 0.0,
            obstacle: 0.0,
            kinodynamic: 0.0,
            human_safety: 0.0,
            human_visibility: 0.0,
            agent_separation: 0.0,
        };
        assert!(w.validate().is_err());
        let w = ObjectiveWeights {
            obstacle: f64::NAN,
            ..Default::default()
        };
        assert!(w.validate().is_err());
        let p = TebParams {
            hysteresis: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
