//! Optional TOML configuration overriding every tunable default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hateb::PlannerConfig;
use crate::predict::PredictionConfig;
use crate::sim::{BaselineConfig, SimConfig};

/// Sections: `[planner]` (with `hateb`, `teb`, `weights`, `limits`, ...),
/// `[prediction]`, `[baseline]` and `[sim]`. Missing keys keep defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub planner: PlannerConfig,
    pub prediction: PredictionConfig,
    pub baseline: BaselineConfig,
    pub sim: SimConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.prediction.validate()?;
        let b = &self.baseline;
        if !(b.lookahead > 0.0 && b.replan_period > 0.0 && b.abort_after > 0.0 && b.sensor_range > 0.0) {
            return Err(Error::Config("baseline periods, lookahead and range must be positive".into()));
        }
        if !(b.cone > 0.0 && b.slow_distance > 0.0 && (0.0..=1.0).contains(&b.min_speed_fraction)) {
            return Err(Error::Config("baseline cone, slow_distance or min_speed_fraction out of range".into()));
        }
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite() && self.sim.goal_tolerance > 0.0) {
            return Err(Error::Config("sim dt and goal_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override() {
        let cfg = Config::from_toml_str("[sim]\ndt = 0.05\n[planner.hateb]\nn_crowd = 5\n").unwrap();
        assert_eq!(cfg.sim.dt, 0.05);
        assert_eq!(cfg.planner.hateb.n_crowd, 5);
        assert_eq!(cfg.baseline, BaselineConfig::default());
    }

    #[test]
    fn defaults_round_trip_and_reject_unknown() {
        let text = Config::default().to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), Config::default());
        assert!(matches!(Config::from_toml_str("[simulation]\n"), Err(Error::Config(_))));
        assert!(Config::from_toml_str("[sim]\ndt = -1.0\n").is_err());
    }
}
