//! Experiment configuration: one TOML file with sections for the world, the
//! predictors, conformal calibration, the risk router, the planner, and the
//! batch runner. Every tuned constant lives here so studies can override it.

use crate::conformal::BudgetMode;
use crate::geometry::Vec2;
use crate::planner::PlanConfig;
use crate::risk::RouterConfig;
use crate::sim::{Bounds, ControlLimits};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSection {
    pub dt: f64,
    pub workspace_min: [f64; 2],
    pub workspace_max: [f64; 2],
    pub goal_radius: f64,
    pub sensing_radius: f64,
    pub agent_radius: f64,
    pub obstacle_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub max_steps: usize,
}

impl Default for WorldSection {
    fn default() -> Self {
        WorldSection {
            dt: 0.1,
            workspace_min: [0.0, 0.0],
            workspace_max: [20.0, 20.0],
            goal_radius: 0.5,
            sensing_radius: 6.0,
            agent_radius: 0.3,
            obstacle_radius: 0.3,
            v_max: 1.5,
            omega_max: 1.5,
            max_steps: 400,
        }
    }
}

impl WorldSection {
    pub fn bounds(&self) -> Bounds {
        Bounds::new(
            Vec2::new(self.workspace_min[0], self.workspace_min[1]),
            Vec2::new(self.workspace_max[0], self.workspace_max[1]),
        )
    }

    pub fn limits(&self) -> ControlLimits {
        ControlLimits {
            v_max: self.v_max,
            omega_max: self.omega_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorsSection {
    /// History window (increments) for the retrieval predictor.
    pub window: usize,
    pub knn_k: usize,
    pub library_stride: usize,
    pub library_rollouts: usize,
    pub library_rollout_steps: usize,
    pub calibration_streams: usize,
    pub calibration_samples_per_stream: usize,
    pub calibration_stream_steps: usize,
    pub holdout_streams: usize,
    pub holdout_samples_per_stream: usize,
    /// Wall-time stretch on level-1 calls for timing studies; 1.0 = off.
    pub busywait_multiplier: f64,
}

impl Default for PredictorsSection {
    fn default() -> Self {
        PredictorsSection {
            window: 20,
            knn_k: 5,
            library_stride: 10,
            library_rollouts: 800,
            library_rollout_steps: 400,
            calibration_streams: 600,
            calibration_samples_per_stream: 20,
            calibration_stream_steps: 150,
            holdout_streams: 400,
            holdout_samples_per_stream: 5,
            busywait_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalSection {
    pub delta: f64,
    pub m_max: usize,
    pub budget_mode: BudgetMode,
}

impl Default for ConformalSection {
    fn default() -> Self {
        ConformalSection {
            delta: 0.05,
            m_max: 16,
            budget_mode: BudgetMode::MAdaptive,
        }
    }
}

/// Router section: the risk-router parameters plus the thresholds used when
/// the proximity baseline replaces the risk score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterSection {
    pub theta1: f64,
    pub theta2: f64,
    pub w1: f64,
    pub w2: f64,
    pub d0: f64,
    pub tau0: f64,
    pub eta: f64,
    pub dwell: u32,
    /// Proximity-baseline thresholds calibrated to match call volume.
    pub prox_a_theta1: f64,
    pub prox_a_theta2: f64,
    /// Proximity-baseline thresholds calibrated to match success rate.
    pub prox_b_theta1: f64,
    pub prox_b_theta2: f64,
}

impl Default for RouterSection {
    fn default() -> Self {
        let base = RouterConfig::default();
        // Proximity defaults correspond to distance cutoffs of 4 m and 2 m.
        let prox1 = (-4.0f64 / base.d0).exp();
        let prox2 = (-2.0f64 / base.d0).exp();
        RouterSection {
            theta1: base.theta1,
            theta2: base.theta2,
            w1: base.w1,
            w2: base.w2,
            d0: base.d0,
            tau0: base.tau0,
            eta: base.eta,
            dwell: base.dwell,
            prox_a_theta1: prox1,
            prox_a_theta2: prox2,
            prox_b_theta1: prox1,
            prox_b_theta2: prox2,
        }
    }
}

impl RouterSection {
    pub fn pcri_router(&self) -> RouterConfig {
        RouterConfig {
            theta1: self.theta1,
            theta2: self.theta2,
            w1: self.w1,
            w2: self.w2,
            d0: self.d0,
            tau0: self.tau0,
            eta: self.eta,
            dwell: self.dwell,
        }
    }

    pub fn prox_a_router(&self) -> RouterConfig {
        self.pcri_router()
            .with_thresholds(self.prox_a_theta1, self.prox_a_theta2)
    }

    pub fn prox_b_router(&self) -> RouterConfig {
        self.pcri_router()
            .with_thresholds(self.prox_b_theta1, self.prox_b_theta2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub t_horizon: usize,
    pub h_horizon: usize,
    pub q: f64,
    pub r: f64,
    pub qf: f64,
    pub lipschitz: f64,
    pub tolerance: f64,
    pub outer_rhos: Vec<f64>,
    pub inner_iters: usize,
    pub wall_clock_ms: u64,
    pub armijo_c: f64,
    /// Consecutive fallback steps after which a trial counts as deadlocked.
    pub deadlock_steps: usize,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let base = PlanConfig::default();
        PlannerSection {
            t_horizon: base.t_horizon,
            h_horizon: base.h_horizon,
            q: base.q,
            r: base.r,
            qf: base.qf,
            lipschitz: base.lipschitz,
            tolerance: base.tolerance,
            outer_rhos: base.outer_rhos,
            inner_iters: base.inner_iters,
            wall_clock_ms: base.wall_clock_ms,
            armijo_c: base.armijo_c,
            deadlock_steps: 50,
        }
    }
}

impl PlannerSection {
    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            t_horizon: self.t_horizon,
            h_horizon: self.h_horizon,
            q: self.q,
            r: self.r,
            qf: self.qf,
            lipschitz: self.lipschitz,
            tolerance: self.tolerance,
            outer_rhos: self.outer_rhos.clone(),
            inner_iters: self.inner_iters,
            wall_clock_ms: self.wall_clock_ms,
            armijo_c: self.armijo_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSection {
    pub scenarios: usize,
    pub obstacle_min: usize,
    pub obstacle_max: usize,
    pub pattern_weights: [f64; 4],
    /// 0 means: take HYPRAP_PARALLEL from the environment, else 1.
    pub parallelism: usize,
    pub base_seed: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        BatchSection {
            scenarios: 200,
            obstacle_min: 20,
            obstacle_max: 50,
            pattern_weights: [1.0, 1.0, 1.0, 1.0],
            parallelism: 0,
            base_seed: 1000,
        }
    }
}

pub const PARALLEL_ENV_VAR: &str = "HYPRAP_PARALLEL";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub world: WorldSection,
    pub predictors: PredictorsSection,
    pub conformal: ConformalSection,
    pub router: RouterSection,
    pub planner: PlannerSection,
    pub batch: BatchSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        if w.dt <= 0.0 {
            return Err(ConfigError::Invalid("dt must be positive".into()));
        }
        if w.sensing_radius <= w.agent_radius {
            return Err(ConfigError::Invalid(
                "sensing radius must exceed the agent radius".into(),
            ));
        }
        if w.workspace_min[0] >= w.workspace_max[0] || w.workspace_min[1] >= w.workspace_max[1] {
            return Err(ConfigError::Invalid("workspace is empty".into()));
        }
        if self.conformal.delta <= 0.0 || self.conformal.delta >= 1.0 {
            return Err(ConfigError::Invalid("delta must lie in (0,1)".into()));
        }
        if self.conformal.m_max == 0 {
            return Err(ConfigError::Invalid("m_max must be at least 1".into()));
        }
        self.router
            .pcri_router()
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.planner
            .plan_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.batch.obstacle_min > self.batch.obstacle_max {
            return Err(ConfigError::Invalid(
                "obstacle_min must not exceed obstacle_max".into(),
            ));
        }
        if self.predictors.window < 1 || self.predictors.knn_k < 1 {
            return Err(ConfigError::Invalid(
                "predictor window and k must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Effective worker count: explicit config, then the environment
    /// variable, then 1.
    pub fn effective_parallelism(&self) -> usize {
        if self.batch.parallelism > 0 {
            return self.batch.parallelism;
        }
        std::env::var(PARALLEL_ENV_VAR)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|p| *p > 0)
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(Config::default().validate().is_ok());
    }

    #[test]
    fn roundtrip_through_toml() {
        let config = Config::default();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let text = "[world]\ndt = 0.05\n\n[conformal]\ndelta = 0.1\n";
        let config: Config = toml::from_str(text).unwrap();
        assert_eq!(config.world.dt, 0.05);
        assert_eq!(config.conformal.delta, 0.1);
        assert_eq!(config.world.max_steps, 400);
        assert_eq!(config.router.dwell, 3);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut config = Config::default();
        config.world.sensing_radius = 0.1;
        assert!(config.validate().is_err());

        let mut config = Config::default();
        config.router.theta2 = 0.2;
        assert!(config.validate().is_err());

        let mut config = Config::default();
        config.planner.h_horizon = config.planner.t_horizon + 1;
        assert!(config.validate().is_err());
    }
}
