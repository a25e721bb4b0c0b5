//! Collision risk scoring and predictor routing.
//!
//! Risk per obstacle combines approach distances and signed approach times
//! over the shared horizon into a scalar in [0,1], which a thresholding
//! router with hysteresis maps to a predictor level. A proximity-only score
//! is provided as the baseline risk metric.

use crate::geometry::Vec2;
use crate::predictors::PredictorLevel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("sequence length mismatch: agent {agent} vs obstacle {obstacle}")]
    LengthMismatch { agent: usize, obstacle: usize },
    #[error("sequences must contain at least two points")]
    TooShort,
}

/// Relative speeds (squared) below this are treated as co-moving and map to
/// the +inf approach-time sentinel.
pub const RELATIVE_SPEED_SQ_FLOOR: f64 = 1e-6;

/// Per-step approach distances and signed approach times for one obstacle,
/// indexed h = 0..=H where h = 0 is the anchor step of the input sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachProfile {
    pub pad: Vec<f64>,
    pub pat: Vec<f64>,
}

impl ApproachProfile {
    pub fn compute(
        agent_plan: &[Vec2],
        obstacle_pred: &[Vec2],
        dt: f64,
    ) -> Result<ApproachProfile, RiskError> {
        Ok(ApproachProfile {
            pad: compute_pad(agent_plan, obstacle_pred)?,
            pat: compute_pat(agent_plan, obstacle_pred, dt)?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.pad.len().saturating_sub(1)
    }
}

/// Pointwise distance between the planned agent positions and the predicted
/// obstacle positions.
pub fn compute_pad(agent_plan: &[Vec2], obstacle_pred: &[Vec2]) -> Result<Vec<f64>, RiskError> {
    if agent_plan.len() != obstacle_pred.len() {
        return Err(RiskError::LengthMismatch {
            agent: agent_plan.len(),
            obstacle: obstacle_pred.len(),
        });
    }
    Ok(agent_plan
        .iter()
        .zip(obstacle_pred.iter())
        .map(|(a, o)| a.distance(*o))
        .collect())
}

/// Signed time to closest approach per step: the relative position projected
/// onto the relative velocity, normalized by its squared magnitude.
/// Velocities come from backward differences of the position sequences; the
/// h = 0 entry reuses the first computable difference. Near-zero relative
/// velocity maps to the +inf sentinel (no temporal urgency).
pub fn compute_pat(
    agent_plan: &[Vec2],
    obstacle_pred: &[Vec2],
    dt: f64,
) -> Result<Vec<f64>, RiskError> {
    if agent_plan.len() != obstacle_pred.len() {
        return Err(RiskError::LengthMismatch {
            agent: agent_plan.len(),
            obstacle: obstacle_pred.len(),
        });
    }
    if agent_plan.len() < 2 {
        return Err(RiskError::TooShort);
    }
    let n = agent_plan.len();
    let vel = |seq: &[Vec2], i: usize| -> Vec2 {
        let i = i.max(1);
        (seq[i] - seq[i - 1]) * (1.0 / dt)
    };
    Ok((0..n)
        .map(|i| {
            let rel_pos = obstacle_pred[i] - agent_plan[i];
            let rel_vel = vel(agent_plan, i) - vel(obstacle_pred, i);
            let speed_sq = rel_vel.norm_sq();
            if speed_sq < RELATIVE_SPEED_SQ_FLOOR {
                f64::INFINITY
            } else {
                rel_pos.dot(rel_vel) / speed_sq
            }
        })
        .collect())
}

/// Router parameters: thresholds partitioning [0,1] into the three predictor
/// bands, the risk-score weights and scales, and the hysteresis rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    /// Band edges: psi < theta1 -> level 0, [theta1, theta2) -> level 2,
    /// >= theta2 -> level 1.
    pub theta1: f64,
    pub theta2: f64,
    /// Weight on the distance term.
    pub w1: f64,
    /// Weight on the temporal-urgency term.
    pub w2: f64,
    /// Distance scale (meters) of the distance exponential.
    pub d0: f64,
    /// Time scale (seconds) of the approach-time exponential.
    pub tau0: f64,
    /// Hysteresis margin below a band's lower threshold.
    pub eta: f64,
    /// Consecutive below-margin calls required before downgrading.
    pub dwell: u32,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            theta1: 0.45,
            theta2: 0.55,
            w1: 0.65,
            w2: 0.35,
            d0: 1.6,
            tau0: 2.0,
            eta: 0.05,
            dwell: 3,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.theta1 && self.theta1 < self.theta2 && self.theta2 < 1.0) {
            return Err(format!(
                "thresholds must satisfy 0 < theta1 < theta2 < 1, got ({}, {})",
                self.theta1, self.theta2
            ));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 || (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(format!(
                "weights must be non-negative and sum to 1, got ({}, {})",
                self.w1, self.w2
            ));
        }
        if self.eta >= self.theta1 || self.eta < 0.0 {
            return Err(format!(
                "hysteresis margin must satisfy 0 <= eta < theta1, got eta={}",
                self.eta
            ));
        }
        if self.d0 <= 0.0 || self.tau0 <= 0.0 {
            return Err("scales d0 and tau0 must be positive".into());
        }
        if self.dwell == 0 {
            return Err("dwell must be at least 1".into());
        }
        Ok(())
    }

    /// Replace the band thresholds (used by the proximity sweeps), shrinking
    /// the hysteresis margin if the new lower threshold requires it.
    pub fn with_thresholds(mut self, theta1: f64, theta2: f64) -> Self {
        self.theta1 = theta1;
        self.theta2 = theta2;
        if self.eta >= theta1 {
            self.eta = theta1 / 2.0;
        }
        self
    }
}

/// Scalar risk plus the per-step scores it was reduced from.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskScore {
    pub psi: f64,
    pub per_h: Vec<f64>,
}

/// Risk index in [0,1]: per step, a weighted sum of a decreasing exponential
/// of distance and a double-sided exponential of approach time, reduced by
/// the maximum over the horizon (the worst predicted moment governs).
pub fn compute_pcri(profile: &ApproachProfile, config: &RouterConfig) -> RiskScore {
    let per_h: Vec<f64> = profile
        .pad
        .iter()
        .zip(profile.pat.iter())
        .map(|(&pad, &pat)| {
            let distance_term = (-pad / config.d0).exp();
            let time_term = if pat.is_finite() {
                (-pat.abs() / config.tau0).exp()
            } else {
                0.0
            };
            config.w1 * distance_term + config.w2 * time_term
        })
        .collect();
    let psi = per_h.iter().copied().fold(0.0f64, f64::max);
    RiskScore { psi, per_h }
}

/// Proximity-only risk: a decreasing exponential of the current distance.
pub fn proximity_risk(current_distance: f64, config: &RouterConfig) -> f64 {
    assert!(current_distance >= 0.0, "distance must be non-negative");
    (-current_distance / config.d0).exp()
}

/// Per-obstacle hysteresis state: the band currently held and how many
/// consecutive calls scored below that band's exit margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HysteresisState {
    pub band: PredictorLevel,
    pub below_count: u32,
}

impl HysteresisState {
    /// Fresh state: starts in the lowest band; the first call upgrades
    /// immediately if the score demands it.
    pub fn new() -> Self {
        HysteresisState {
            band: PredictorLevel::Simple,
            below_count: 0,
        }
    }
}

impl Default for HysteresisState {
    fn default() -> Self {
        Self::new()
    }
}

fn band_of(psi: f64, config: &RouterConfig) -> PredictorLevel {
    if psi < config.theta1 {
        PredictorLevel::Simple
    } else if psi < config.theta2 {
        PredictorLevel::Fast
    } else {
        PredictorLevel::Accurate
    }
}

/// Risk rank of a band: Simple < Fast < Accurate.
fn rank(level: PredictorLevel) -> u8 {
    match level {
        PredictorLevel::Simple => 0,
        PredictorLevel::Fast => 1,
        PredictorLevel::Accurate => 2,
    }
}

fn lower_threshold(level: PredictorLevel, config: &RouterConfig) -> f64 {
    match level {
        PredictorLevel::Simple => 0.0,
        PredictorLevel::Fast => config.theta1,
        PredictorLevel::Accurate => config.theta2,
    }
}

/// Threshold routing with hysteresis: moves toward the accurate predictor
/// immediately, but only downgrades after `dwell` consecutive calls with the
/// score below the held band's lower threshold minus `eta`.
pub fn route(psi: f64, state: &mut HysteresisState, config: &RouterConfig) -> PredictorLevel {
    debug_assert!((0.0..=1.0).contains(&psi), "psi must lie in [0,1]");
    let base = band_of(psi, config);
    if rank(base) >= rank(state.band) {
        state.band = base;
        state.below_count = 0;
    } else {
        if psi < lower_threshold(state.band, config) - config.eta {
            state.below_count += 1;
        } else {
            state.below_count = 0;
        }
        if state.below_count >= config.dwell {
            state.band = base;
            state.below_count = 0;
        }
    }
    state.band
}
