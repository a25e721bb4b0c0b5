//! Proximity-threshold sweeps: find thresholds for the proximity-scored
//! baselines that match the hybrid router either on prediction call volume
//! or on success rate, over a shared seed set.

use super::batch::run_batch;
use super::runner::RunContext;
use super::scenario::ScenarioSpec;
use super::{Architecture, HarnessError};
use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    /// Match the hybrid router's mean real-predictor calls per scenario.
    Calls,
    /// Match the hybrid router's success rate.
    Success,
}

impl SweepTarget {
    pub fn parse(s: &str) -> Option<SweepTarget> {
        match s.to_ascii_lowercase().as_str() {
            "calls" => Some(SweepTarget::Calls),
            "success" => Some(SweepTarget::Success),
            _ => None,
        }
    }
}

/// One measured grid point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Multiplier on the base distance cutoffs.
    pub scale: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub mean_calls: f64,
    pub success_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub target: SweepTarget,
    pub reference_calls: f64,
    pub reference_success: f64,
    pub chosen: SweepPoint,
    pub points: Vec<SweepPoint>,
}

/// Base distance cutoffs (meters) scaled by the sweep: crossing the outer
/// one routes an obstacle to the fast predictor, the inner one to the
/// accurate predictor.
const BASE_OUTER_CUTOFF: f64 = 4.0;
const BASE_INNER_CUTOFF: f64 = 2.0;

pub fn thresholds_for_scale(scale: f64, d0: f64) -> (f64, f64) {
    let theta1 = (-(BASE_OUTER_CUTOFF * scale) / d0).exp();
    let theta2 = (-(BASE_INNER_CUTOFF * scale) / d0).exp();
    (theta1, theta2)
}

fn summarize(rows: &[super::batch::TrialRow]) -> (f64, f64) {
    let valid: Vec<_> = rows.iter().filter(|r| !r.failed()).collect();
    if valid.is_empty() {
        return (0.0, 0.0);
    }
    let mean_calls =
        valid.iter().map(|r| r.total_real_calls() as f64).sum::<f64>() / valid.len() as f64;
    let success =
        100.0 * valid.iter().filter(|r| r.success).count() as f64 / valid.len() as f64;
    (mean_calls, success)
}

/// Measure the proximity router at every threshold scale on the grid.
pub fn sweep_prox_grid(
    config: &Config,
    ctx: &RunContext,
    specs: &[ScenarioSpec],
    scales: &[f64],
    parallelism: usize,
) -> Vec<SweepPoint> {
    let mut points = Vec::with_capacity(scales.len());
    for &scale in scales {
        let (theta1, theta2) = thresholds_for_scale(scale, config.router.d0);
        let mut candidate = config.clone();
        candidate.router.prox_a_theta1 = theta1;
        candidate.router.prox_a_theta2 = theta2;
        let candidate_ctx = RunContext {
            config: &candidate,
            table: ctx.table,
            predictors: ctx.predictors,
        };
        let result = run_batch(specs, &[Architecture::ProxA], &candidate_ctx, parallelism, false);
        let (mean_calls, success_pct) = summarize(&result.rows);
        points.push(SweepPoint {
            scale,
            theta1,
            theta2,
            mean_calls,
            success_pct,
        });
    }
    points
}

/// Pick the grid point that best matches the target statistic of the hybrid
/// reference. Ties on the success target break toward fewer calls.
pub fn choose_sweep_point(
    points: &[SweepPoint],
    target: SweepTarget,
    reference_calls: f64,
    reference_success: f64,
) -> SweepPoint {
    *points
        .iter()
        .min_by(|a, b| {
            let key = |p: &SweepPoint| match target {
                SweepTarget::Calls => ((p.mean_calls - reference_calls).abs(), 0.0),
                SweepTarget::Success => (
                    (p.success_pct - reference_success).abs(),
                    (p.mean_calls - reference_calls).abs(),
                ),
            };
            key(a).partial_cmp(&key(b)).expect("finite keys")
        })
        .expect("non-empty grid")
}

/// Run the reference batch and the full grid, then pick the match for one
/// target.
pub fn sweep_prox_thresholds(
    config: &Config,
    ctx: &RunContext,
    specs: &[ScenarioSpec],
    target: SweepTarget,
    scales: &[f64],
    parallelism: usize,
) -> Result<SweepResult, HarnessError> {
    assert!(!scales.is_empty(), "sweep needs at least one scale");
    let reference = run_batch(specs, &[Architecture::Hyprap], ctx, parallelism, false);
    let (reference_calls, reference_success) = summarize(&reference.rows);
    let points = sweep_prox_grid(config, ctx, specs, scales, parallelism);
    let chosen = choose_sweep_point(&points, target, reference_calls, reference_success);
    Ok(SweepResult {
        target,
        reference_calls,
        reference_success,
        chosen,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_moves_thresholds_monotonically() {
        let d0 = 2.0;
        let (t1_small, t2_small) = thresholds_for_scale(0.5, d0);
        let (t1_big, t2_big) = thresholds_for_scale(2.0, d0);
        // Larger scale means larger distance cutoffs, i.e. smaller
        // thresholds, i.e. more obstacles routed.
        assert!(t1_big < t1_small);
        assert!(t2_big < t2_small);
        assert!(t1_small < t2_small && t1_big < t2_big);
    }

    #[test]
    fn target_parsing() {
        assert_eq!(SweepTarget::parse("calls"), Some(SweepTarget::Calls));
        assert_eq!(SweepTarget::parse("SUCCESS"), Some(SweepTarget::Success));
        assert_eq!(SweepTarget::parse("none"), None);
    }
}
