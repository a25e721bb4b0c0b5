//! End-to-end experiment harness: scenario generation, the closed planning
//! loop, the competing architectures, Monte Carlo batching, threshold sweeps,
//! the allocation trade-off study, and report rendering.

mod batch;
mod pipeline;
mod report;
mod runner;
mod scenario;
mod svg;
mod sweep;
mod tradeoff;

pub use batch::{
    read_trials_csv, run_batch, strip_timing_columns, write_mt_csv, write_trials_csv,
    BatchResult, TrialRecord, TrialRow, TIMING_COLUMNS, TRIALS_CSV_HEADER,
};
pub use pipeline::{
    build_artifacts, build_holdout, load_artifacts, save_artifacts, Artifacts,
    CALIBRATION_FILE, EPSILON_FILE, LIBRARY_FILE,
};
pub use report::{aggregate_report, render_report_files, ArchSummary, BatchReport};
pub use runner::{
    run_scenario, MtAccum, ObstacleTraceRecord, RunContext, StepTraceRecord, TrialMetrics,
};
pub use scenario::{generate_scenario, GeneratedScenario, ScenarioSpec};
pub use sweep::{
    choose_sweep_point, sweep_prox_grid, sweep_prox_thresholds, SweepPoint, SweepResult,
    SweepTarget,
};
pub use tradeoff::{r_squared, tradeoff_study, TradeoffCurve, TradeoffPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario generation failed: {0}")]
    ScenarioGeneration(String),
    #[error("accuracy metric undefined: no obstacles are routed to a predictor")]
    EmptyAllocation,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed trial csv {path}: {reason}")]
    MalformedCsv { path: String, reason: String },
    #[error("no trials to aggregate")]
    EmptyReport,
    #[error(transparent)]
    Conformal(#[from] crate::conformal::ConformalError),
    #[error(transparent)]
    Predictor(#[from] crate::predictors::PredictorError),
    #[error(transparent)]
    Artifact(#[from] crate::artifact::ArtifactError),
}

/// The competing planner architectures. All five run the same loop; they
/// differ in the risk score driving the router and in forced predictor
/// levels for the single-predictor baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    /// Every routed obstacle uses the accurate predictor.
    Sp1,
    /// Risk-routed hybrid (the full architecture).
    Hyprap,
    /// Every routed obstacle uses the fast predictor.
    Sp2,
    /// Proximity-scored router, thresholds calibrated to match call volume.
    ProxA,
    /// Proximity-scored router, thresholds calibrated to match success rate.
    ProxB,
}

impl Architecture {
    pub fn parse(s: &str) -> Option<Architecture> {
        match s.to_ascii_lowercase().as_str() {
            "sp1" => Some(Architecture::Sp1),
            "hyprap" => Some(Architecture::Hyprap),
            "sp2" => Some(Architecture::Sp2),
            "prox-a" | "proxa" => Some(Architecture::ProxA),
            "prox-b" | "proxb" => Some(Architecture::ProxB),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Sp1 => "sp1",
            Architecture::Hyprap => "hyprap",
            Architecture::Sp2 => "sp2",
            Architecture::ProxA => "prox-a",
            Architecture::ProxB => "prox-b",
        }
    }

    pub fn uses_proximity(self) -> bool {
        matches!(self, Architecture::ProxA | Architecture::ProxB)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Allocation-weighted accuracy metric: the mean of exp(-mean conformal
/// radius) over the obstacles routed to each real predictor.
pub fn compute_e(
    m1: usize,
    m2: usize,
    eps_tilde_1: f64,
    eps_tilde_2: f64,
) -> Result<f64, HarnessError> {
    let total = m1 + m2;
    if total == 0 {
        return Err(HarnessError::EmptyAllocation);
    }
    Ok((m1 as f64 * (-eps_tilde_1).exp() + m2 as f64 * (-eps_tilde_2).exp()) / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e_metric_worked_value() {
        // Equal split with radii 0.01 and 0.16 evaluates to 0.92110.
        let e = compute_e(4, 4, 0.01, 0.16).unwrap();
        assert!((e - 0.92110).abs() < 5e-6, "got {e}");
    }

    #[test]
    fn e_metric_single_predictor_reduction() {
        let e = compute_e(3, 0, 0.07, 9.9).unwrap();
        assert!((e - (-0.07f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn e_metric_perfect_accuracy() {
        assert_eq!(compute_e(2, 6, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn e_metric_rejects_empty_allocation() {
        assert!(matches!(
            compute_e(0, 0, 0.1, 0.2),
            Err(HarnessError::EmptyAllocation)
        ));
    }

    #[test]
    fn e_metric_monotone_in_allocation() {
        // Moving obstacles toward the accurate predictor raises E when its
        // radius is smaller.
        let mut prev = 0.0;
        for m1 in 0..=8 {
            let e = compute_e(m1, 8 - m1, 0.05, 0.4).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn architecture_parsing() {
        assert_eq!(Architecture::parse("SP1"), Some(Architecture::Sp1));
        assert_eq!(Architecture::parse("hyprap"), Some(Architecture::Hyprap));
        assert_eq!(Architecture::parse("prox-b"), Some(Architecture::ProxB));
        assert_eq!(Architecture::parse("nope"), None);
    }
}
