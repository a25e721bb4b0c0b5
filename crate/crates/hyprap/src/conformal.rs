//! Hybrid conformal prediction: per-predictor nonconformity calibration,
//! failure-budget splitting across horizon and obstacle count, epsilon-table
//! construction and lookup, and the joint safety-bound calculators with
//! empirical verification.

use crate::geometry::Vec2;
use crate::predictors::{CalibrationSet, PredictorLevel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("calibration infeasible: n={n} scores cannot support delta_bar={delta_bar:.3e} (need n >= {needed})")]
    CalibrationInfeasible {
        n: usize,
        delta_bar: f64,
        needed: usize,
    },
    #[error("calibration infeasible at level {level}, M={m}, h={h}: n={n}, delta_bar={delta_bar:.3e} (need n >= {needed})")]
    TableCellInfeasible {
        level: u8,
        m: usize,
        h: usize,
        n: usize,
        delta_bar: f64,
        needed: usize,
    },
    #[error("delta_bar must lie in (0,1), got {0}")]
    InvalidDeltaBar(f64),
    #[error("level 0 has no conformal region")]
    SimpleLevelQueried,
    #[error("horizon step {h} outside 1..={h_max}")]
    HorizonOutOfRange { h: usize, h_max: usize },
    #[error("obstacle count must be at least 1")]
    ZeroObstacles,
    #[error("holdout set is empty")]
    EmptyHoldout,
}

/// How the total failure budget delta is split into the per-(obstacle, step)
/// quantile level delta_bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// delta_bar = delta / (M * H), indexed by the live obstacle count M.
    MAdaptive,
    /// delta_bar = delta / (N * H) for a fixed worst-case population N.
    FixedN,
}

/// Failure budget: total delta plus its per-(obstacle, step) split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureBudget {
    pub delta: f64,
    pub horizon: usize,
    pub obstacle_count: usize,
    pub delta_bar: f64,
}

impl FailureBudget {
    pub fn new(delta: f64, horizon: usize, obstacle_count: usize) -> Result<Self, ConformalError> {
        assert!(horizon >= 1 && obstacle_count >= 1);
        let delta_bar = delta / (obstacle_count as f64 * horizon as f64);
        if !(0.0..1.0).contains(&delta_bar) || delta_bar == 0.0 {
            return Err(ConformalError::InvalidDeltaBar(delta_bar));
        }
        Ok(FailureBudget {
            delta,
            horizon,
            obstacle_count,
            delta_bar,
        })
    }
}

/// Euclidean nonconformity between a realized and a predicted position.
pub fn nonconformity_score(truth: Vec2, predicted: Vec2) -> f64 {
    truth.distance(predicted)
}

/// Smallest calibration size that supports the given quantile level.
pub fn min_calibration_size(delta_bar: f64) -> usize {
    // Need ceil((n+1)(1-delta_bar)) <= n, i.e. n >= (1-delta_bar)/delta_bar.
    let mut n = ((1.0 - delta_bar) / delta_bar).ceil() as usize;
    while conformal_rank(n, delta_bar) > n {
        n += 1;
    }
    n
}

/// Split-conformal rank r = ceil((n+1)(1-delta_bar)), computed as
/// (n+1) - floor((n+1) * delta_bar) to avoid float round-off at integers.
fn conformal_rank(n: usize, delta_bar: f64) -> usize {
    let m = (n + 1) as f64;
    (n + 1) - (m * delta_bar).floor() as usize
}

/// The finite-sample conformal radius: the r-th smallest of the calibration
/// scores with r = ceil((n+1)(1-delta_bar)). Duplicate scores are allowed.
pub fn calibrate_radius(scores: &[f64], delta_bar: f64) -> Result<f64, ConformalError> {
    if !(0.0..1.0).contains(&delta_bar) || delta_bar == 0.0 {
        return Err(ConformalError::InvalidDeltaBar(delta_bar));
    }
    let n = scores.len();
    let r = conformal_rank(n, delta_bar);
    if n == 0 || r > n {
        return Err(ConformalError::CalibrationInfeasible {
            n,
            delta_bar,
            needed: min_calibration_size(delta_bar),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(sorted[r - 1])
}

/// Calibrated conformal radii indexed by (level, obstacle count M, step h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTable {
    pub delta: f64,
    pub horizon: usize,
    pub m_max: usize,
    pub n_calibration: usize,
    pub seed: u64,
    pub budget_mode: BudgetMode,
    /// Flat layout: eps[level][ (m-1) * horizon + (h-1) ] for level in {1,2}.
    accurate: Vec<f64>,
    fast: Vec<f64>,
}

/// Result of a table lookup; `clamped` flags queries above the table width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonLookup {
    pub epsilon: f64,
    pub clamped: bool,
}

impl EpsilonTable {
    /// Calibrate every (level, M, h) cell from the calibration set. The
    /// quantile level per cell follows the budget mode.
    pub fn build(
        calibration: &CalibrationSet,
        delta: f64,
        m_max: usize,
        budget_mode: BudgetMode,
    ) -> Result<Self, ConformalError> {
        assert!(m_max >= 1);
        let horizon = calibration.horizon;
        let mut tables = Vec::new();
        for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
            let examples = calibration.examples(level);
            let n = examples.len();
            let mut cells = vec![0.0; m_max * horizon];
            // Scores per h are shared across M; sort once per (level, h)
            // and pick ranks for each quantile level.
            for h in 1..=horizon {
                let mut scores: Vec<f64> = examples
                    .iter()
                    .map(|ex| nonconformity_score(ex.truth[h - 1], ex.predicted[h - 1]))
                    .collect();
                scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
                for m in 1..=m_max {
                    let denom = match budget_mode {
                        BudgetMode::MAdaptive => m as f64 * horizon as f64,
                        BudgetMode::FixedN => m_max as f64 * horizon as f64,
                    };
                    let delta_bar = delta / denom;
                    let r = conformal_rank(n, delta_bar);
                    if n == 0 || r > n {
                        return Err(ConformalError::TableCellInfeasible {
                            level: level.index(),
                            m,
                            h,
                            n,
                            delta_bar,
                            needed: min_calibration_size(delta_bar),
                        });
                    }
                    cells[(m - 1) * horizon + (h - 1)] = scores[r - 1];
                }
            }
            tables.push(cells);
        }
        let fast = tables.pop().expect("two tables");
        let accurate = tables.pop().expect("two tables");
        Ok(EpsilonTable {
            delta,
            horizon,
            m_max,
            n_calibration: calibration.len_per_level(),
            seed: calibration.seed,
            budget_mode,
            accurate,
            fast,
        })
    }

    /// Construct directly from flat cell arrays (artifact deserialization).
    #[allow(clippy::too_many_arguments)]
    pub fn from_cells(
        delta: f64,
        horizon: usize,
        m_max: usize,
        n_calibration: usize,
        seed: u64,
        budget_mode: BudgetMode,
        accurate: Vec<f64>,
        fast: Vec<f64>,
    ) -> Self {
        assert_eq!(accurate.len(), m_max * horizon);
        assert_eq!(fast.len(), m_max * horizon);
        EpsilonTable {
            delta,
            horizon,
            m_max,
            n_calibration,
            seed,
            budget_mode,
            accurate,
            fast,
        }
    }

    pub fn cells(&self, level: PredictorLevel) -> &[f64] {
        match level {
            PredictorLevel::Accurate => &self.accurate,
            PredictorLevel::Fast => &self.fast,
            PredictorLevel::Simple => &[],
        }
    }

    /// Radius for (level, live obstacle count, horizon step). Counts above
    /// the table width clamp to the widest column and flag it.
    pub fn lookup(
        &self,
        level: PredictorLevel,
        m_t: usize,
        h: usize,
    ) -> Result<EpsilonLookup, ConformalError> {
        if level == PredictorLevel::Simple {
            return Err(ConformalError::SimpleLevelQueried);
        }
        if h == 0 || h > self.horizon {
            return Err(ConformalError::HorizonOutOfRange {
                h,
                h_max: self.horizon,
            });
        }
        if m_t == 0 {
            return Err(ConformalError::ZeroObstacles);
        }
        let clamped = m_t > self.m_max;
        let m = m_t.min(self.m_max);
        let eps = self.cells(level)[(m - 1) * self.horizon + (h - 1)];
        Ok(EpsilonLookup {
            epsilon: eps,
            clamped,
        })
    }

    /// Mean radius over the horizon at the given obstacle count (the
    /// epsilon-tilde entering the accuracy metric).
    pub fn mean_radius(&self, level: PredictorLevel, m_t: usize) -> Result<f64, ConformalError> {
        let sum: f64 = (1..=self.horizon)
            .map(|h| self.lookup(level, m_t, h).map(|l| l.epsilon))
            .sum::<Result<f64, _>>()?;
        Ok(sum / self.horizon as f64)
    }
}

/// A probability bound plus a flag for values at or below zero, which are
/// reported verbatim rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub trivial: bool,
}

impl BoundValue {
    fn new(value: f64) -> Self {
        BoundValue {
            value,
            trivial: value <= 0.0,
        }
    }
}

/// Union-bound joint coverage: 1 - M_t * delta_bar.
pub fn bonferroni_bound(m_t: usize, delta_bar: f64) -> BoundValue {
    BoundValue::new(1.0 - m_t as f64 * delta_bar)
}

/// Joint coverage for non-interacting obstacles: (1 - delta_bar)^{M_t}.
pub fn independent_bound(m_t: usize, delta_bar: f64) -> BoundValue {
    BoundValue::new((1.0 - delta_bar).powi(m_t as i32))
}

/// Joint coverage when only a fraction alpha of the fast-routed obstacles
/// must be covered: (1-d)^{M1} * sum_{j=ceil(alpha*M2)}^{M2} C(M2,j) (1-d)^j d^{M2-j}.
pub fn partial_coverage_bound(m1: usize, m2: usize, alpha: f64, delta_bar: f64) -> BoundValue {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0,1]");
    let p = 1.0 - delta_bar;
    let j_min = (alpha * m2 as f64).ceil() as usize;
    let mut tail = 0.0;
    for j in j_min..=m2 {
        tail += binomial(m2, j) * p.powi(j as i32) * delta_bar.powi((m2 - j) as i32);
    }
    BoundValue::new(p.powi(m1 as i32) * tail)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Empirical coverage of an epsilon-table column on held-out examples.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub level: PredictorLevel,
    pub m: usize,
    pub delta_bar: f64,
    /// Marginal coverage frequency per horizon step h = 1..H.
    pub per_h: Vec<f64>,
    /// Frequency of simultaneous coverage over all h and all obstacles in a
    /// group of `m`, when the joint flag was set.
    pub joint: Option<f64>,
    pub n_examples: usize,
    pub target_marginal: f64,
    pub target_joint_bonferroni: f64,
    pub target_joint_independent: f64,
}

/// Check held-out (prediction, truth) pairs against the table's radii for the
/// given level and obstacle-count column. With `joint` set, consecutive
/// groups of `m` examples are treated as simultaneous obstacle streams.
pub fn empirical_coverage(
    holdout: &CalibrationSet,
    table: &EpsilonTable,
    level: PredictorLevel,
    m: usize,
    joint: bool,
) -> Result<CoverageReport, ConformalError> {
    let examples = holdout.examples(level);
    if examples.is_empty() {
        return Err(ConformalError::EmptyHoldout);
    }
    let horizon = table.horizon.min(holdout.horizon);
    let radii: Vec<f64> = (1..=horizon)
        .map(|h| table.lookup(level, m, h).map(|l| l.epsilon))
        .collect::<Result<_, _>>()?;

    let covered_at = |ex: &crate::predictors::CalibrationExample, h: usize| -> bool {
        nonconformity_score(ex.truth[h - 1], ex.predicted[h - 1]) <= radii[h - 1]
    };

    let mut per_h = vec![0usize; horizon];
    for ex in examples {
        for h in 1..=horizon {
            if covered_at(ex, h) {
                per_h[h - 1] += 1;
            }
        }
    }
    let n = examples.len();
    let per_h: Vec<f64> = per_h.iter().map(|c| *c as f64 / n as f64).collect();

    let joint_freq = if joint {
        let groups = n / m;
        let mut hits = 0usize;
        for g in 0..groups {
            let all = examples[g * m..(g + 1) * m]
                .iter()
                .all(|ex| (1..=horizon).all(|h| covered_at(ex, h)));
            if all {
                hits += 1;
            }
        }
        Some(hits as f64 / groups.max(1) as f64)
    } else {
        None
    };

    let denom = match table.budget_mode {
        BudgetMode::MAdaptive => m as f64 * table.horizon as f64,
        BudgetMode::FixedN => table.m_max as f64 * table.horizon as f64,
    };
    let delta_bar = table.delta / denom;
    Ok(CoverageReport {
        level,
        m,
        delta_bar,
        per_h,
        joint: joint_freq,
        n_examples: n,
        target_marginal: 1.0 - delta_bar,
        target_joint_bonferroni: bonferroni_bound(m, delta_bar).value,
        target_joint_independent: independent_bound(m, delta_bar).value,
    })
}
