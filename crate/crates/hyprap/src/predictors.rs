//! The predictor set: a uniform prediction interface over three levels with a
//! deliberate accuracy/cost asymmetry, plus calibration-set generation.
//!
//! Level 1 retrieves nearest segments from a trajectory library and averages
//! their futures (accurate, slow). Level 2 extrapolates constant velocity
//! (fast, coarse). Level 0 is the same constant-velocity model but is never
//! turned into an MPC constraint; it only keeps risk scores well-defined.

use crate::geometry::Vec2;
use crate::sim::{simulate_stream, Bounds, PatternSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("trajectory library is empty")]
    EmptyLibrary,
    #[error("history too short: got {got} points, need {need}")]
    HistoryTooShort { got: usize, need: usize },
    #[error("measured cost ordering violated: accurate {accurate_s:.3e}s <= fast {fast_s:.3e}s")]
    CostOrderingViolated { accurate_s: f64, fast_s: f64 },
}

/// Predictor levels. Numeric indices 0/1/2 are the wire format used by
/// epsilon tables, trace files, and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredictorLevel {
    /// Level 0: constant-velocity bookkeeping model, never an MPC constraint.
    Simple,
    /// Level 1: trajectory-library kNN, accurate but slow.
    Accurate,
    /// Level 2: constant-velocity extrapolation, fast but coarse.
    Fast,
}

impl PredictorLevel {
    pub fn index(self) -> u8 {
        match self {
            PredictorLevel::Simple => 0,
            PredictorLevel::Accurate => 1,
            PredictorLevel::Fast => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<PredictorLevel> {
        match i {
            0 => Some(PredictorLevel::Simple),
            1 => Some(PredictorLevel::Accurate),
            2 => Some(PredictorLevel::Fast),
            _ => None,
        }
    }
}

impl std::fmt::Display for PredictorLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A predicted obstacle trajectory over the horizon, with the conformal
/// radius per step filled in by the caller from the epsilon table (empty for
/// level 0 and for fallbacks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub obstacle_id: usize,
    pub predictor: PredictorLevel,
    pub base_step: usize,
    pub points: Vec<Vec2>,
    pub radii: Vec<f64>,
}

/// Raw predictor output before conformal radii are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub points: Vec<Vec2>,
    /// Level requested by the router.
    pub requested: PredictorLevel,
    /// Level that actually produced the points (Simple when falling back).
    pub executed: PredictorLevel,
    /// True when history was too short for the requested level.
    pub fallback: bool,
}

/// One library entry: a window of observed increments and the increments
/// that followed it. Increments make retrieval translation-invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySegment {
    pub history: Vec<Vec2>,
    pub future: Vec<Vec2>,
}

/// Segment library backing the accurate predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLibrary {
    pub window: usize,
    pub horizon: usize,
    pub segments: Vec<LibrarySegment>,
}

impl TrajectoryLibrary {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Slice all (window, horizon) increment windows out of the rollouts with the
/// given stride. Rollouts shorter than window + horizon increments are
/// skipped; the skip count is returned alongside the library.
pub fn build_library(
    rollouts: &[Vec<Vec2>],
    window: usize,
    horizon: usize,
    stride: usize,
) -> (TrajectoryLibrary, usize) {
    assert!(stride >= 1, "stride must be at least 1");
    let needed = window + horizon;
    let mut segments = Vec::new();
    let mut skipped = 0usize;
    for rollout in rollouts {
        if rollout.len() < needed + 1 {
            skipped += 1;
            continue;
        }
        let increments: Vec<Vec2> = rollout.windows(2).map(|w| w[1] - w[0]).collect();
        let mut start = 0;
        while start + needed <= increments.len() {
            segments.push(LibrarySegment {
                history: increments[start..start + window].to_vec(),
                future: increments[start + window..start + needed].to_vec(),
            });
            start += stride;
        }
    }
    (
        TrajectoryLibrary {
            window,
            horizon,
            segments,
        },
        skipped,
    )
}

/// Constant-velocity extrapolation: velocity averaged over the last
/// min(3, available) increments, then integrated forward.
pub fn predict_const_velocity(history: &[Vec2], horizon: usize, dt: f64) -> Vec<Vec2> {
    assert!(history.len() >= 2, "constant-velocity needs two points");
    let n_incr = (history.len() - 1).min(3);
    let tail = &history[history.len() - 1 - n_incr..];
    let mut mean_inc = Vec2::ZERO;
    for w in tail.windows(2) {
        mean_inc += w[1] - w[0];
    }
    mean_inc = mean_inc * (1.0 / n_incr as f64);
    let velocity = mean_inc * (1.0 / dt);
    let anchor = *history.last().expect("history checked non-empty");
    (1..=horizon)
        .map(|h| anchor + velocity * (h as f64 * dt))
        .collect()
}

const RECENCY_DECAY: f64 = 0.96;

/// Nearest-neighbor retrieval over increment windows: find the k closest
/// segments by recency-weighted L2 distance, take the coordinate-wise median
/// of their future increments (robust to a polluted minority among the
/// neighbors), and integrate from the current position. An exact match
/// short-circuits to that segment's future. Ties break on segment index so
/// retrieval is deterministic.
pub fn predict_knn(
    library: &TrajectoryLibrary,
    history: &[Vec2],
    k: usize,
    horizon: usize,
) -> Result<Vec<Vec2>, PredictorError> {
    if library.is_empty() {
        return Err(PredictorError::EmptyLibrary);
    }
    if history.len() != library.window + 1 {
        return Err(PredictorError::HistoryTooShort {
            got: history.len(),
            need: library.window + 1,
        });
    }
    let query: Vec<Vec2> = history.windows(2).map(|w| w[1] - w[0]).collect();
    let k = k.max(1).min(library.len());
    // Recent increments matter more for the immediate future; weight the
    // match distance with a mild exponential recency profile.
    let recency: Vec<f64> = (0..library.window)
        .map(|i| RECENCY_DECAY.powi((library.window - 1 - i) as i32))
        .collect();

    // Small sorted top-k buffer; k is tiny so insertion is cheap.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (idx, seg) in library.segments.iter().enumerate() {
        let mut d = 0.0;
        for ((q, s), w) in query.iter().zip(seg.history.iter()).zip(recency.iter()) {
            d += (*q - *s).norm_sq() * w;
        }
        if best.len() < k || (d, idx) < *best.last().expect("best non-empty") {
            let pos = best
                .iter()
                .position(|&(bd, bi)| (d, idx) < (bd, bi))
                .unwrap_or(best.len());
            best.insert(pos, (d, idx));
            if best.len() > k {
                best.pop();
            }
        }
    }

    let mut blended = vec![Vec2::ZERO; horizon];
    if best[0].0 < 1e-12 {
        // Exact match: return that segment's future verbatim.
        let fut = &library.segments[best[0].1].future;
        for h in 0..horizon {
            blended[h] = if h < fut.len() {
                fut[h]
            } else {
                *fut.last().expect("library futures are non-empty")
            };
        }
    } else {
        let median = |values: &mut Vec<f64>| -> f64 {
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite increments"));
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            }
        };
        let mut xs = Vec::with_capacity(best.len());
        let mut ys = Vec::with_capacity(best.len());
        for h in 0..horizon {
            xs.clear();
            ys.clear();
            for &(_, idx) in &best {
                let fut = &library.segments[idx].future;
                let inc = if h < fut.len() {
                    fut[h]
                } else {
                    *fut.last().expect("library futures are non-empty")
                };
                xs.push(inc.x);
                ys.push(inc.y);
            }
            blended[h] = Vec2::new(median(&mut xs), median(&mut ys));
        }
    }
    let anchor = *history.last().expect("history checked non-empty");
    let mut out = Vec::with_capacity(horizon);
    let mut p = anchor;
    for inc in blended {
        p += inc;
        out.push(p);
    }
    Ok(out)
}

/// The predictor set with its shared parameters.
#[derive(Debug, Clone)]
pub struct PredictorSet {
    pub library: TrajectoryLibrary,
    pub k: usize,
    pub dt: f64,
    /// Stretch factor on level-1 wall time, for controlled timing studies.
    /// 1.0 disables the stretch.
    pub busywait_multiplier: f64,
}

impl PredictorSet {
    pub fn window(&self) -> usize {
        self.library.window
    }

    /// Dispatch to the requested level, cascading down when the history is
    /// too short: retrieval falls back to constant velocity (which stays
    /// conformally calibrated), and anything with a single point degrades to
    /// a stationary level-0 prediction. Output always has `horizon` points
    /// anchored at the obstacle's current position.
    pub fn predict(&self, level: PredictorLevel, history: &[Vec2], horizon: usize) -> Prediction {
        assert!(!history.is_empty(), "prediction requires at least one point");
        let needed = match level {
            PredictorLevel::Accurate => self.library.window + 1,
            _ => 2,
        };
        if history.len() < needed {
            let (points, executed) = if history.len() >= 2 {
                (
                    predict_const_velocity(history, horizon, self.dt),
                    PredictorLevel::Fast,
                )
            } else {
                (vec![history[0]; horizon], PredictorLevel::Simple)
            };
            return Prediction {
                points,
                requested: level,
                executed,
                fallback: true,
            };
        }
        let points = match level {
            PredictorLevel::Accurate => {
                let start = Instant::now();
                let tail = &history[history.len() - (self.library.window + 1)..];
                let points =
                    predict_knn(&self.library, tail, self.k, horizon).expect("length checked");
                if self.busywait_multiplier > 1.0 {
                    let target = start.elapsed().as_secs_f64() * self.busywait_multiplier;
                    while start.elapsed().as_secs_f64() < target {
                        std::hint::spin_loop();
                    }
                }
                points
            }
            _ => predict_const_velocity(history, horizon, self.dt),
        };
        Prediction {
            points,
            requested: level,
            executed: level,
            fallback: false,
        }
    }

}

/// One calibration example: a prediction paired with the realized future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationExample {
    pub predicted: Vec<Vec2>,
    pub truth: Vec<Vec2>,
}

/// Prediction/truth pairs per predictor level, drawn from the same obstacle
/// pattern distribution as the evaluation scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub horizon: usize,
    pub seed: u64,
    pub accurate: Vec<CalibrationExample>,
    pub fast: Vec<CalibrationExample>,
}

impl CalibrationSet {
    pub fn examples(&self, level: PredictorLevel) -> &[CalibrationExample] {
        match level {
            PredictorLevel::Accurate => &self.accurate,
            PredictorLevel::Fast => &self.fast,
            PredictorLevel::Simple => &[],
        }
    }

    pub fn len_per_level(&self) -> usize {
        self.accurate.len().min(self.fast.len())
    }
}

pub struct CalibrationParams<'a> {
    pub sampler: PatternSampler,
    pub bounds: Bounds,
    pub dt: f64,
    pub horizon: usize,
    pub n_streams: usize,
    pub samples_per_stream: usize,
    pub stream_steps: usize,
    pub predictors: &'a PredictorSet,
}

/// Simulate obstacle-only streams, run both real predictors at sampled times,
/// and record (prediction, truth) pairs. Deterministic given the seed.
pub fn generate_calibration_set(seed: u64, params: &CalibrationParams) -> CalibrationSet {
    let window = params.predictors.window();
    let mut accurate = Vec::with_capacity(params.n_streams * params.samples_per_stream);
    let mut fast = Vec::with_capacity(params.n_streams * params.samples_per_stream);
    for stream_idx in 0..params.n_streams {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream_idx as u64));
        let (pattern, pinned) = params.sampler.sample_placed(&params.bounds, &mut rng);
        let margin = 1.0;
        let start = pinned.unwrap_or_else(|| {
            Vec2::new(
                rng.gen_range(params.bounds.min.x + margin..params.bounds.max.x - margin),
                rng.gen_range(params.bounds.min.y + margin..params.bounds.max.y - margin),
            )
        });
        let positions = simulate_stream(
            pattern,
            start,
            &params.bounds,
            params.dt,
            params.stream_steps,
            &mut rng,
        );
        let lo = window;
        let hi = positions.len() - 1 - params.horizon;
        if hi <= lo {
            continue;
        }
        for _ in 0..params.samples_per_stream {
            let t = rng.gen_range(lo..=hi);
            let history = &positions[t - window..=t];
            let truth = positions[t + 1..=t + params.horizon].to_vec();
            for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
                let pred = params.predictors.predict(level, history, params.horizon);
                debug_assert!(!pred.fallback);
                let example = CalibrationExample {
                    predicted: pred.points,
                    truth: truth.clone(),
                };
                match level {
                    PredictorLevel::Accurate => accurate.push(example),
                    _ => fast.push(example),
                }
            }
        }
    }
    CalibrationSet {
        horizon: params.horizon,
        seed,
        accurate,
        fast,
    }
}

/// Generate obstacle-only rollouts for library construction.
pub fn generate_library_rollouts(
    seed: u64,
    n_rollouts: usize,
    steps: usize,
    sampler: PatternSampler,
    bounds: Bounds,
    dt: f64,
) -> Vec<Vec<Vec2>> {
    (0..n_rollouts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let (pattern, pinned) = sampler.sample_placed(&bounds, &mut rng);
            let margin = 1.0;
            let start = pinned.unwrap_or_else(|| {
                Vec2::new(
                    rng.gen_range(bounds.min.x + margin..bounds.max.x - margin),
                    rng.gen_range(bounds.min.y + margin..bounds.max.y - margin),
                )
            });
            simulate_stream(pattern, start, &bounds, dt, steps, &mut rng)
        })
        .collect()
}

/// SplitMix64-style seed derivation, so sub-streams are decorrelated.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Measured expected prediction time per call for one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub accurate_s: f64,
    pub fast_s: f64,
}

/// Benchmark both real predictors over `calls` synthetic histories and check
/// the cost asymmetry that the routing theory assumes.
pub fn prediction_cost(
    set: &PredictorSet,
    horizon: usize,
    calls: usize,
) -> Result<CostModel, PredictorError> {
    if set.library.is_empty() {
        return Err(PredictorError::EmptyLibrary);
    }
    let calls = calls.max(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let window = set.window();
    let histories: Vec<Vec<Vec2>> = (0..64)
        .map(|_| {
            let mut p = Vec2::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
            let mut out = vec![p];
            for _ in 0..window {
                p += Vec2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                out.push(p);
            }
            out
        })
        .collect();

    let mut sink = 0.0f64;
    let bench = |level: PredictorLevel, sink: &mut f64| {
        let start = Instant::now();
        for i in 0..calls {
            let h = &histories[i % histories.len()];
            let pred = set.predict(level, h, horizon);
            *sink += pred.points[horizon - 1].x;
        }
        start.elapsed().as_secs_f64() / calls as f64
    };
    let accurate_s = bench(PredictorLevel::Accurate, &mut sink);
    let fast_s = bench(PredictorLevel::Fast, &mut sink);
    std::hint::black_box(sink);
    if accurate_s <= fast_s {
        return Err(PredictorError::CostOrderingViolated { accurate_s, fast_s });
    }
    Ok(CostModel { accurate_s, fast_s })
}
