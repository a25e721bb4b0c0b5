//! Offline artifact pipeline: library rollouts, calibration set, epsilon
//! table. The same builder backs the `calibrate` command and the test
//! fixtures, so every consumer sees identical artifacts for a seed.

use super::HarnessError;
use crate::artifact;
use crate::config::Config;
use crate::conformal::EpsilonTable;
use crate::predictors::{
    build_library, derive_seed, generate_calibration_set, generate_library_rollouts,
    CalibrationParams, CalibrationSet, PredictorSet,
};
use crate::sim::PatternSampler;
use std::path::Path;

const LIBRARY_TAG: u64 = 1;
const CALIBRATION_TAG: u64 = 2;
const HOLDOUT_TAG: u64 = 3;

/// Library rollouts oversample the weave family relative to the evaluation
/// mix. The library is the retrieval predictor's training data, so its
/// composition is a modeling choice; calibration and holdout sets keep the
/// true pattern mix, which is what the coverage guarantee depends on.
const LIBRARY_WEAVER_BOOST: f64 = 2.5;

/// Everything the online loop needs from the offline stage.
pub struct Artifacts {
    pub predictors: PredictorSet,
    pub calibration: CalibrationSet,
    pub table: EpsilonTable,
    pub library_seed: u64,
}

/// Build library, calibration set, and epsilon table from scratch.
/// Library, calibration, and any holdout use disjoint seed streams.
pub fn build_artifacts(config: &Config, seed: u64) -> Result<Artifacts, HarnessError> {
    let p = &config.predictors;
    let horizon = config.planner.h_horizon;
    let sampler = PatternSampler::new(config.batch.pattern_weights);
    let bounds = config.world.bounds();
    let library_seed = derive_seed(seed, LIBRARY_TAG);

    let mut library_weights = config.batch.pattern_weights;
    library_weights[1] *= LIBRARY_WEAVER_BOOST;
    let rollouts = generate_library_rollouts(
        library_seed,
        p.library_rollouts,
        p.library_rollout_steps,
        PatternSampler::new(library_weights),
        bounds,
        config.world.dt,
    );
    let (library, _skipped) = build_library(&rollouts, p.window, horizon, p.library_stride);
    let predictors = PredictorSet {
        library,
        k: p.knn_k,
        dt: config.world.dt,
        busywait_multiplier: p.busywait_multiplier,
    };

    let calibration = generate_calibration_set(
        derive_seed(seed, CALIBRATION_TAG),
        &CalibrationParams {
            sampler,
            bounds,
            dt: config.world.dt,
            horizon,
            n_streams: p.calibration_streams,
            samples_per_stream: p.calibration_samples_per_stream,
            stream_steps: p.calibration_stream_steps,
            predictors: &predictors,
        },
    );
    let table = EpsilonTable::build(
        &calibration,
        config.conformal.delta,
        config.conformal.m_max,
        config.conformal.budget_mode,
    )?;
    Ok(Artifacts {
        predictors,
        calibration,
        table,
        library_seed,
    })
}

/// A held-out evaluation set from the same pattern distribution, on a seed
/// stream disjoint from both the library and the calibration set.
pub fn build_holdout(
    config: &Config,
    artifacts: &Artifacts,
    seed: u64,
) -> CalibrationSet {
    let p = &config.predictors;
    generate_calibration_set(
        derive_seed(seed, HOLDOUT_TAG),
        &CalibrationParams {
            sampler: PatternSampler::new(config.batch.pattern_weights),
            bounds: config.world.bounds(),
            dt: config.world.dt,
            horizon: config.planner.h_horizon,
            n_streams: p.holdout_streams,
            samples_per_stream: p.holdout_samples_per_stream,
            stream_steps: p.calibration_stream_steps,
            predictors: &artifacts.predictors,
        },
    )
}

pub const LIBRARY_FILE: &str = "library.bin";
pub const CALIBRATION_FILE: &str = "calibration.bin";
pub const EPSILON_FILE: &str = "epsilon_table.bin";

pub fn save_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    artifact::save_library(
        &artifacts.predictors.library,
        artifacts.library_seed,
        &dir.join(LIBRARY_FILE),
    )?;
    artifact::save_calibration(&artifacts.calibration, &dir.join(CALIBRATION_FILE))?;
    artifact::save_epsilon_table(&artifacts.table, &dir.join(EPSILON_FILE))?;
    Ok(())
}

/// Load artifacts back; predictor parameters (k, dt, busy-wait) come from
/// the config, the data from the files.
pub fn load_artifacts(config: &Config, dir: &Path) -> Result<Artifacts, HarnessError> {
    let (library, library_seed) = artifact::load_library(&dir.join(LIBRARY_FILE))?;
    let calibration = artifact::load_calibration(&dir.join(CALIBRATION_FILE))?;
    let table = artifact::load_epsilon_table(&dir.join(EPSILON_FILE))?;
    Ok(Artifacts {
        predictors: PredictorSet {
            library,
            k: config.predictors.knn_k,
            dt: config.world.dt,
            busywait_multiplier: config.predictors.busywait_multiplier,
        },
        calibration,
        table,
        library_seed,
    })
}
