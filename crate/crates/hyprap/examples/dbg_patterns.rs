use hyprap::config::Config;
use hyprap::conformal::nonconformity_score;
use hyprap::harness::build_artifacts;
use hyprap::predictors::{
    generate_calibration_set, CalibrationParams, PredictorLevel,
};
use hyprap::sim::PatternSampler;

fn main() {
    let config = Config::default();
    let artifacts = build_artifacts(&config, 42).unwrap();
    let names = ["const-vel", "sinusoid", "waypoint", "stop-go"];
    for (i, name) in names.iter().enumerate() {
        let mut weights = [0.0; 4];
        weights[i] = 1.0;
        let params = CalibrationParams {
            sampler: PatternSampler::new(weights),
            bounds: config.world.bounds(),
            dt: config.world.dt,
            horizon: config.planner.h_horizon,
            n_streams: 900,
            samples_per_stream: 4,
            stream_steps: config.predictors.calibration_stream_steps,
            predictors: &artifacts.predictors,
        };
        let cal = generate_calibration_set(987_000 + i as u64, &params);
        for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
            let examples = cal.examples(level);
            // Scores at h = 30 and h = 15.
            for h in [15usize, 30] {
                let mut scores: Vec<f64> = examples
                    .iter()
                    .map(|ex| nonconformity_score(ex.truth[h - 1], ex.predicted[h - 1]))
                    .collect();
                scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = scores.len();
                let q = |p: f64| scores[(((n as f64) * p) as usize).min(n - 1)];
                println!(
                    "{name:10} level {} h={h:2}: p50={:.3} p90={:.3} p99={:.3} p999={:.3} max={:.3}",
                    level.index(),
                    q(0.5),
                    q(0.9),
                    q(0.99),
                    q(0.999),
                    scores[n - 1]
                );
            }
        }
        println!();
    }
}
