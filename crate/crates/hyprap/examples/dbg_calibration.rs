use hyprap::config::Config;
use hyprap::harness::{build_artifacts, build_holdout};
use hyprap::predictors::PredictorLevel;
use std::time::Instant;

fn main() {
    let config = Config::default();
    let t0 = Instant::now();
    let artifacts = build_artifacts(&config, 42).unwrap();
    println!(
        "artifacts built in {:.1}s: library {} segments, calibration {} examples/level",
        t0.elapsed().as_secs_f64(),
        artifacts.predictors.library.len(),
        artifacts.calibration.len_per_level()
    );
    let table = &artifacts.table;
    for m in [1usize, 8, 16] {
        let e1 = table.mean_radius(PredictorLevel::Accurate, m).unwrap();
        let e2 = table.mean_radius(PredictorLevel::Fast, m).unwrap();
        println!("M={m:2}  mean eps1={e1:.4}  mean eps2={e2:.4}  ratio={:.2}", e2 / e1);
    }
    println!("per-h radii at M=8:");
    for h in [1usize, 5, 10, 15, 20, 25, 30] {
        let e1 = table.lookup(PredictorLevel::Accurate, 8, h).unwrap().epsilon;
        let e2 = table.lookup(PredictorLevel::Fast, 8, h).unwrap().epsilon;
        println!("  h={h:2}  eps1={e1:.4}  eps2={e2:.4}  ratio={:.2}", e2 / e1);
    }
    // Mean per-step errors (not quantiles) for context.
    for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
        let examples = artifacts.calibration.examples(level);
        let mut sum = 0.0;
        let mut worst: f64 = 0.0;
        let mut count = 0usize;
        for ex in examples {
            for (p, t) in ex.predicted.iter().zip(ex.truth.iter()) {
                let e = p.distance(*t);
                sum += e;
                worst = worst.max(e);
                count += 1;
            }
        }
        println!(
            "level {level}: mean err {:.4}, worst err {:.4}",
            sum / count as f64,
            worst
        );
    }
    let t1 = Instant::now();
    let holdout = build_holdout(&config, &artifacts, 42);
    println!(
        "holdout {} examples/level in {:.1}s",
        holdout.len_per_level(),
        t1.elapsed().as_secs_f64()
    );
}
