use hyprap::config::Config;
use hyprap::geometry::Vec2;
use hyprap::predictors::{
    build_library, derive_seed, generate_library_rollouts, PredictorLevel, PredictorSet,
};
use hyprap::sim::{Bounds, PatternSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quantiles(label: &str, mut scores: Vec<f64>) {
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = scores.len();
    let q = |p: f64| scores[(((n as f64) * p) as usize).min(n - 1)];
    println!(
        "{label}: p50={:.3} p90={:.3} p99={:.3} p999={:.3} max={:.3}",
        q(0.5),
        q(0.9),
        q(0.99),
        q(0.999),
        scores[n - 1]
    );
}

fn main() {
    let config = Config::default();
    // Giant workspace: walls unreachable, pure pattern dynamics.
    let bounds = Bounds::new(Vec2::new(-1e5, -1e5), Vec2::new(1e5, 1e5));
    let weights = [0.0, 1.0, 0.0, 0.0]; // sinusoid only
    let sampler = PatternSampler::new(weights);
    let horizon = 30usize;
    let window = config.predictors.window;

    let n_lib: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let rollouts = generate_library_rollouts(1, n_lib, 400, sampler, bounds, 0.1);
    let (library, _) = build_library(&rollouts, window, horizon, 10);
    println!("wall-free sinusoid library: {} segments", library.len());
    let set = PredictorSet {
        library,
        k: config.predictors.knn_k,
        dt: 0.1,
        busywait_multiplier: 1.0,
    };

    let mut errs_l1 = Vec::new();
    let mut errs_l2 = Vec::new();
    let mut detail: Vec<(f64, f64, f64, f64)> = Vec::new(); // err, speed, orbit_rate, weave_phase_at_t
    for stream in 0..4000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(77, stream));
        let (pattern, pinned) = sampler.sample_placed(&bounds, &mut rng);
        let (speed, orbit_rate, period, phase) = match &pattern {
            hyprap::sim::MotionPattern::Sinusoid {
                base_velocity,
                orbit_rate,
                period,
                phase,
                ..
            } => (base_velocity.norm(), *orbit_rate, *period, *phase),
            _ => (0.0, 0.0, 1.0, 0.0),
        };
        let start = pinned
            .unwrap_or_else(|| Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)));
        let positions = hyprap::sim::simulate_stream(pattern, start, &bounds, 0.1, 120, &mut rng);
        let t = rng.gen_range(window..positions.len() - 1 - horizon);
        let history = &positions[t - window..=t];
        let truth = positions[t + horizon];
        for (level, errs) in [
            (PredictorLevel::Accurate, &mut errs_l1),
            (PredictorLevel::Fast, &mut errs_l2),
        ] {
            let pred = set.predict(level, history, horizon);
            let e = pred.points[horizon - 1].distance(truth);
            if level == PredictorLevel::Accurate {
                let wp = (2.0 * std::f64::consts::PI / period) * (t as f64 * 0.1) + phase;
                detail.push((e, speed, orbit_rate, wp.rem_euclid(2.0 * std::f64::consts::PI)));
            }
            errs.push(e);
        }
    }
    quantiles("wall-free weave level 1 @h30", errs_l1);
    quantiles("wall-free weave level 2 @h30", errs_l2);
    detail.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("worst level-1 cases (err, base speed, orbit rate, weave phase):");
    for (e, v, o, wp) in detail.iter().take(12) {
        println!("  err={e:.3} v={v:.3} orbit={o:+.4} phase={wp:.2}");
    }
}
