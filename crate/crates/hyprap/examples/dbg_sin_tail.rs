use hyprap::config::Config;
use hyprap::geometry::Vec2;
use hyprap::harness::build_artifacts;
use hyprap::predictors::{derive_seed, PredictorLevel};
use hyprap::sim::{simulate_stream, MotionPattern, PatternSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let config = Config::default();
    let artifacts = build_artifacts(&config, 42).unwrap();
    let bounds = config.world.bounds();
    let horizon = 30usize;
    let window = artifacts.predictors.window();

    let mut cases: Vec<(f64, f64, f64, Vec2, f64)> = Vec::new(); // err, A, T, pos, phase_at_t
    for stream in 0..3000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(4242, stream));
        let sampler = PatternSampler::new([0.0, 1.0, 0.0, 0.0]);
        let (pattern, pinned) = sampler.sample_placed(&bounds, &mut rng);
        let (amp, period, phase) = match &pattern {
            MotionPattern::Sinusoid {
                amplitude,
                period,
                phase,
                ..
            } => (*amplitude, *period, *phase),
            _ => unreachable!(),
        };
        let start =
            pinned.unwrap_or_else(|| Vec2::new(rng.gen_range(1.0..19.0), rng.gen_range(1.0..19.0)));
        let positions = simulate_stream(pattern, start, &bounds, 0.1, 150, &mut rng);
        let t = rng.gen_range(window..positions.len() - 1 - horizon);
        let history = &positions[t - window..=t];
        let truth = &positions[t + 1..=t + horizon];
        let pred = artifacts
            .predictors
            .predict(PredictorLevel::Accurate, history, horizon);
        let err = pred.points[horizon - 1].distance(truth[horizon - 1]);
        let phase_at_t = (2.0 * std::f64::consts::PI / period) * (t as f64 * 0.1) + phase;
        cases.push((err, amp, period, positions[t], phase_at_t));
    }
    cases.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("worst level-1 sinusoid cases (err@h30, A, T, position, phase mod 2pi):");
    for (err, a, t, p, ph) in cases.iter().take(15) {
        println!(
            "  err={err:.3}  A={a:.3}  T={t:.2}  pos=({:.1},{:.1})  phase={:.2}",
            p.x,
            p.y,
            ph.rem_euclid(2.0 * std::f64::consts::PI)
        );
    }
    let n = cases.len();
    println!("p50={:.3} p90={:.3} p99={:.3} max={:.3}",
        cases[n / 2].0, cases[n / 10].0, cases[n / 100].0, cases[0].0);
    // How far from walls are the worst 60 cases?
    let near_wall = cases
        .iter()
        .take(60)
        .filter(|(_, _, _, p, _)| {
            p.x < 2.2 || p.x > 17.8 || p.y < 2.2 || p.y > 17.8
        })
        .count();
    println!("of worst 60: {near_wall} within wall zone");
}
