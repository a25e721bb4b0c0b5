use hyprap::geometry::Vec2;
use hyprap::predictors::derive_seed;
use hyprap::sim::{simulate_stream, Bounds, PatternSampler};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let bounds = Bounds::new(Vec2::ZERO, Vec2::new(20.0, 20.0));
    let sampler = PatternSampler::new([0.0, 1.0, 0.0, 0.0]);
    let mut worst_overall = f64::INFINITY;
    for stream in 0..600u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(4242, stream));
        let (pattern, pinned) = sampler.sample_placed(&bounds, &mut rng);
        let start = pinned.expect("weavers are pinned");
        let positions = simulate_stream(pattern, start, &bounds, 0.1, 400, &mut rng);
        let min_wall = positions
            .iter()
            .map(|p| {
                (p.x - 0.0)
                    .min(20.0 - p.x)
                    .min(p.y - 0.0)
                    .min(20.0 - p.y)
            })
            .fold(f64::INFINITY, f64::min);
        if min_wall < worst_overall {
            worst_overall = min_wall;
            println!(
                "stream {stream}: start=({:.2},{:.2}) min wall distance {:.3} end=({:.2},{:.2})",
                start.x,
                start.y,
                min_wall,
                positions.last().unwrap().x,
                positions.last().unwrap().y
            );
        }
    }
    println!("worst min wall distance across 600 weaver streams: {worst_overall:.3}");
}
