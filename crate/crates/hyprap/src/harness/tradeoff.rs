//! Forced-allocation trade-off study: with the router bypassed and a fixed
//! total of predicted obstacles, sweep how many go to the accurate predictor
//! and measure prediction-only time, prediction+MPC time, and the accuracy
//! metric, against the linear cost model built from measured per-call times.

use super::runner::RunContext;
use super::{compute_e, HarnessError};
use crate::geometry::Vec2;
use crate::planner::{ConstraintSet, MpcProblem, ObstacleConstraint, PlanResult};
use crate::predictors::{derive_seed, prediction_cost, PredictorLevel};
use crate::sim::{
    step_obstacles, AgentState, MotionPattern, ObstacleTrack, WorldConfig,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// One measured allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub m1: usize,
    pub m2: usize,
    /// Mean prediction-only wall time per planning step (seconds).
    pub pred_time_s: f64,
    /// Mean prediction+MPC wall time per planning step (seconds).
    pub total_time_s: f64,
    /// Linear model value: m1 * dt1 + m2 * dt2 from measured per-call costs.
    pub theory_time_s: f64,
    pub e_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
    /// Measured per-call cost of the accurate predictor.
    pub delta_t1: f64,
    /// Measured per-call cost of the fast predictor.
    pub delta_t2: f64,
}

const TRADEOFF_OBSTACLES: usize = 8;

/// A converging cluster: the agent heads across the workspace while the
/// obstacles drift toward its straight-line path, so every one of them is
/// genuinely high-risk and its constraints bite.
fn tradeoff_world(seed: u64, world: &WorldConfig, obstacle_radius: f64) -> (AgentState, Vec<ObstacleTrack>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD3));
    let mid_y = (world.bounds.min.y + world.bounds.max.y) / 2.0;
    let agent = AgentState::new(world.bounds.min.x + 2.0, mid_y, 0.0);
    let tracks = (0..TRADEOFF_OBSTACLES)
        .map(|i| {
            let x = 5.0 + 1.1 * i as f64 + rng.gen_range(-0.3..0.3);
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let y = mid_y + side * (1.4 + rng.gen_range(0.0..1.4));
            let start = Vec2::new(x, y);
            // Drift toward the path line at walking pace.
            let vy = -side * rng.gen_range(0.15..0.3);
            let vx = rng.gen_range(-0.1..0.05);
            ObstacleTrack::new(
                i + 1,
                start,
                obstacle_radius,
                MotionPattern::ConstantVelocity {
                    velocity: Vec2::new(vx, vy),
                    accel_sigma: 0.02,
                },
            )
        })
        .collect();
    (agent, tracks)
}

/// Run one forced allocation for `steps` planning steps and return mean
/// (prediction, prediction+MPC) times per step.
fn run_forced(
    m1: usize,
    seed: u64,
    steps: usize,
    ctx: &RunContext,
) -> (f64, f64) {
    let mut world = WorldConfig {
        bounds: ctx.config.world.bounds(),
        goal: Vec2::ZERO,
        goal_radius: ctx.config.world.goal_radius,
        sensing_radius: ctx.config.world.sensing_radius,
        dt: ctx.config.world.dt,
        agent_radius: ctx.config.world.agent_radius,
        limits: ctx.config.world.limits(),
        max_steps: steps,
        rng_seed: seed,
    };
    let mid_y = (world.bounds.min.y + world.bounds.max.y) / 2.0;
    world.goal = Vec2::new(world.bounds.max.x - 2.0, mid_y);

    let (mut agent, mut tracks) = tradeoff_world(seed, &world, ctx.config.world.obstacle_radius);
    let mut world_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD4));
    let plan_config = ctx.config.planner.plan_config();
    let horizon = plan_config.h_horizon;
    let window = ctx.predictors.window();
    let m_t = TRADEOFF_OBSTACLES;

    // Warm up histories so every obstacle supports full-window retrieval.
    for _ in 0..=window {
        step_obstacles(&mut tracks, &world.bounds, world.dt, &mut world_rng)
            .expect("histories non-empty");
    }

    let mut prev: Option<PlanResult> = None;
    let mut pred_total = 0.0;
    let mut solve_total = 0.0;
    for _ in 0..steps {
        // Full histories are visible in this controlled study.
        let pred_start = Instant::now();
        let mut constraints = ConstraintSet::default();
        for track in &tracks {
            let level = if track.id <= m1 {
                PredictorLevel::Accurate
            } else {
                PredictorLevel::Fast
            };
            let history = &track.position_history;
            let tail_start = history.len().saturating_sub(window + 1);
            let prediction = ctx.predictors.predict(level, &history[tail_start..], horizon);
            let mut radii = Vec::with_capacity(horizon);
            for h in 1..=horizon {
                radii.push(
                    ctx.table
                        .lookup(prediction.executed, m_t, h)
                        .expect("level and range are valid")
                        .epsilon,
                );
            }
            constraints.obstacles.push(ObstacleConstraint::new(
                track.id,
                prediction.points,
                world.agent_radius,
                track.radius,
                plan_config.lipschitz,
                &radii,
            ));
        }
        let pred_elapsed = pred_start.elapsed().as_secs_f64();

        let solve_start = Instant::now();
        let problem = MpcProblem {
            x0: agent,
            goal: world.goal,
            constraints: &constraints,
            limits: world.limits,
            dt: world.dt,
            config: &plan_config,
        };
        let result = problem.solve(prev.as_ref());
        let solve_elapsed = solve_start.elapsed().as_secs_f64();

        pred_total += pred_elapsed;
        solve_total += solve_elapsed;

        let u = result.controls[0];
        agent = crate::sim::step_agent(&agent, u, &world.limits, world.dt)
            .expect("projected controls");
        step_obstacles(&mut tracks, &world.bounds, world.dt, &mut world_rng)
            .expect("histories non-empty");
        prev = Some(result);
    }
    let n = steps as f64;
    (pred_total / n, (pred_total + solve_total) / n)
}

/// Sweep allocations (m1, m_total - m1) over a fixed high-risk cluster.
pub fn tradeoff_study(
    ctx: &RunContext,
    allocations: &[(usize, usize)],
    repeats: usize,
    steps_per_run: usize,
) -> Result<TradeoffCurve, HarnessError> {
    let costs = prediction_cost(ctx.predictors, ctx.config.planner.h_horizon, 1000)?;
    let mut points = Vec::with_capacity(allocations.len());
    for &(m1, m2) in allocations {
        assert_eq!(
            m1 + m2,
            TRADEOFF_OBSTACLES,
            "allocations must sum to the fixed cluster size"
        );
        // Median over repeats: robust against scheduler hiccups inflating
        // a single repeat.
        let mut preds = Vec::with_capacity(repeats.max(1));
        let mut totals = Vec::with_capacity(repeats.max(1));
        for rep in 0..repeats.max(1) {
            let (pred, total) = run_forced(m1, 7100 + rep as u64, steps_per_run, ctx);
            preds.push(pred);
            totals.push(total);
        }
        let median = |values: &mut Vec<f64>| -> f64 {
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
            values[values.len() / 2]
        };
        let e1 = ctx
            .table
            .mean_radius(PredictorLevel::Accurate, TRADEOFF_OBSTACLES)?;
        let e2 = ctx.table.mean_radius(PredictorLevel::Fast, TRADEOFF_OBSTACLES)?;
        let e_value = if m1 + m2 > 0 {
            compute_e(m1, m2, e1, e2)?
        } else {
            0.0
        };
        points.push(TradeoffPoint {
            m1,
            m2,
            pred_time_s: median(&mut preds),
            total_time_s: median(&mut totals),
            theory_time_s: m1 as f64 * costs.accurate_s + m2 as f64 * costs.fast_s,
            e_value,
        });
    }
    Ok(TradeoffCurve {
        points,
        delta_t1: costs.accurate_s,
        delta_t2: costs.fast_s,
    })
}

/// Coefficient of determination of the least-squares line y = a + b x.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 1.0;
    }
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mean_x).powi(2);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    let b = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| {
            let fitted = mean_y + b * (x - mean_x);
            (y - fitted).powi(2)
        })
        .sum();
    1.0 - ss_res / syy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_of_exact_line_is_one() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_of_noise_is_low() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        assert!(r_squared(&xs, &ys) < 0.3);
    }
}
