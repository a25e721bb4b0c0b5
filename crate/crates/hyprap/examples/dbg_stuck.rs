use hyprap::config::Config;
use hyprap::harness::{load_artifacts, RunContext, ScenarioSpec};
use hyprap::harness::generate_scenario;
use hyprap::planner::*;
use hyprap::predictors::PredictorLevel;
use hyprap::sim::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let config = Config::default();
    let artifacts = load_artifacts(&config, std::path::Path::new("/tmp/hyprap-work/artifacts")).unwrap();
    let ctx = RunContext { config: &config, table: &artifacts.table, predictors: &artifacts.predictors };
    let spec = ScenarioSpec::from_config(&config, 1000);
    let scenario = generate_scenario(&spec).unwrap();
    let world = scenario.world;
    let mut tracks = scenario.tracks;
    let mut agent = scenario.agent_start;
    let mut rng = ChaCha8Rng::seed_from_u64(hyprap::predictors::derive_seed(1000, 0xB2));
    let plan_config = ctx.config.planner.plan_config();
    println!("agent start ({:.2},{:.2},{:.2}) goal ({:.2},{:.2})", agent.x, agent.y, agent.heading, world.goal.x, world.goal.y);

    // Advance world a few steps with the agent moving straight at the goal.
    for t in 0..6 {
        let sensed = sense(&agent, &tracks, world.sensing_radius);
        for s in &sensed {
            let d = s.position.distance(agent.position());
            if d < 4.0 {
                println!("t={t} obstacle {} at ({:.2},{:.2}) distance {:.2}", s.id, s.position.x, s.position.y, d);
            }
        }
        // Build constraints like SP1 would, using full histories.
        let m_t = sensed.iter().filter(|s| s.position.distance(agent.position()) < 6.0).count().max(1);
        let mut constraints = ConstraintSet::default();
        for s in &sensed {
            let track = tracks.iter().find(|tr| tr.id == s.id).unwrap();
            let hist = &track.position_history;
            let tail = &hist[hist.len().saturating_sub(21)..];
            let pred = artifacts.predictors.predict(PredictorLevel::Accurate, tail, 30);
            if pred.executed == PredictorLevel::Simple {
                continue;
            }
            let mut radii = Vec::new();
            for h in 1..=30 {
                radii.push(artifacts.table.lookup(pred.executed, m_t, h).unwrap().epsilon);
            }
            constraints.obstacles.push(ObstacleConstraint::new(
                s.id, pred.points, world.agent_radius, s.radius, 1.0, &radii,
            ));
        }
        let prob = MpcProblem {
            x0: agent, goal: world.goal, constraints: &constraints,
            limits: world.limits, dt: world.dt, config: &plan_config,
        };
        let result = prob.solve(None);
        println!("  t={t} solve: {:?} viol {:.4} iters {}", result.status, result.max_violation, result.iterations);
        // Where is the violation?
        let mut worst = (0usize, 0usize, 0.0f64);
        for obs in &constraints.obstacles {
            for h in 1..=30usize {
                let slack = collision_margin(result.states[h].position(), obs.points[h-1], obs.margins[h-1]);
                if -slack > worst.2 {
                    worst = (obs.obstacle_id, h, -slack);
                }
            }
        }
        println!("  worst violation: obstacle {} at h={} depth {:.4} (margin there {:.3})",
            worst.0, worst.1, worst.2,
            constraints.obstacles.iter().find(|o| o.obstacle_id == worst.0).map(|o| o.margins[worst.1.saturating_sub(1)]).unwrap_or(0.0));
        // Violations of the coarse seed grid.
        let mut grid_best = f64::INFINITY;
        for vi in [0.33f64, 0.67, 1.0] {
            for wi in [0.0f64, 0.33, -0.33, 0.67, -0.67, 1.0, -1.0] {
                let u = ControlInput::new(vi * world.limits.v_max, wi * world.limits.omega_max);
                let states = rollout_dynamics(&agent, &vec![u; 30], world.dt);
                grid_best = grid_best.min(audit_violation(&states, &constraints, 30));
            }
        }
        println!("  coarse seed grid best violation: {grid_best:.4}");

        // Ground truth: dense constant-control scan.
        let mut best = f64::INFINITY;
        let mut best_u = (0.0, 0.0);
        for vi in 0..=10 {
            for wi in -12..=12 {
                let u = ControlInput::new(vi as f64 * 0.15, wi as f64 * 0.125);
                let states = rollout_dynamics(&agent, &vec![u; 30], world.dt);
                let v = audit_violation(&states, &constraints, 30);
                if v < best {
                    best = v;
                    best_u = (u.linear_velocity, u.angular_velocity);
                }
            }
        }
        println!("  best constant control ({:.2},{:.2}) violation {:.4}", best_u.0, best_u.1, best);

        let u = result.controls[0];
        agent = step_agent(&agent, u, &world.limits, world.dt).unwrap();
        step_obstacles(&mut tracks, &world.bounds, world.dt, &mut rng).unwrap();
    }
}
