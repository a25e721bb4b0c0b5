use hyprap::geometry::Vec2;
use hyprap::planner::*;
use hyprap::sim::{AgentState, ControlLimits};

fn main() {
    let config = PlanConfig::default();
    let points = vec![Vec2::new(2.0, 0.0); 30];
    let margins = vec![1.0; 30];
    let constraints = ConstraintSet {
        obstacles: vec![ObstacleConstraint { obstacle_id: 1, points, margins }],
    };
    let x0 = AgentState::new(0.0, 0.0, 0.0);
    let prob = MpcProblem {
        x0,
        goal: Vec2::new(5.0, 0.0),
        constraints: &constraints,
        limits: ControlLimits { v_max: 1.5, omega_max: 1.5 },
        dt: 0.1,
        config: &config,
    };
    let r = prob.solve(None);
    println!("status {:?} viol {:.6} iters {} rho {} time {:.4}s cost {:.2}",
        r.status, r.max_violation, r.iterations, r.rho_reached, r.solve_time, r.cost);
    for (i, s) in r.states.iter().enumerate().step_by(5) {
        println!("  state {i}: ({:.3}, {:.3}, {:.3})", s.x, s.y, s.heading);
    }
}
