//! Receding-horizon MPC over the differential-drive model with inflated
//! collision margins, warm starting, infeasibility detection, and a braking
//! fallback.
//!
//! The solver is direct single shooting over the flat control vector: a
//! quadratic penalty on violated collision margins, minimized per penalty
//! weight by projected gradient descent with Armijo backtracking. Gradients
//! come from an adjoint sweep through the rollout, so each iteration costs
//! one forward and one backward pass.

use crate::geometry::Vec2;
use crate::sim::{step_agent_unchecked, AgentState, ControlInput, ControlLimits};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid plan config: {0}")]
    InvalidConfig(String),
    #[error("trace is empty")]
    EmptyTrace,
}

/// Planner parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Planning horizon T (number of controls).
    pub t_horizon: usize,
    /// Prediction horizon H <= T over which collision margins apply.
    pub h_horizon: usize,
    /// Position-error weight.
    pub q: f64,
    /// Control-effort weight.
    pub r: f64,
    /// Terminal position-error weight.
    pub qf: f64,
    /// Lipschitz constant of the collision constraint in the prediction
    /// argument; 1 for the Euclidean distance.
    pub lipschitz: f64,
    /// Max admissible collision-margin violation (meters) for feasibility.
    pub tolerance: f64,
    /// Penalty weight schedule for the outer loop.
    pub outer_rhos: Vec<f64>,
    /// Projected-gradient step budget per penalty stage.
    pub inner_iters: usize,
    /// Wall-clock cap per solve, milliseconds; 0 disables the cap. The
    /// iteration schedule is the deterministic budget; a binding wall cap
    /// makes solver output depend on machine load, which breaks bit
    /// determinism across parallelism levels.
    pub wall_clock_ms: u64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            t_horizon: 30,
            h_horizon: 30,
            q: 1.0,
            r: 0.1,
            qf: 10.0,
            lipschitz: 1.0,
            tolerance: 1e-3,
            outer_rhos: vec![10.0, 100.0, 1e3, 1e4, 1e5, 1e6, 1e7],
            inner_iters: 40,
            wall_clock_ms: 0,
            armijo_c: 1e-4,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.h_horizon > self.t_horizon {
            return Err(PlanError::InvalidConfig(format!(
                "prediction horizon {} exceeds planning horizon {}",
                self.h_horizon, self.t_horizon
            )));
        }
        if self.t_horizon == 0 {
            return Err(PlanError::InvalidConfig("planning horizon is zero".into()));
        }
        if self.q < 0.0 || self.r < 0.0 || self.qf < 0.0 {
            return Err(PlanError::InvalidConfig("weights must be non-negative".into()));
        }
        if self.tolerance <= 0.0 {
            return Err(PlanError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.outer_rhos.is_empty() {
            return Err(PlanError::InvalidConfig("penalty schedule is empty".into()));
        }
        Ok(())
    }
}

/// Solver outcome per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    /// Feasible and stationary within tolerance.
    Optimal,
    /// Feasible but the iteration budget ran out first.
    Feasible,
    /// Margin violations remain; the caller must brake.
    InfeasibleFallback,
}

impl PlanStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, PlanStatus::Optimal | PlanStatus::Feasible)
    }
}

/// Solution of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub controls: Vec<ControlInput>,
    pub states: Vec<AgentState>,
    pub status: PlanStatus,
    pub max_violation: f64,
    pub solve_time: f64,
    pub cost: f64,
    pub iterations: usize,
    pub rho_reached: f64,
}

/// Per-obstacle predicted points and inflated margins for h = 1..=H.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleConstraint {
    pub obstacle_id: usize,
    pub points: Vec<Vec2>,
    pub margins: Vec<f64>,
}

impl ObstacleConstraint {
    /// Margins from radii and calibrated radii: r_A + r_k + L * eps[h].
    pub fn new(
        obstacle_id: usize,
        points: Vec<Vec2>,
        agent_radius: f64,
        obstacle_radius: f64,
        lipschitz: f64,
        radii: &[f64],
    ) -> Self {
        let margins = radii
            .iter()
            .map(|eps| agent_radius + obstacle_radius + lipschitz * eps)
            .collect();
        ObstacleConstraint {
            obstacle_id,
            points,
            margins,
        }
    }
}

/// All margins active in one solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub obstacles: Vec<ObstacleConstraint>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }
}

/// Signed slack of one collision constraint: distance minus margin.
/// Non-negative means satisfied.
pub fn collision_margin(agent_pos: Vec2, obstacle_point: Vec2, margin: f64) -> f64 {
    agent_pos.distance(obstacle_point) - margin
}

/// Forward-simulate controls from an initial state; returns T+1 states.
pub fn rollout_dynamics(x0: &AgentState, controls: &[ControlInput], dt: f64) -> Vec<AgentState> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    let mut s = *x0;
    for u in controls {
        s = step_agent_unchecked(&s, *u, dt);
        states.push(s);
    }
    states
}

/// Worst margin violation over all (obstacle, step) pairs of a rolled-out
/// trajectory. Zero when every constraint holds. This is the single source
/// of truth: the solver reports exactly this value.
pub fn audit_violation(states: &[AgentState], constraints: &ConstraintSet, h_horizon: usize) -> f64 {
    let mut worst = 0.0f64;
    for obs in &constraints.obstacles {
        let h_max = h_horizon.min(obs.points.len()).min(states.len() - 1);
        for h in 1..=h_max {
            let slack = collision_margin(states[h].position(), obs.points[h - 1], obs.margins[h - 1]);
            if -slack > worst {
                worst = -slack;
            }
        }
    }
    worst
}

/// One MPC instance: initial state, goal, margins, bounds, and weights.
pub struct MpcProblem<'a> {
    pub x0: AgentState,
    pub goal: Vec2,
    pub constraints: &'a ConstraintSet,
    pub limits: ControlLimits,
    pub dt: f64,
    pub config: &'a PlanConfig,
}

impl<'a> MpcProblem<'a> {
    fn t(&self) -> usize {
        self.config.t_horizon
    }

    fn unpack(&self, flat: &[f64]) -> Vec<ControlInput> {
        flat.chunks_exact(2)
            .map(|c| ControlInput::new(c[0], c[1]))
            .collect()
    }

    fn project(&self, flat: &mut [f64]) {
        for c in flat.chunks_exact_mut(2) {
            c[0] = c[0].clamp(0.0, self.limits.v_max);
            c[1] = c[1].clamp(-self.limits.omega_max, self.limits.omega_max);
        }
    }

    /// Objective J only (no penalty terms).
    pub fn objective(&self, flat: &[f64]) -> f64 {
        let controls = self.unpack(flat);
        let states = rollout_dynamics(&self.x0, &controls, self.dt);
        let mut j = 0.0;
        for tau in 0..self.t() {
            let p = states[tau].position();
            j += self.config.q * (p - self.goal).norm_sq();
            j += self.config.r
                * (controls[tau].linear_velocity.powi(2) + controls[tau].angular_velocity.powi(2));
        }
        j + self.config.qf * (states[self.t()].position() - self.goal).norm_sq()
    }

    /// Merit value J + rho * sum of squared margin violations.
    pub fn merit(&self, flat: &[f64], rho: f64) -> f64 {
        let controls = self.unpack(flat);
        let states = rollout_dynamics(&self.x0, &controls, self.dt);
        let mut m = 0.0;
        for tau in 0..self.t() {
            let p = states[tau].position();
            m += self.config.q * (p - self.goal).norm_sq();
            m += self.config.r
                * (controls[tau].linear_velocity.powi(2) + controls[tau].angular_velocity.powi(2));
        }
        m += self.config.qf * (states[self.t()].position() - self.goal).norm_sq();
        m + rho * self.penalty_sum(&states)
    }

    fn penalty_sum(&self, states: &[AgentState]) -> f64 {
        let mut p = 0.0;
        for obs in &self.constraints.obstacles {
            let h_max = self.config.h_horizon.min(obs.points.len()).min(states.len() - 1);
            for h in 1..=h_max {
                let slack = collision_margin(
                    states[h].position(),
                    obs.points[h - 1],
                    obs.margins[h - 1],
                );
                if slack < 0.0 {
                    p += slack * slack;
                }
            }
        }
        p
    }

    /// Merit and its exact gradient via one adjoint sweep.
    pub fn merit_gradient(&self, flat: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let t = self.t();
        let controls = self.unpack(flat);
        let states = rollout_dynamics(&self.x0, &controls, self.dt);

        // Per-state cost gradients (x, y components; heading enters only
        // through the dynamics).
        let mut state_grad = vec![Vec2::ZERO; t + 1];
        let mut value = 0.0;
        for tau in 0..t {
            let d = states[tau].position() - self.goal;
            value += self.config.q * d.norm_sq();
            value += self.config.r
                * (controls[tau].linear_velocity.powi(2) + controls[tau].angular_velocity.powi(2));
            state_grad[tau] += d * (2.0 * self.config.q);
        }
        let d_final = states[t].position() - self.goal;
        value += self.config.qf * d_final.norm_sq();
        state_grad[t] += d_final * (2.0 * self.config.qf);

        for obs in &self.constraints.obstacles {
            let h_max = self.config.h_horizon.min(obs.points.len()).min(t);
            for h in 1..=h_max {
                let p = states[h].position();
                let diff = p - obs.points[h - 1];
                let dist = diff.norm();
                let slack = dist - obs.margins[h - 1];
                if slack < 0.0 {
                    value += rho * slack * slack;
                    if dist > 1e-12 {
                        state_grad[h] += diff * (2.0 * rho * slack / dist);
                    }
                }
            }
        }

        // Adjoint sweep: lambda accumulates d(merit)/d(state).
        let mut grad = vec![0.0; 2 * t];
        let mut lambda = (state_grad[t].x, state_grad[t].y, 0.0f64);
        for tau in (0..t).rev() {
            let theta = states[tau].heading;
            let v = controls[tau].linear_velocity;
            let (sin_t, cos_t) = theta.sin_cos();
            // d(merit)/du_tau = dR/du + B^T lambda_{tau+1}.
            grad[2 * tau] = 2.0 * self.config.r * v
                + (lambda.0 * cos_t + lambda.1 * sin_t) * self.dt;
            grad[2 * tau + 1] =
                2.0 * self.config.r * controls[tau].angular_velocity + lambda.2 * self.dt;
            // lambda_tau = dg/ds_tau + A^T lambda_{tau+1}.
            let new_theta_term =
                lambda.2 + v * self.dt * (-sin_t * lambda.0 + cos_t * lambda.1);
            lambda = (
                state_grad[tau].x + lambda.0,
                state_grad[tau].y + lambda.1,
                new_theta_term,
            );
        }
        (value, grad)
    }

    /// Candidate initializations: the shifted warm start plus a coarse scan
    /// of constant controls. Descent alone cannot cross between swerve
    /// basins, so the seed picks the basin; the scan is a handful of
    /// rollouts and costs far less than one descent stage.
    fn best_seed(&self, warm_start: Option<&PlanResult>) -> Vec<f64> {
        let t = self.t();
        let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(24);
        if let Some(prev) = warm_start {
            let mut shifted = vec![0.0; 2 * t];
            for tau in 0..t {
                let src = &prev.controls[(tau + 1).min(prev.controls.len() - 1)];
                shifted[2 * tau] = src.linear_velocity;
                shifted[2 * tau + 1] = src.angular_velocity;
            }
            candidates.push(shifted);
        }
        // Tiny turn bias so exactly symmetric blocking geometry (zero
        // lateral gradient) cannot pin a straight seed on a saddle.
        let mut rest = vec![0.0; 2 * t];
        for tau in 0..t {
            rest[2 * tau + 1] = 1e-3;
        }
        candidates.push(rest);
        for vi in [0.33, 0.67, 1.0] {
            for wi in [0.0, 0.33, -0.33, 0.67, -0.67, 1.0, -1.0] {
                let v = vi * self.limits.v_max;
                let w = wi * self.limits.omega_max + 1e-3;
                let mut seed = vec![0.0; 2 * t];
                for tau in 0..t {
                    seed[2 * tau] = v;
                    seed[2 * tau + 1] = w;
                }
                candidates.push(seed);
            }
        }
        let mut best: Option<(bool, f64, f64, Vec<f64>)> = None;
        for mut seed in candidates {
            self.project(&mut seed);
            let states = rollout_dynamics(&self.x0, &self.unpack(&seed), self.dt);
            let violation = audit_violation(&states, self.constraints, self.config.h_horizon);
            let feasible = violation <= self.config.tolerance;
            let cost = self.objective(&seed);
            let key = (!feasible, if feasible { cost } else { violation }, cost);
            let better = match &best {
                None => true,
                Some((b_infeas, b_primary, b_cost, _)) => {
                    (key.0, key.1, key.2) < (*b_infeas, *b_primary, *b_cost)
                }
            };
            if better {
                best = Some((key.0, key.1, key.2, seed));
            }
        }
        best.expect("at least one candidate").3
    }

    /// Run the penalty loop from the best seed among the shifted warm start
    /// (the previous solution shifted one step with the last input repeated)
    /// and a coarse constant-control scan.
    pub fn solve(&self, warm_start: Option<&PlanResult>) -> PlanResult {
        let start = Instant::now();
        let cap = if self.config.wall_clock_ms == 0 {
            Duration::MAX
        } else {
            Duration::from_millis(self.config.wall_clock_ms)
        };
        let t = self.t();

        let mut flat = self.best_seed(warm_start);

        let mut iterations = 0usize;
        let mut rho_reached = self.config.outer_rhos[0];
        let mut converged = false;
        let mut violation;
        loop {
            violation = {
                let states = rollout_dynamics(&self.x0, &self.unpack(&flat), self.dt);
                audit_violation(&states, self.constraints, self.config.h_horizon)
            };
            let mut advanced = false;
            for &rho in &self.config.outer_rhos {
                rho_reached = rho;
                let (stage_converged, iters) = self.descend(&mut flat, rho, start, cap);
                iterations += iters;
                converged = stage_converged;
                let states = rollout_dynamics(&self.x0, &self.unpack(&flat), self.dt);
                violation = audit_violation(&states, self.constraints, self.config.h_horizon);
                advanced = true;
                if (violation <= self.config.tolerance && converged) || start.elapsed() >= cap {
                    break;
                }
            }
            if advanced {
                break;
            }
        }

        let controls = self.unpack(&flat);
        let states = rollout_dynamics(&self.x0, &controls, self.dt);
        let status = if violation <= self.config.tolerance {
            if converged {
                PlanStatus::Optimal
            } else {
                PlanStatus::Feasible
            }
        } else {
            PlanStatus::InfeasibleFallback
        };
        PlanResult {
            cost: self.objective(&flat),
            controls,
            states,
            status,
            max_violation: violation,
            solve_time: start.elapsed().as_secs_f64(),
            iterations,
            rho_reached,
        }
    }

    /// Projected gradient descent with Armijo backtracking on the merit for
    /// one penalty weight. Returns (converged, iterations).
    fn descend(&self, flat: &mut Vec<f64>, rho: f64, start: Instant, cap: Duration) -> (bool, usize) {
        let mut step = 1.0f64;
        let mut iters = 0usize;
        for _ in 0..self.config.inner_iters {
            if start.elapsed() >= cap {
                return (false, iters);
            }
            iters += 1;
            let (value, grad) = self.merit_gradient(flat, rho);

            // Projected-gradient stationarity measure: how far the full
            // gradient step actually moves inside the box.
            let mut probe = flat.clone();
            for (p, g) in probe.iter_mut().zip(grad.iter()) {
                *p -= g;
            }
            self.project(&mut probe);
            let pg_norm = probe
                .iter()
                .zip(flat.iter())
                .map(|(p, u)| (p - u).abs())
                .fold(0.0f64, f64::max);
            let scale = flat.iter().fold(0.0f64, |m, u| m.max(u.abs()));
            if pg_norm <= 1e-7 * (1.0 + scale) {
                return (true, iters);
            }

            // Backtracking line search along the projected arc.
            let mut alpha = step;
            let mut accepted = false;
            while alpha >= 1e-12 {
                let mut trial = flat.clone();
                for (p, g) in trial.iter_mut().zip(grad.iter()) {
                    *p -= alpha * g;
                }
                self.project(&mut trial);
                let predicted: f64 = grad
                    .iter()
                    .zip(flat.iter().zip(trial.iter()))
                    .map(|(g, (u, v))| g * (u - v))
                    .sum();
                let trial_value = self.merit(&trial, rho);
                if trial_value <= value - self.config.armijo_c * predicted {
                    *flat = trial;
                    step = (alpha * 2.0).min(1.0);
                    accepted = true;
                    // Relative decrease below float resolution: converged.
                    if value - trial_value <= 1e-9 * (1.0 + value.abs()) {
                        return (true, iters);
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // No descent step exists at machine precision: stationary.
                return (true, iters);
            }
        }
        (false, iters)
    }
}

/// Immediate stop: the kinematic model carries no momentum, so braking is an
/// all-zero control sequence holding the current pose.
pub fn fallback_brake(x0: &AgentState, config: &PlanConfig, dt: f64) -> PlanResult {
    let controls = vec![ControlInput::default(); config.t_horizon];
    let states = rollout_dynamics(x0, &controls, dt);
    PlanResult {
        controls,
        states,
        status: PlanStatus::InfeasibleFallback,
        max_violation: 0.0,
        solve_time: 0.0,
        cost: 0.0,
        iterations: 0,
        rho_reached: 0.0,
    }
}

/// Realized horizon-wide safety over an executed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyReport {
    /// Steps with a feasible solver status.
    pub feasible_steps: usize,
    /// Of those, steps with no realized collision over the next horizon.
    pub safe_steps: usize,
    pub frequency: f64,
    pub target: f64,
}

/// Frequency, over feasible-status steps, of no realized collision within
/// the following `horizon` world steps, compared against 1 - delta.
pub fn check_empirical_safety(
    feasible: &[bool],
    collided: &[bool],
    horizon: usize,
    delta: f64,
) -> Result<SafetyReport, PlanError> {
    if feasible.is_empty() || feasible.len() != collided.len() {
        return Err(PlanError::EmptyTrace);
    }
    let n = feasible.len();
    let mut feasible_steps = 0usize;
    let mut safe_steps = 0usize;
    for t in 0..n {
        if !feasible[t] {
            continue;
        }
        feasible_steps += 1;
        let end = (t + horizon).min(n - 1);
        if !collided[t + 1..=end].iter().any(|c| *c) {
            safe_steps += 1;
        }
    }
    let frequency = if feasible_steps == 0 {
        1.0
    } else {
        safe_steps as f64 / feasible_steps as f64
    };
    Ok(SafetyReport {
        feasible_steps,
        safe_steps,
        frequency,
        target: 1.0 - delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn limits() -> ControlLimits {
        ControlLimits {
            v_max: 1.5,
            omega_max: 1.5,
        }
    }

    fn problem<'a>(
        x0: AgentState,
        goal: Vec2,
        constraints: &'a ConstraintSet,
        config: &'a PlanConfig,
    ) -> MpcProblem<'a> {
        MpcProblem {
            x0,
            goal,
            constraints,
            limits: limits(),
            dt: 0.1,
            config,
        }
    }

    #[test]
    fn zero_controls_hold_position() {
        let x0 = AgentState::new(1.0, 2.0, 0.3);
        let states = rollout_dynamics(&x0, &vec![ControlInput::default(); 5], 0.1);
        assert_eq!(states.len(), 6);
        assert!(states.iter().all(|s| *s == x0));
    }

    #[test]
    fn straight_line_rollout() {
        let x0 = AgentState::new(0.0, 0.0, 0.0);
        let controls = vec![ControlInput::new(1.0, 0.0); 3];
        let states = rollout_dynamics(&x0, &controls, 0.1);
        let xs: Vec<f64> = states.iter().map(|s| s.x).collect();
        for (i, x) in xs.iter().enumerate() {
            assert!((x - 0.1 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let x0 = AgentState::new(0.5, -0.5, 0.7);
        let controls: Vec<ControlInput> = (0..10)
            .map(|i| ControlInput::new(0.1 * i as f64 % 1.0, 0.05 * i as f64 % 0.3))
            .collect();
        let a = rollout_dynamics(&x0, &controls, 0.1);
        let b = rollout_dynamics(&x0, &controls, 0.1);
        for (sa, sb) in a.iter().zip(b.iter()) {
            assert_eq!(sa.x.to_bits(), sb.x.to_bits());
            assert_eq!(sa.y.to_bits(), sb.y.to_bits());
            assert_eq!(sa.heading.to_bits(), sb.heading.to_bits());
        }
    }

    #[test]
    fn collision_margin_sign_conventions() {
        assert_eq!(collision_margin(Vec2::ZERO, Vec2::new(2.0, 0.0), 1.0), 1.0);
        assert_eq!(collision_margin(Vec2::ZERO, Vec2::new(1.0, 0.0), 1.0), 0.0);
        assert_eq!(collision_margin(Vec2::ZERO, Vec2::new(0.5, 0.0), 1.0), -0.5);
    }

    fn random_constraints(rng: &mut ChaCha8Rng, t: usize, n_obs: usize) -> ConstraintSet {
        let obstacles = (0..n_obs)
            .map(|id| {
                let base = Vec2::new(rng.gen_range(-1.0..3.0), rng.gen_range(-2.0..2.0));
                let drift = Vec2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
                let points: Vec<Vec2> = (1..=t).map(|h| base + drift * h as f64).collect();
                let margins = vec![rng.gen_range(0.4..1.0); t];
                ObstacleConstraint {
                    obstacle_id: id,
                    points,
                    margins,
                }
            })
            .collect();
        ConstraintSet { obstacles }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let config = PlanConfig {
            t_horizon: 12,
            h_horizon: 12,
            ..PlanConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..10 {
            let constraints = random_constraints(&mut rng, 12, 3);
            let x0 = AgentState::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
            );
            let prob = problem(x0, Vec2::new(4.0, 1.0), &constraints, &config);
            let flat: Vec<f64> = (0..24)
                .map(|i| {
                    if i % 2 == 0 {
                        rng.gen_range(0.05..1.4)
                    } else {
                        rng.gen_range(-1.4..1.4)
                    }
                })
                .collect();
            let rho = 100.0;
            let (_, grad) = prob.merit_gradient(&flat, rho);
            let h = 1e-6;
            let mut worst_rel = 0.0f64;
            for i in 0..flat.len() {
                let mut plus = flat.clone();
                plus[i] += h;
                let mut minus = flat.clone();
                minus[i] -= h;
                let fd = (prob.merit(&plus, rho) - prob.merit(&minus, rho)) / (2.0 * h);
                let denom = fd.abs().max(1.0);
                worst_rel = worst_rel.max((grad[i] - fd).abs() / denom);
            }
            assert!(
                worst_rel <= 1e-4,
                "case {case}: gradient mismatch {worst_rel:.3e}"
            );
        }
    }

    #[test]
    fn obstacle_free_solve_reaches_toward_goal() {
        let config = PlanConfig::default();
        let constraints = ConstraintSet::default();
        let x0 = AgentState::new(0.0, 0.0, 0.0);
        let goal = Vec2::new(5.0, 0.0);
        let prob = problem(x0, goal, &constraints, &config);
        let result = prob.solve(None);
        assert_eq!(result.status, PlanStatus::Optimal);
        assert!(result.controls[0].linear_velocity > 0.0);
        let d0 = x0.position().distance(goal);
        let d_end = result.states.last().unwrap().position().distance(goal);
        assert!(d_end < d0, "terminal distance {d_end} not below {d0}");
        assert_eq!(result.max_violation, 0.0);
    }

    #[test]
    fn blocking_obstacle_is_avoided_within_tolerance() {
        let config = PlanConfig::default();
        let points = vec![Vec2::new(2.0, 0.0); 30];
        let margins = vec![1.0; 30];
        let constraints = ConstraintSet {
            obstacles: vec![ObstacleConstraint {
                obstacle_id: 1,
                points,
                margins,
            }],
        };
        let x0 = AgentState::new(0.0, 0.0, 0.0);
        let prob = problem(x0, Vec2::new(5.0, 0.0), &constraints, &config);
        let result = prob.solve(None);
        assert!(result.status.is_feasible(), "status {:?}", result.status);
        // Independent audit over the returned rollout.
        let audited = audit_violation(&result.states, &constraints, config.h_horizon);
        assert_eq!(audited, result.max_violation);
        assert!(audited <= config.tolerance);
    }

    #[test]
    fn already_at_goal_is_a_fixed_point() {
        let config = PlanConfig::default();
        let constraints = ConstraintSet::default();
        let goal = Vec2::new(1.0, 1.0);
        let prob = problem(AgentState::new(1.0, 1.0, 0.2), goal, &constraints, &config);
        let result = prob.solve(None);
        assert!(result.status.is_feasible());
        assert!(result.cost < 1e-4, "cost {}", result.cost);
        for u in &result.controls {
            assert!(u.linear_velocity.abs() < 1e-2);
        }
    }

    #[test]
    fn controls_always_within_bounds() {
        let config = PlanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let constraints = random_constraints(&mut rng, 30, 6);
            let prob = problem(
                AgentState::new(0.0, 0.0, rng.gen_range(-3.0..3.0)),
                Vec2::new(rng.gen_range(2.0..6.0), rng.gen_range(-3.0..3.0)),
                &constraints,
                &config,
            );
            let result = prob.solve(None);
            assert_eq!(result.controls.len(), config.t_horizon);
            assert_eq!(result.states.len(), config.t_horizon + 1);
            for u in &result.controls {
                assert!(limits().contains(*u), "control {u:?} escaped bounds");
            }
        }
    }

    #[test]
    fn warm_start_never_worse_than_its_seed() {
        let config = PlanConfig::default();
        let points = vec![Vec2::new(2.5, 0.4); 30];
        let margins = vec![0.8; 30];
        let constraints = ConstraintSet {
            obstacles: vec![ObstacleConstraint {
                obstacle_id: 1,
                points,
                margins,
            }],
        };
        let x0 = AgentState::new(0.0, 0.0, 0.0);
        let goal = Vec2::new(6.0, 0.0);
        let prob = problem(x0, goal, &constraints, &config);
        let first = prob.solve(None);
        assert!(first.status.is_feasible());

        let x1 = first.states[1];
        let prob2 = problem(x1, goal, &constraints, &config);
        // Merit of the shifted warm start itself.
        let mut shifted = Vec::with_capacity(60);
        for tau in 0..30usize {
            let src = &first.controls[(tau + 1).min(29)];
            shifted.push(src.linear_velocity);
            shifted.push(src.angular_velocity);
        }
        let warm_merit = prob2.merit(&shifted, *config.outer_rhos.last().unwrap());
        let second = prob2.solve(Some(&first));
        let final_merit = prob2.merit(
            &second
                .controls
                .iter()
                .flat_map(|u| [u.linear_velocity, u.angular_velocity])
                .collect::<Vec<f64>>(),
            *config.outer_rhos.last().unwrap(),
        );
        assert!(
            final_merit <= warm_merit + 1e-9,
            "solver worsened its warm start: {final_merit} > {warm_merit}"
        );
    }

    #[test]
    fn brake_is_all_zero_and_holds_pose() {
        let config = PlanConfig::default();
        let x0 = AgentState::new(3.0, 4.0, 1.0);
        let result = fallback_brake(&x0, &config, 0.1);
        assert_eq!(result.status, PlanStatus::InfeasibleFallback);
        assert!(result
            .controls
            .iter()
            .all(|u| u.linear_velocity == 0.0 && u.angular_velocity == 0.0));
        // Velocities never increase along the brake sequence.
        let vs: Vec<f64> = result.controls.iter().map(|u| u.linear_velocity).collect();
        assert!(vs.windows(2).all(|w| w[1] <= w[0]));
        assert!(result.states.iter().all(|s| *s == x0));
    }

    #[test]
    fn safety_check_on_collision_free_run() {
        let feasible = vec![true; 50];
        let collided = vec![false; 50];
        let report = check_empirical_safety(&feasible, &collided, 30, 0.05).unwrap();
        assert_eq!(report.frequency, 1.0);
        assert_eq!(report.feasible_steps, 50);
    }

    #[test]
    fn safety_check_counts_horizon_collisions() {
        // Collision at step 10: feasible steps 0..9 see it inside their
        // horizon of 5 only from step 5 on.
        let n = 12;
        let feasible = vec![true; n];
        let mut collided = vec![false; n];
        collided[10] = true;
        let report = check_empirical_safety(&feasible, &collided, 5, 0.05).unwrap();
        // Unsafe steps: t in {5..=9} (collision within (t, t+5]); also t=10
        // itself looks forward only, so it is safe; t=11 safe.
        assert_eq!(report.feasible_steps, 12);
        assert_eq!(report.safe_steps, 12 - 5);
    }

    #[test]
    fn safety_check_rejects_empty_trace() {
        assert!(check_empirical_safety(&[], &[], 10, 0.05).is_err());
    }

    #[test]
    fn config_validation() {
        let mut bad = PlanConfig::default();
        bad.h_horizon = 40;
        assert!(bad.validate().is_err());
        assert!(PlanConfig::default().validate().is_ok());
    }
}
