//! The closed planning loop for one trial: sense local obstacles, score and
//! route each one, predict the routed subset, solve the margin-constrained
//! MPC, apply the first input, and advance the world. Terminates at the
//! goal, on collision, on persistent infeasibility, or at the step cap.

use super::scenario::{generate_scenario, ScenarioSpec};
use super::{compute_e, Architecture, HarnessError};
use crate::config::Config;
use crate::conformal::EpsilonTable;
use crate::geometry::Vec2;
use crate::planner::{
    check_empirical_safety, fallback_brake, ConstraintSet, MpcProblem, ObstacleConstraint,
    PlanResult, PlanStatus,
};
use crate::predictors::{PredictorLevel, PredictorSet};
use crate::risk::{
    compute_pcri, proximity_risk, route, ApproachProfile, HysteresisState, RouterConfig,
};
use crate::sim::{
    at_goal, check_collision, sense, step_agent, step_obstacles, SensedObstacle,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

/// Accumulated per-obstacle-count timing, for the computation-time curves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MtAccum {
    pub steps: u64,
    pub pred_time_s: f64,
    pub mpc_time_s: f64,
}

/// Everything measured over one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub architecture: Architecture,
    pub seed: u64,
    pub n_obstacles: usize,
    pub success: bool,
    pub collision: bool,
    pub deadlock: bool,
    pub timeout: bool,
    pub travel_steps: usize,
    pub calls_level0: u64,
    pub calls_level1: u64,
    pub calls_level2: u64,
    pub fallbacks: u64,
    pub clamped_lookups: u64,
    pub mean_nt: f64,
    pub mean_mt: f64,
    pub mean_m1: f64,
    pub mean_m2: f64,
    pub mean_e: f64,
    pub e_defined_steps: usize,
    pub feasible_steps: usize,
    pub safe_feasible_steps: usize,
    pub infeasible_steps: usize,
    pub pred_time_s: f64,
    pub mpc_time_s: f64,
    pub wall_time_s: f64,
    pub per_mt: BTreeMap<usize, MtAccum>,
    pub e_series: Vec<Option<f64>>,
}

/// One line of the trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepTraceRecord {
    pub t: usize,
    pub n_t: usize,
    pub m_t: usize,
    pub m1: usize,
    pub m2: usize,
    pub obstacles: Vec<ObstacleTraceRecord>,
    pub status: String,
    pub violation: f64,
    pub iterations: usize,
    pub rho: f64,
    pub pred_time_s: f64,
    pub mpc_time_s: f64,
    pub e: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleTraceRecord {
    pub id: usize,
    pub psi: f64,
    pub routed: u8,
    pub executed: u8,
    pub fallback: bool,
    pub constrained: bool,
}

/// Shared immutable inputs for running trials.
pub struct RunContext<'a> {
    pub config: &'a Config,
    pub table: &'a EpsilonTable,
    pub predictors: &'a PredictorSet,
}

struct ObservedTrack {
    last_step: usize,
    positions: Vec<Vec2>,
}

struct PrevPrediction {
    base_step: usize,
    anchor: Vec2,
    points: Vec<Vec2>,
}

/// Run one trial of `architecture` on the scenario pinned by `spec`,
/// optionally streaming one trace record per step.
pub fn run_scenario(
    spec: &ScenarioSpec,
    architecture: Architecture,
    ctx: &RunContext,
    mut trace_out: Option<&mut dyn Write>,
) -> Result<TrialMetrics, HarnessError> {
    let wall_start = Instant::now();
    let scenario = generate_scenario(spec)?;
    let world = scenario.world;
    let mut tracks = scenario.tracks;
    let mut agent = scenario.agent_start;
    let mut world_rng = ChaCha8Rng::seed_from_u64(crate::predictors::derive_seed(spec.seed, 0xB2));

    let plan_config = ctx.config.planner.plan_config();
    let horizon = plan_config.h_horizon;
    let window = ctx.predictors.window();
    let router: RouterConfig = match architecture {
        Architecture::ProxA => ctx.config.router.prox_a_router(),
        Architecture::ProxB => ctx.config.router.prox_b_router(),
        _ => ctx.config.router.pcri_router(),
    };
    let deadlock_limit = ctx.config.planner.deadlock_steps;

    let mut observed: BTreeMap<usize, ObservedTrack> = BTreeMap::new();
    let mut hysteresis: BTreeMap<usize, HysteresisState> = BTreeMap::new();
    let mut prev_predictions: BTreeMap<usize, PrevPrediction> = BTreeMap::new();
    let mut prev_plan: Vec<Vec2> = vec![agent.position(); plan_config.t_horizon + 1];
    let mut prev_result: Option<PlanResult> = None;

    let mut metrics = TrialMetrics {
        architecture,
        seed: spec.seed,
        n_obstacles: spec.n_obstacles,
        success: false,
        collision: false,
        deadlock: false,
        timeout: false,
        travel_steps: 0,
        calls_level0: 0,
        calls_level1: 0,
        calls_level2: 0,
        fallbacks: 0,
        clamped_lookups: 0,
        mean_nt: 0.0,
        mean_mt: 0.0,
        mean_m1: 0.0,
        mean_m2: 0.0,
        mean_e: 0.0,
        e_defined_steps: 0,
        feasible_steps: 0,
        safe_feasible_steps: 0,
        infeasible_steps: 0,
        pred_time_s: 0.0,
        mpc_time_s: 0.0,
        wall_time_s: 0.0,
        per_mt: BTreeMap::new(),
        e_series: Vec::new(),
    };

    let mut feasible_flags: Vec<bool> = Vec::new();
    // collision_flags[i] is the realized collision state at world step i.
    let mut collision_flags: Vec<bool> = vec![check_collision(&agent, &tracks, world.agent_radius)];
    let mut consecutive_fallbacks = 0usize;
    let mut nt_sum = 0u64;
    let mut mt_sum = 0u64;
    let mut m1_sum = 0u64;
    let mut m2_sum = 0u64;
    let mut e_sum = 0.0f64;

    let mut steps_taken = 0usize;
    for t in 0..world.max_steps {
        if at_goal(&agent, &world) {
            metrics.success = true;
            break;
        }
        steps_taken = t + 1;

        // --- Sense and update observed histories (contiguity enforced). ---
        let sensed: Vec<SensedObstacle> = sense(&agent, &tracks, world.sensing_radius);
        for s in &sensed {
            let entry = observed.entry(s.id).or_insert(ObservedTrack {
                last_step: t,
                positions: Vec::new(),
            });
            if !entry.positions.is_empty() && entry.last_step + 1 != t {
                entry.positions.clear();
            }
            entry.positions.push(s.position);
            entry.last_step = t;
            let cap = window + 2;
            if entry.positions.len() > cap {
                let excess = entry.positions.len() - cap;
                entry.positions.drain(0..excess);
            }
        }

        // --- Score and route every sensed obstacle. ---
        let mut routed: Vec<(SensedObstacle, PredictorLevel, f64)> =
            Vec::with_capacity(sensed.len());
        for s in &sensed {
            let psi = if architecture.uses_proximity() {
                proximity_risk(s.position.distance(agent.position()), &router)
            } else {
                let (agent_seq, obstacle_seq) =
                    risk_sequences(s, t, &prev_predictions, &prev_plan, horizon);
                let profile = ApproachProfile::compute(&agent_seq, &obstacle_seq, world.dt)
                    .expect("sequences are built with equal lengths");
                compute_pcri(&profile, &router).psi
            };
            let state = hysteresis.entry(s.id).or_default();
            let mut level = route(psi, state, &router);
            if level != PredictorLevel::Simple {
                match architecture {
                    Architecture::Sp1 => level = PredictorLevel::Accurate,
                    Architecture::Sp2 => level = PredictorLevel::Fast,
                    _ => {}
                }
            }
            routed.push((*s, level, psi));
        }
        let m_t = routed
            .iter()
            .filter(|(_, level, _)| *level != PredictorLevel::Simple)
            .count();

        // --- Predict: routed subset is timed, bookkeeping subset is not. ---
        let mut constraints = ConstraintSet::default();
        let mut m1 = 0usize;
        let mut m2 = 0usize;
        let mut obstacle_records: Vec<ObstacleTraceRecord> = Vec::with_capacity(routed.len());
        let pred_start = Instant::now();
        for (s, level, psi) in &routed {
            if *level == PredictorLevel::Simple {
                continue;
            }
            let history = &observed[&s.id].positions;
            let prediction = ctx.predictors.predict(*level, history, horizon);
            // A fallback to constant velocity keeps its calibrated margin; a
            // single-point history degrades to an unconstrained level-0
            // prediction. Call counts track non-fallback model executions.
            let constrained = prediction.executed != PredictorLevel::Simple;
            if prediction.fallback {
                metrics.fallbacks += 1;
            } else {
                match prediction.executed {
                    PredictorLevel::Accurate => metrics.calls_level1 += 1,
                    PredictorLevel::Fast => metrics.calls_level2 += 1,
                    PredictorLevel::Simple => metrics.calls_level0 += 1,
                }
            }
            match prediction.executed {
                PredictorLevel::Accurate => m1 += 1,
                PredictorLevel::Fast => m2 += 1,
                PredictorLevel::Simple => {}
            }
            if constrained {
                let mut radii = Vec::with_capacity(horizon);
                for h in 1..=horizon {
                    let lookup = ctx.table.lookup(prediction.executed, m_t, h)?;
                    if lookup.clamped {
                        metrics.clamped_lookups += 1;
                    }
                    radii.push(lookup.epsilon);
                }
                constraints.obstacles.push(ObstacleConstraint::new(
                    s.id,
                    prediction.points.clone(),
                    world.agent_radius,
                    s.radius,
                    plan_config.lipschitz,
                    &radii,
                ));
            }
            obstacle_records.push(ObstacleTraceRecord {
                id: s.id,
                psi: *psi,
                routed: level.index(),
                executed: prediction.executed.index(),
                fallback: prediction.fallback,
                constrained,
            });
            prev_predictions.insert(
                s.id,
                PrevPrediction {
                    base_step: t,
                    anchor: s.position,
                    points: prediction.points,
                },
            );
        }
        let pred_elapsed = pred_start.elapsed().as_secs_f64();

        // Level-0 obstacles still get a bookkeeping prediction so risk stays
        // well-defined next step; it never becomes a constraint.
        for (s, level, psi) in &routed {
            if *level != PredictorLevel::Simple {
                continue;
            }
            let history = &observed[&s.id].positions;
            let prediction = ctx
                .predictors
                .predict(PredictorLevel::Simple, history, horizon);
            metrics.calls_level0 += 1;
            obstacle_records.push(ObstacleTraceRecord {
                id: s.id,
                psi: *psi,
                routed: level.index(),
                executed: prediction.executed.index(),
                fallback: prediction.fallback,
                constrained: false,
            });
            prev_predictions.insert(
                s.id,
                PrevPrediction {
                    base_step: t,
                    anchor: s.position,
                    points: prediction.points,
                },
            );
        }

        // --- Accuracy metric for this step's allocation. ---
        let e_value = if m1 + m2 > 0 {
            let e1 = ctx.table.mean_radius(PredictorLevel::Accurate, m_t.max(1))?;
            let e2 = ctx.table.mean_radius(PredictorLevel::Fast, m_t.max(1))?;
            Some(compute_e(m1, m2, e1, e2)?)
        } else {
            None
        };

        // --- Solve the margin-constrained MPC. ---
        let mpc_start = Instant::now();
        let problem = MpcProblem {
            x0: agent,
            goal: world.goal,
            constraints: &constraints,
            limits: world.limits,
            dt: world.dt,
            config: &plan_config,
        };
        let solved = problem.solve(prev_result.as_ref());
        let mpc_elapsed = mpc_start.elapsed().as_secs_f64();

        let infeasible = solved.status == PlanStatus::InfeasibleFallback;
        let result = if infeasible {
            consecutive_fallbacks += 1;
            metrics.infeasible_steps += 1;
            let mut brake = fallback_brake(&agent, &plan_config, world.dt);
            brake.max_violation = solved.max_violation;
            brake.iterations = solved.iterations;
            brake.rho_reached = solved.rho_reached;
            brake
        } else {
            consecutive_fallbacks = 0;
            metrics.feasible_steps += 1;
            solved
        };
        feasible_flags.push(result.status.is_feasible());

        // --- Bookkeeping. ---
        nt_sum += sensed.len() as u64;
        mt_sum += m_t as u64;
        m1_sum += m1 as u64;
        m2_sum += m2 as u64;
        if let Some(e) = e_value {
            e_sum += e;
            metrics.e_defined_steps += 1;
        }
        metrics.e_series.push(e_value);
        metrics.pred_time_s += pred_elapsed;
        metrics.mpc_time_s += mpc_elapsed;
        let accum = metrics.per_mt.entry(m_t).or_default();
        accum.steps += 1;
        accum.pred_time_s += pred_elapsed;
        accum.mpc_time_s += mpc_elapsed;

        if let Some(out) = trace_out.as_deref_mut() {
            let record = StepTraceRecord {
                t,
                n_t: sensed.len(),
                m_t,
                m1,
                m2,
                obstacles: obstacle_records,
                status: format!("{:?}", result.status),
                violation: result.max_violation,
                iterations: result.iterations,
                rho: result.rho_reached,
                pred_time_s: pred_elapsed,
                mpc_time_s: mpc_elapsed,
                e: e_value,
            };
            let line = serde_json::to_string(&record).expect("trace record serializes");
            writeln!(out, "{line}").map_err(|source| HarnessError::Io {
                path: "<trace>".into(),
                source,
            })?;
        }

        // --- Act and advance the world. ---
        let u = result.controls[0];
        agent = step_agent(&agent, u, &world.limits, world.dt)
            .expect("solver controls are projected into bounds");
        step_obstacles(&mut tracks, &world.bounds, world.dt, &mut world_rng)
            .expect("tracks have histories");
        let collided_now = check_collision(&agent, &tracks, world.agent_radius);
        collision_flags.push(collided_now);
        if collided_now {
            metrics.collision = true;
            break;
        }
        if consecutive_fallbacks > deadlock_limit {
            metrics.deadlock = true;
            break;
        }

        // The risk and warm-start reference keeps the last feasible intent.
        // While braking the agent holds its pose, so shifting the previous
        // reference controls and re-rolling them from the unchanged pose
        // stays time-aligned; scoring risk against the brake rollout instead
        // would hide every closing conflict and flap the constraint set.
        let reference = if infeasible {
            match prev_result.take() {
                Some(prev) => {
                    let mut controls = prev.controls;
                    if !controls.is_empty() {
                        controls.rotate_left(1);
                        let last = *controls.last().expect("non-empty controls");
                        *controls.last_mut().expect("non-empty controls") = last;
                    }
                    let states =
                        crate::planner::rollout_dynamics(&result.states[0], &controls, world.dt);
                    PlanResult {
                        controls,
                        states,
                        ..prev
                    }
                }
                None => result,
            }
        } else {
            result
        };
        prev_plan = reference.states.iter().map(|s| s.position()).collect();
        prev_result = Some(reference);
    }

    if !metrics.success && at_goal(&agent, &world) && !metrics.collision && !metrics.deadlock {
        metrics.success = true;
    }
    metrics.travel_steps = steps_taken;
    metrics.timeout = !metrics.success && !metrics.collision && !metrics.deadlock;
    let n = steps_taken.max(1) as f64;
    metrics.mean_nt = nt_sum as f64 / n;
    metrics.mean_mt = mt_sum as f64 / n;
    metrics.mean_m1 = m1_sum as f64 / n;
    metrics.mean_m2 = m2_sum as f64 / n;
    metrics.mean_e = if metrics.e_defined_steps > 0 {
        e_sum / metrics.e_defined_steps as f64
    } else {
        0.0
    };

    // Realized horizon-wide safety over feasible-status steps.
    if !feasible_flags.is_empty() {
        feasible_flags.push(false); // terminal state plans nothing
        let report = check_empirical_safety(
            &feasible_flags,
            &collision_flags,
            plan_config.t_horizon,
            ctx.config.conformal.delta,
        )
        .expect("non-empty flags");
        metrics.safe_feasible_steps = report.safe_steps;
        debug_assert_eq!(report.feasible_steps, metrics.feasible_steps);
    }

    metrics.wall_time_s = wall_start.elapsed().as_secs_f64();
    debug_assert!(
        !metrics.success || (!metrics.collision && !metrics.deadlock),
        "success excludes collision and deadlock"
    );
    Ok(metrics)
}

/// Aligned (agent, obstacle) position sequences of length H+1 for scoring.
/// When a prediction from the previous step exists both sequences anchor at
/// step t-1 (previous plan, previous prediction); a newly sensed obstacle
/// anchors at t with a held agent plan tail.
fn risk_sequences(
    s: &SensedObstacle,
    t: usize,
    prev_predictions: &BTreeMap<usize, PrevPrediction>,
    prev_plan: &[Vec2],
    horizon: usize,
) -> (Vec<Vec2>, Vec<Vec2>) {
    let fresh = prev_predictions
        .get(&s.id)
        .filter(|prev| t > 0 && prev.base_step + 1 == t);
    if let Some(prev) = fresh {
        let mut obstacle_seq = Vec::with_capacity(horizon + 1);
        obstacle_seq.push(prev.anchor);
        obstacle_seq.extend(prev.points.iter().take(horizon).copied());
        while obstacle_seq.len() < horizon + 1 {
            obstacle_seq.push(*obstacle_seq.last().expect("non-empty"));
        }
        let mut agent_seq: Vec<Vec2> = prev_plan.iter().take(horizon + 1).copied().collect();
        while agent_seq.len() < horizon + 1 {
            agent_seq.push(*agent_seq.last().expect("non-empty"));
        }
        (agent_seq, obstacle_seq)
    } else {
        // First sighting: hold the obstacle at its measured position and
        // shift the plan so both sequences anchor at the current step.
        let obstacle_seq = vec![s.position; horizon + 1];
        let mut agent_seq: Vec<Vec2> = prev_plan.iter().skip(1).take(horizon + 1).copied().collect();
        while agent_seq.len() < horizon + 1 {
            agent_seq.push(*agent_seq.last().expect("non-empty"));
        }
        (agent_seq, obstacle_seq)
    }
}
