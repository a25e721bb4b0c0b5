//! Acceptance suite: every exit criterion runs in order and prints one
//! pass/fail line; the test fails at the end if any criterion failed.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to watch the
//! per-criterion lines stream.

use hyprap::config::Config;
use hyprap::conformal::{
    bonferroni_bound, empirical_coverage, independent_bound, nonconformity_score,
    partial_coverage_bound,
};
use hyprap::geometry::Vec2;
use hyprap::harness::{
    build_artifacts, build_holdout, choose_sweep_point, r_squared, run_batch, strip_timing_columns,
    sweep_prox_grid, tradeoff_study, write_trials_csv, Architecture, RunContext, ScenarioSpec,
    SweepTarget, TrialRow,
};
use hyprap::planner::{
    audit_violation, rollout_dynamics, ConstraintSet, MpcProblem, ObstacleConstraint,
};
use hyprap::predictors::{
    derive_seed, generate_calibration_set, CalibrationParams, PredictorLevel,
};
use hyprap::sim::{AgentState, ControlLimits, PatternSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Gate {
    results: Vec<(String, bool, String)>,
}

impl Gate {
    fn new() -> Gate {
        Gate {
            results: Vec::new(),
        }
    }

    fn record(&mut self, name: &str, passed: bool, detail: String) {
        println!(
            "[{}] criterion {name}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
        self.results.push((name.to_string(), passed, detail));
    }

    fn finish(self) {
        let failed: Vec<String> = self
            .results
            .iter()
            .filter(|(_, ok, _)| !ok)
            .map(|(name, _, detail)| format!("{name}: {detail}"))
            .collect();
        assert!(
            failed.is_empty(),
            "{} of {} acceptance criteria failed:\n{}",
            failed.len(),
            self.results.len(),
            failed.join("\n")
        );
    }
}

fn pct(rows: &[&TrialRow], pred: impl Fn(&TrialRow) -> bool) -> f64 {
    100.0 * rows.iter().filter(|r| pred(r)).count() as f64 / rows.len().max(1) as f64
}

fn travel_mean(rows: &[&TrialRow]) -> f64 {
    let wins: Vec<f64> = rows
        .iter()
        .filter(|r| r.success)
        .map(|r| r.travel_steps as f64)
        .collect();
    wins.iter().sum::<f64>() / wins.len().max(1) as f64
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    let config = Config::default();
    let parallelism = 8;

    let t_artifacts = Instant::now();
    let artifacts = build_artifacts(&config, 42).expect("artifact build");
    println!(
        "fixtures: library {} segments, {} calibration examples per level, built in {:.1}s",
        artifacts.predictors.library.len(),
        artifacts.calibration.len_per_level(),
        t_artifacts.elapsed().as_secs_f64()
    );
    let ctx = RunContext {
        config: &config,
        table: &artifacts.table,
        predictors: &artifacts.predictors,
    };

    // ----- 1. Marginal conformal coverage on a held-out set ---------------
    {
        let start = Instant::now();
        let holdout = build_holdout(&config, &artifacts, 42);
        let delta_bar = config.conformal.delta / (8.0 * config.planner.h_horizon as f64);
        let target = 1.0 - delta_bar - 0.02;
        let mut worst = f64::INFINITY;
        let mut n = 0;
        for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
            let report = empirical_coverage(&holdout, &artifacts.table, level, 8, false)
                .expect("coverage report");
            n = report.n_examples;
            worst = worst.min(report.per_h.iter().copied().fold(f64::INFINITY, f64::min));
        }
        gate.record(
            "1-coverage",
            worst >= target && n >= 2000 && start.elapsed().as_secs() <= 120,
            format!(
                "min per-(level,h) coverage {worst:.4} vs target {target:.4} on {n} examples in {:.0}s",
                start.elapsed().as_secs_f64()
            ),
        );
    }

    // ----- 2. Bound calculators vs exact enumeration ----------------------
    {
        let enumerate = |m1: usize, m2: usize, alpha: f64, db: f64| -> (f64, f64) {
            // Joint probability over independent per-obstacle coverage events
            // with P(covered) exactly 1 - db: full coverage of the first
            // group and at least ceil(alpha*m2) covered in the second.
            let total = m1 + m2;
            let p = 1.0 - db;
            let mut partial = 0.0;
            let mut all = 0.0;
            for mask in 0u32..(1u32 << total) {
                let mut weight = 1.0;
                let mut first_ok = true;
                let mut hits = 0usize;
                for bit in 0..total {
                    let hit = mask >> bit & 1 == 1;
                    weight *= if hit { p } else { db };
                    if bit < m1 {
                        first_ok &= hit;
                    } else if hit {
                        hits += 1;
                    }
                }
                if first_ok && (hits as f64) >= (alpha * m2 as f64).ceil() {
                    partial += weight;
                }
                if first_ok && hits == m2 {
                    all += weight;
                }
            }
            (partial, all)
        };
        let mut worst = 0.0f64;
        for m1 in 0..=10usize {
            for m2 in 0..=(10 - m1) {
                for &db in &[0.01, 0.05, 0.1] {
                    for &alpha in &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
                        let (partial, all) = enumerate(m1, m2, alpha, db);
                        let formula = partial_coverage_bound(m1, m2, alpha, db).value;
                        worst = worst.max((formula - partial).abs());
                        let ind = independent_bound(m1 + m2, db).value;
                        worst = worst.max((ind - all).abs());
                        // Union bound equals one minus the summed failure mass.
                        let bon = bonferroni_bound(m1 + m2, db).value;
                        worst = worst.max((bon - (1.0 - (m1 + m2) as f64 * db)).abs());
                    }
                }
            }
        }
        let worked = partial_coverage_bound(2, 3, 2.0 / 3.0, 0.1).value;
        let worked_ok = (worked - 0.78732).abs() <= 1e-12;
        gate.record(
            "2-bound-calculators",
            worst <= 1e-12 && worked_ok,
            format!("max |formula - enumeration| = {worst:.2e}; worked value {worked:.10}"),
        );
    }

    // ----- 3. Joint coverage over independent obstacle streams ------------
    {
        let start = Instant::now();
        let trials = 5000usize;
        let m = 5usize;
        let horizon = config.planner.h_horizon;
        let params = CalibrationParams {
            sampler: PatternSampler::new(config.batch.pattern_weights),
            bounds: config.world.bounds(),
            dt: config.world.dt,
            horizon,
            n_streams: trials * m,
            samples_per_stream: 1,
            stream_steps: 55,
            predictors: &artifacts.predictors,
        };
        let holdout = generate_calibration_set(derive_seed(42, 0xC3), &params);
        // Mixed allocation per trial: 2 accurate + 3 fast streams, radii from
        // the M = 5 table column.
        let delta_bar = config.conformal.delta / (m as f64 * horizon as f64);
        let radii: Vec<(PredictorLevel, Vec<f64>)> = [PredictorLevel::Accurate, PredictorLevel::Fast]
            .into_iter()
            .map(|level| {
                let r: Vec<f64> = (1..=horizon)
                    .map(|h| artifacts.table.lookup(level, m, h).unwrap().epsilon)
                    .collect();
                (level, r)
            })
            .collect();
        let covered = |level: PredictorLevel, idx: usize, h: usize| -> bool {
            let examples = holdout.examples(level);
            let ex = &examples[idx];
            let eps = &radii.iter().find(|(l, _)| *l == level).unwrap().1;
            nonconformity_score(ex.truth[h - 1], ex.predicted[h - 1]) <= eps[h - 1]
        };
        let n_groups = holdout.accurate.len().min(holdout.fast.len()) / m;
        let mut per_h_joint = vec![0usize; horizon];
        for g in 0..n_groups {
            for h in 1..=horizon {
                let ok = (0..2).all(|i| covered(PredictorLevel::Accurate, g * m + i, h))
                    && (2..5).all(|i| covered(PredictorLevel::Fast, g * m + i, h));
                if ok {
                    per_h_joint[h - 1] += 1;
                }
            }
        }
        let min_joint = per_h_joint
            .iter()
            .map(|c| *c as f64 / n_groups as f64)
            .fold(f64::INFINITY, f64::min);
        let bonferroni_target = bonferroni_bound(m, delta_bar).value - 0.02;
        let independent_target = independent_bound(m, delta_bar).value - 0.02;
        gate.record(
            "3-joint-coverage",
            n_groups >= 5000
                && min_joint >= bonferroni_target
                && min_joint >= independent_target
                && start.elapsed().as_secs() <= 120,
            format!(
                "min per-h joint coverage {min_joint:.4} over {n_groups} trials vs bounds {bonferroni_target:.4}/{independent_target:.4} in {:.0}s",
                start.elapsed().as_secs_f64()
            ),
        );
    }

    // ----- 4. Calibrated accuracy asymmetry -------------------------------
    {
        let e1 = artifacts
            .table
            .mean_radius(PredictorLevel::Accurate, 8)
            .unwrap();
        let e2 = artifacts.table.mean_radius(PredictorLevel::Fast, 8).unwrap();
        gate.record(
            "4-accuracy-asymmetry",
            e1 < e2 && e2 / e1 >= 2.0,
            format!("mean radii at M=8: accurate {e1:.4} m, fast {e2:.4} m, ratio {:.2}", e2 / e1),
        );
    }

    // ----- 5. Efficiency ordering and linear cost model --------------------
    {
        let start = Instant::now();
        // Stretch level-1 calls for a clean timing signal; the linear model
        // uses per-call costs measured under the same stretch.
        let mut timing_predictors = artifacts.predictors.clone();
        timing_predictors.busywait_multiplier = 4.0;
        let timing_ctx = RunContext {
            config: &config,
            table: &artifacts.table,
            predictors: &timing_predictors,
        };
        let allocations: Vec<(usize, usize)> = (0..=8).map(|m1| (m1, 8 - m1)).collect();
        let curve = tradeoff_study(&timing_ctx, &allocations, 12, 30).expect("tradeoff study");
        let pred: Vec<f64> = curve.points.iter().map(|p| p.pred_time_s).collect();
        let theory: Vec<f64> = curve.points.iter().map(|p| p.theory_time_s).collect();
        let monotone = pred.windows(2).all(|w| w[1] >= w[0]);
        let fit = r_squared(&theory, &pred);
        let total_first = curve.points.first().unwrap().total_time_s;
        let total_last = curve.points.last().unwrap().total_time_s;
        let e_monotone = curve
            .points
            .windows(2)
            .all(|w| w[1].e_value >= w[0].e_value);
        gate.record(
            "5-efficiency-ordering",
            monotone && fit >= 0.9 && total_last > total_first && e_monotone
                && start.elapsed().as_secs() <= 600,
            format!(
                "prediction time monotone {monotone}, R^2 {fit:.3}, total({},0)={:.4}s > total(0,{})={:.4}s in {:.0}s",
                 8, total_last, 8, total_first, start.elapsed().as_secs_f64()
            ),
        );
    }

    // ----- 6 + 7 + 8 + 10: navigation batches ------------------------------
    let seeds: Vec<u64> = (0..200).map(|i| config.batch.base_seed + i).collect();
    let specs: Vec<ScenarioSpec> = seeds
        .iter()
        .map(|s| ScenarioSpec::from_config(&config, *s))
        .collect();

    let start_nav = Instant::now();
    let nav = run_batch(
        &specs,
        &[Architecture::Sp1, Architecture::Hyprap, Architecture::Sp2],
        &ctx,
        parallelism,
        false,
    );
    let rows_of = |arch: &str| -> Vec<&TrialRow> {
        nav.rows
            .iter()
            .filter(|r| r.arch == arch && !r.failed())
            .collect()
    };
    let sp1 = rows_of("sp1");
    let hy = rows_of("hyprap");
    let sp2 = rows_of("sp2");

    {
        let s1 = pct(&sp1, |r| r.success);
        let sh = pct(&hy, |r| r.success);
        let s2 = pct(&sp2, |r| r.success);
        let t1 = travel_mean(&sp1);
        let th = travel_mean(&hy);
        let t2 = travel_mean(&sp2);
        let ok = s1 >= sh - 2.0 && sh >= s2 + 2.0 && t1 <= th && th <= t2 && t2 >= 1.1 * th;
        gate.record(
            "6-navigation-orderings",
            ok && start_nav.elapsed().as_secs() <= 1800,
            format!(
                "success sp1/hyprap/sp2 = {s1:.1}/{sh:.1}/{s2:.1}%, travel {t1:.1}/{th:.1}/{t2:.1} steps (sp2/hyprap = {:.3}) in {:.0}s",
                t2 / th,
                start_nav.elapsed().as_secs_f64()
            ),
        );
    }

    // ----- 8. Realized horizon-wide safety ---------------------------------
    {
        let feasible: u64 = hy.iter().map(|r| r.feasible_steps as u64).sum();
        let safe: u64 = hy.iter().map(|r| r.safe_feasible_steps as u64).sum();
        let freq = safe as f64 / feasible.max(1) as f64;
        let target = 1.0 - config.conformal.delta - 0.02;
        gate.record(
            "8-empirical-safety",
            freq >= target,
            format!("horizon-wide non-collision over feasible steps {freq:.4} vs target {target:.4} ({safe}/{feasible})"),
        );
    }

    // ----- 7. Risk-index routing vs proximity baselines --------------------
    {
        let start = Instant::now();
        let sweep_specs = &specs[..60];
        let scales = [0.3, 0.45, 0.6, 0.8, 1.0, 1.3, 1.7, 2.2, 2.8, 3.5];
        let hy_success = pct(&hy, |r| r.success);
        let hy_calls = hy.iter().map(|r| r.total_real_calls() as f64).sum::<f64>() / hy.len() as f64;

        // One grid pass serves both calibrations; the reference statistics
        // come from the sweep subset of the navigation batch.
        let sweep_hy: Vec<&TrialRow> = hy
            .iter()
            .filter(|r| r.seed < config.batch.base_seed + 60)
            .copied()
            .collect();
        let ref_calls = sweep_hy
            .iter()
            .map(|r| r.total_real_calls() as f64)
            .sum::<f64>()
            / sweep_hy.len() as f64;
        let ref_success = pct(&sweep_hy, |r| r.success);
        let grid = sweep_prox_grid(&config, &ctx, sweep_specs, &scales, parallelism);

        // Prox.A: match the hybrid router's call volume, then compare success.
        let chosen_a = choose_sweep_point(&grid, SweepTarget::Calls, ref_calls, ref_success);
        let mut config_a = config.clone();
        config_a.router.prox_a_theta1 = chosen_a.theta1;
        config_a.router.prox_a_theta2 = chosen_a.theta2;
        let ctx_a = RunContext {
            config: &config_a,
            table: &artifacts.table,
            predictors: &artifacts.predictors,
        };
        let prox_a = run_batch(&specs, &[Architecture::ProxA], &ctx_a, parallelism, false);
        let pa_rows: Vec<&TrialRow> = prox_a.rows.iter().filter(|r| !r.failed()).collect();
        let pa_success = pct(&pa_rows, |r| r.success);
        let pa_calls =
            pa_rows.iter().map(|r| r.total_real_calls() as f64).sum::<f64>() / pa_rows.len() as f64;

        // Prox.B: match the hybrid router's success rate, then compare calls.
        let chosen_b = choose_sweep_point(&grid, SweepTarget::Success, ref_calls, ref_success);
        let mut config_b = config.clone();
        config_b.router.prox_a_theta1 = chosen_b.theta1;
        config_b.router.prox_a_theta2 = chosen_b.theta2;
        let ctx_b = RunContext {
            config: &config_b,
            table: &artifacts.table,
            predictors: &artifacts.predictors,
        };
        let prox_b = run_batch(&specs, &[Architecture::ProxA], &ctx_b, parallelism, false);
        let pb_rows: Vec<&TrialRow> = prox_b.rows.iter().filter(|r| !r.failed()).collect();
        let pb_success = pct(&pb_rows, |r| r.success);
        let pb_calls =
            pb_rows.iter().map(|r| r.total_real_calls() as f64).sum::<f64>() / pb_rows.len() as f64;

        let call_matched = (pa_calls - hy_calls).abs() <= 0.05 * hy_calls;
        let ok = call_matched && hy_success >= pa_success + 5.0 && pb_calls >= 1.5 * hy_calls;
        gate.record(
            "7-pcri-vs-proximity",
            ok && start.elapsed().as_secs() <= 1800,
            format!(
                "call-matched: hyprap {hy_success:.1}% vs prox {pa_success:.1}% ({pa_calls:.0} vs {hy_calls:.0} calls); success-matched: prox {pb_calls:.0} calls at {pb_success:.1}% vs hyprap {hy_calls:.0} in {:.0}s",
                start.elapsed().as_secs_f64()
            ),
        );
    }

    // ----- 9. Solver verification ------------------------------------------
    {
        let plan_config = config.planner.plan_config();
        let limits = ControlLimits {
            v_max: config.world.v_max,
            omega_max: config.world.omega_max,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let mut worst_rel = 0.0f64;
        for _ in 0..100 {
            let t = plan_config.t_horizon;
            let obstacles = (0..3)
                .map(|id| {
                    let base = Vec2::new(rng.gen_range(-1.0..4.0), rng.gen_range(-2.0..2.0));
                    let drift = Vec2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
                    ObstacleConstraint {
                        obstacle_id: id,
                        points: (1..=t).map(|h| base + drift * h as f64).collect(),
                        margins: vec![rng.gen_range(0.4..1.2); t],
                    }
                })
                .collect();
            let constraints = ConstraintSet { obstacles };
            let problem = MpcProblem {
                x0: AgentState::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-3.0..3.0),
                ),
                goal: Vec2::new(rng.gen_range(3.0..7.0), rng.gen_range(-3.0..3.0)),
                constraints: &constraints,
                limits,
                dt: config.world.dt,
                config: &plan_config,
            };
            let flat: Vec<f64> = (0..2 * t)
                .map(|i| {
                    if i % 2 == 0 {
                        rng.gen_range(0.05..1.45)
                    } else {
                        rng.gen_range(-1.45..1.45)
                    }
                })
                .collect();
            let rho = 100.0;
            let (_, grad) = problem.merit_gradient(&flat, rho);
            let h = 1e-6;
            for i in 0..flat.len() {
                let mut plus = flat.clone();
                plus[i] += h;
                let mut minus = flat.clone();
                minus[i] -= h;
                let fd = (problem.merit(&plus, rho) - problem.merit(&minus, rho)) / (2.0 * h);
                worst_rel = worst_rel.max((grad[i] - fd).abs() / fd.abs().max(1.0));
            }
        }
        let grad_ok = worst_rel <= 1e-4;

        // Constraint audit reproduces the solver-reported violation exactly.
        let mut audit_ok = true;
        for case in 0..5 {
            let base = Vec2::new(2.0 + case as f64 * 0.3, 0.2 * case as f64);
            let constraints = ConstraintSet {
                obstacles: vec![ObstacleConstraint {
                    obstacle_id: 1,
                    points: vec![base; plan_config.t_horizon],
                    margins: vec![1.0; plan_config.t_horizon],
                }],
            };
            let problem = MpcProblem {
                x0: AgentState::new(0.0, 0.0, 0.0),
                goal: Vec2::new(6.0, 0.0),
                constraints: &constraints,
                limits,
                dt: config.world.dt,
                config: &plan_config,
            };
            let result = problem.solve(None);
            let audited =
                audit_violation(&result.states, &constraints, plan_config.h_horizon);
            audit_ok &= audited.to_bits() == result.max_violation.to_bits();
        }

        // Obstacle-free goal reaching within 1.5x the straight-line bound.
        let mut empty_config = config.clone();
        empty_config.batch.obstacle_min = 0;
        empty_config.batch.obstacle_max = 0;
        let spec = ScenarioSpec::from_config(&empty_config, 7);
        let scenario = hyprap::harness::generate_scenario(&spec).unwrap();
        let distance = scenario
            .agent_start
            .position()
            .distance(scenario.world.goal)
            - scenario.world.goal_radius;
        let lower_bound =
            (distance / (config.world.v_max * config.world.dt)).ceil();
        let metrics = hyprap::harness::run_scenario(&spec, Architecture::Hyprap, &ctx, None)
            .expect("empty world run");
        let reach_ok = metrics.success
            && (metrics.travel_steps as f64) <= 1.5 * lower_bound;

        gate.record(
            "9-solver-verification",
            grad_ok && audit_ok && reach_ok,
            format!(
                "gradient max rel err {worst_rel:.2e}; audit bit-equal {audit_ok}; empty-world {} steps vs bound {lower_bound:.0}",
                metrics.travel_steps
            ),
        );
    }

    // ----- 10. Determinism across runs and parallelism ---------------------
    {
        let det_specs: Vec<ScenarioSpec> = (0..16)
            .map(|i| ScenarioSpec::from_config(&config, 4200 + i))
            .collect();
        let arch = [Architecture::Hyprap, Architecture::Sp1];
        let runs: Vec<Vec<String>> = [1usize, 8, 1]
            .iter()
            .map(|par| {
                let result = run_batch(&det_specs, &arch, &ctx, *par, false);
                let dir = std::env::temp_dir().join(format!("hyprap-acc-det-{par}"));
                std::fs::create_dir_all(&dir).unwrap();
                let path = dir.join("trials.csv");
                write_trials_csv(&result.rows, &path).unwrap();
                std::fs::read_to_string(&path)
                    .unwrap()
                    .lines()
                    .map(strip_timing_columns)
                    .collect()
            })
            .collect();
        let ok = runs[0] == runs[1] && runs[1] == runs[2];
        gate.record(
            "10-determinism",
            ok,
            format!(
                "non-timing CSV columns identical across parallelism 1/8 and repeated runs over {} trials",
                 32
            ),
        );
    }

    gate.finish();
}
