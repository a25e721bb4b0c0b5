//! Command-line front end: offline calibration, single traced runs, Monte
//! Carlo batches, proximity-threshold sweeps, and report rendering.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hyprap::config::Config;
use hyprap::conformal::empirical_coverage;
use hyprap::harness::{
    aggregate_report, build_artifacts, build_holdout, load_artifacts, read_trials_csv,
    render_report_files, run_batch, run_scenario, save_artifacts, sweep_prox_thresholds,
    tradeoff_study, write_mt_csv, write_trials_csv, Architecture, BatchReport, RunContext,
    ScenarioSpec, SweepTarget,
};
use hyprap::predictors::PredictorLevel;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "hyprap", about = "Risk-routed hybrid-prediction planning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the trajectory library, calibration set, and epsilon table.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving library.bin, calibration.bin, epsilon_table.bin.
        #[arg(long)]
        out: PathBuf,
        /// Master seed for the offline artifacts.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Skip the held-out coverage summary.
        #[arg(long, default_value_t = false)]
        skip_coverage: bool,
    },
    /// Run one scenario and stream a per-step trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Architecture: sp1 | hyprap | sp2 | prox-a | prox-b.
        #[arg(long)]
        arch: String,
        /// Trace file path (one structured record per line).
        #[arg(long)]
        trace: PathBuf,
        /// Artifact directory written by `calibrate`.
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Run a seeded batch over one or more architectures.
    Batch {
        #[arg(long)]
        config: PathBuf,
        /// File with one seed per line.
        #[arg(long)]
        seeds: PathBuf,
        /// Comma-separated architecture list.
        #[arg(long)]
        archs: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        /// Run trials sequentially for clean timing measurements.
        #[arg(long, default_value_t = false)]
        timing_isolated: bool,
        /// Worker threads; overrides config and HYPRAP_PARALLEL.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Find proximity-router thresholds matching the hybrid reference.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Matching target: calls | success.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        /// Optional seed file; defaults to the config's batch seeds.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Run the forced-allocation trade-off study.
    Tradeoff {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 25)]
        steps: usize,
    },
    /// Aggregate trial CSVs into summary tables and plots.
    Report {
        /// Directory containing trials*.csv files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_archs(list: &str) -> Result<Vec<Architecture>> {
    list.split(',')
        .map(|s| {
            Architecture::parse(s.trim())
                .with_context(|| format!("unknown architecture '{}'", s.trim()))
        })
        .collect()
}

fn read_seeds(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read seeds file {}", path.display()))?;
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        seeds.push(
            line.parse::<u64>()
                .with_context(|| format!("bad seed on line {}", i + 1))?,
        );
    }
    if seeds.is_empty() {
        bail!("seeds file {} contains no seeds", path.display());
    }
    Ok(seeds)
}

fn default_seeds(config: &Config) -> Vec<u64> {
    (0..config.batch.scenarios as u64)
        .map(|i| config.batch.base_seed + i)
        .collect()
}

fn effective_parallel(config: &Config, flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| config.effective_parallelism())
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Calibrate {
            config,
            out,
            seed,
            skip_coverage,
        } => {
            let config = Config::load(&config)?;
            let started = std::time::Instant::now();
            let artifacts = build_artifacts(&config, seed)?;
            save_artifacts(&artifacts, &out)?;
            println!(
                "calibrated in {:.1}s: library {} segments, {} examples per level, table width M={}",
                started.elapsed().as_secs_f64(),
                artifacts.predictors.library.len(),
                artifacts.calibration.len_per_level(),
                artifacts.table.m_max,
            );
            let e1 = artifacts
                .table
                .mean_radius(PredictorLevel::Accurate, artifacts.table.m_max)?;
            let e2 = artifacts
                .table
                .mean_radius(PredictorLevel::Fast, artifacts.table.m_max)?;
            println!(
                "mean radii at M={}: level1 {e1:.4} m, level2 {e2:.4} m (ratio {:.2})",
                artifacts.table.m_max,
                e2 / e1
            );
            if !skip_coverage {
                let holdout = build_holdout(&config, &artifacts, seed);
                for level in [PredictorLevel::Accurate, PredictorLevel::Fast] {
                    let report = empirical_coverage(
                        &holdout,
                        &artifacts.table,
                        level,
                        artifacts.table.m_max.min(8),
                        false,
                    )?;
                    let min_cov = report.per_h.iter().copied().fold(1.0f64, f64::min);
                    println!(
                        "holdout coverage level {}: min over h = {:.4} (target {:.4}, n={})",
                        level, min_cov, report.target_marginal, report.n_examples
                    );
                }
            }
            Ok(())
        }
        Command::Run {
            config,
            seed,
            arch,
            trace,
            artifacts,
        } => {
            let config = Config::load(&config)?;
            let arch = Architecture::parse(&arch)
                .with_context(|| format!("unknown architecture '{arch}'"))?;
            let loaded = load_artifacts(&config, &artifacts)?;
            let ctx = RunContext {
                config: &config,
                table: &loaded.table,
                predictors: &loaded.predictors,
            };
            let spec = ScenarioSpec::from_config(&config, seed);
            let mut trace_file = std::fs::File::create(&trace)
                .with_context(|| format!("cannot create trace {}", trace.display()))?;
            let metrics = run_scenario(&spec, arch, &ctx, Some(&mut trace_file))?;
            println!(
                "seed {seed} arch {arch}: success={} collision={} deadlock={} steps={} calls l1/l2={}/{} wall={:.2}s",
                metrics.success,
                metrics.collision,
                metrics.deadlock,
                metrics.travel_steps,
                metrics.calls_level1,
                metrics.calls_level2,
                metrics.wall_time_s,
            );
            Ok(())
        }
        Command::Batch {
            config,
            seeds,
            archs,
            out,
            artifacts,
            timing_isolated,
            parallel,
        } => {
            let config = Config::load(&config)?;
            let seeds = read_seeds(&seeds)?;
            let archs = parse_archs(&archs)?;
            let loaded = load_artifacts(&config, &artifacts)?;
            let ctx = RunContext {
                config: &config,
                table: &loaded.table,
                predictors: &loaded.predictors,
            };
            let specs: Vec<ScenarioSpec> = seeds
                .iter()
                .map(|s| ScenarioSpec::from_config(&config, *s))
                .collect();
            let parallelism = effective_parallel(&config, parallel);
            let started = std::time::Instant::now();
            let result = run_batch(&specs, &archs, &ctx, parallelism, timing_isolated);
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            write_trials_csv(&result.rows, &out.join("trials.csv"))?;
            write_mt_csv(&result.per_mt, &out.join("per_mt.csv"))?;
            let report = aggregate_report(&result.rows)?;
            std::fs::write(out.join("summary.md"), report.to_markdown())
                .context("write summary")?;
            render_report_files(&report, &result.per_mt, None, &out)?;
            println!(
                "{} trials in {:.1}s (parallel {}):",
                result.rows.len(),
                started.elapsed().as_secs_f64(),
                if timing_isolated { 1 } else { parallelism },
            );
            for s in &report.summaries {
                println!(
                    "  {:8} success {:5.1}%  travel {:6.1}+-{:5.1}  calls l1/l2 {:7.1}/{:7.1}",
                    s.arch,
                    s.success_pct,
                    s.travel_mean,
                    s.travel_std,
                    s.mean_calls_l1,
                    s.mean_calls_l2,
                );
            }
            Ok(())
        }
        Command::Sweep {
            config,
            target,
            out,
            artifacts,
            seeds,
            parallel,
        } => {
            let config = Config::load(&config)?;
            let target = SweepTarget::parse(&target)
                .with_context(|| format!("unknown sweep target '{target}' (use calls|success)"))?;
            let loaded = load_artifacts(&config, &artifacts)?;
            let ctx = RunContext {
                config: &config,
                table: &loaded.table,
                predictors: &loaded.predictors,
            };
            let seeds = match seeds {
                Some(path) => read_seeds(&path)?,
                None => default_seeds(&config),
            };
            let specs: Vec<ScenarioSpec> = seeds
                .iter()
                .map(|s| ScenarioSpec::from_config(&config, *s))
                .collect();
            let scales = [0.3, 0.45, 0.6, 0.8, 1.0, 1.3, 1.7, 2.2, 2.8, 3.5];
            let parallelism = effective_parallel(&config, parallel);
            let result =
                sweep_prox_thresholds(&config, &ctx, &specs, target, &scales, parallelism)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            // Write a ready-to-use config with the chosen thresholds filled in.
            let mut tuned = config.clone();
            match target {
                SweepTarget::Calls => {
                    tuned.router.prox_a_theta1 = result.chosen.theta1;
                    tuned.router.prox_a_theta2 = result.chosen.theta2;
                }
                SweepTarget::Success => {
                    tuned.router.prox_b_theta1 = result.chosen.theta1;
                    tuned.router.prox_b_theta2 = result.chosen.theta2;
                }
            }
            let config_name = match target {
                SweepTarget::Calls => "config_prox_a.toml",
                SweepTarget::Success => "config_prox_b.toml",
            };
            tuned.save(&out.join(config_name))?;
            let mut grid = String::from("scale,theta1,theta2,mean_calls,success_pct\n");
            for p in &result.points {
                grid.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.scale, p.theta1, p.theta2, p.mean_calls, p.success_pct
                ));
            }
            std::fs::write(out.join("sweep_grid.csv"), grid).context("write grid")?;
            println!(
                "reference: {:.1} calls/trial, {:.1}% success",
                result.reference_calls, result.reference_success
            );
            println!(
                "chosen scale {:.2}: thresholds ({:.4}, {:.4}), {:.1} calls/trial, {:.1}% success -> {}",
                result.chosen.scale,
                result.chosen.theta1,
                result.chosen.theta2,
                result.chosen.mean_calls,
                result.chosen.success_pct,
                out.join(config_name).display(),
            );
            Ok(())
        }
        Command::Tradeoff {
            config,
            out,
            artifacts,
            repeats,
            steps,
        } => {
            let config = Config::load(&config)?;
            let loaded = load_artifacts(&config, &artifacts)?;
            let ctx = RunContext {
                config: &config,
                table: &loaded.table,
                predictors: &loaded.predictors,
            };
            let allocations: Vec<(usize, usize)> = (0..=8).map(|m1| (m1, 8 - m1)).collect();
            let curve = tradeoff_study(&ctx, &allocations, repeats, steps)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let empty = BatchReport { summaries: vec![] };
            render_report_files(&empty, &Default::default(), Some(&curve), &out)?;
            println!(
                "measured per-call costs: level1 {:.3e}s, level2 {:.3e}s",
                curve.delta_t1, curve.delta_t2
            );
            for p in &curve.points {
                println!(
                    "  ({},{}) pred {:.5}s total {:.5}s theory {:.5}s E {:.4}",
                    p.m1, p.m2, p.pred_time_s, p.total_time_s, p.theory_time_s, p.e_value
                );
            }
            Ok(())
        }
        Command::Report { input, out } => {
            let mut rows = Vec::new();
            for entry in std::fs::read_dir(&input)
                .with_context(|| format!("cannot read {}", input.display()))?
            {
                let path = entry?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("trials") && name.ends_with(".csv") {
                    rows.extend(read_trials_csv(&path)?);
                }
            }
            if rows.is_empty() {
                bail!("no trials*.csv found in {}", input.display());
            }
            let report = aggregate_report(&rows)?;
            render_report_files(&report, &Default::default(), None, &out)?;
            println!("{}", report.to_markdown());
            Ok(())
        }
    }
}
