//! Monte Carlo batch runner and the versioned trial CSV format.
//!
//! Trials are independent; the runner executes them on a dedicated thread
//! pool up to the configured parallelism, preserving input order so output
//! files are identical across parallelism levels. Timing-isolated batches
//! run sequentially for clean measurements.

use super::runner::{run_scenario, MtAccum, RunContext, TrialMetrics};
use super::scenario::ScenarioSpec;
use super::{Architecture, HarnessError};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Header of the trial CSV. The three `*_time_s` columns at the tail are the
/// only nondeterministic ones; determinism checks compare all others.
pub const TRIALS_CSV_HEADER: &str = "format,arch,seed,n_obstacles,success,collision,deadlock,timeout,travel_steps,calls_l0,calls_l1,calls_l2,fallbacks,clamped,mean_nt,mean_mt,mean_m1,mean_m2,mean_e,e_steps,feasible_steps,safe_feasible_steps,infeasible_steps,error,pred_time_s,mpc_time_s,wall_time_s";

pub const TRIALS_FORMAT_VERSION: &str = "v1";

/// Number of trailing timing columns excluded from determinism comparisons.
pub const TIMING_COLUMNS: usize = 3;

/// One CSV row: either a completed trial or a recorded per-trial failure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub arch: String,
    pub seed: u64,
    pub n_obstacles: usize,
    pub success: bool,
    pub collision: bool,
    pub deadlock: bool,
    pub timeout: bool,
    pub travel_steps: usize,
    pub calls_l0: u64,
    pub calls_l1: u64,
    pub calls_l2: u64,
    pub fallbacks: u64,
    pub clamped: u64,
    pub mean_nt: f64,
    pub mean_mt: f64,
    pub mean_m1: f64,
    pub mean_m2: f64,
    pub mean_e: f64,
    pub e_steps: usize,
    pub feasible_steps: usize,
    pub safe_feasible_steps: usize,
    pub infeasible_steps: usize,
    pub error: String,
    pub pred_time_s: f64,
    pub mpc_time_s: f64,
    pub wall_time_s: f64,
}

impl TrialRow {
    pub fn from_metrics(m: &TrialMetrics) -> TrialRow {
        TrialRow {
            arch: m.architecture.name().to_string(),
            seed: m.seed,
            n_obstacles: m.n_obstacles,
            success: m.success,
            collision: m.collision,
            deadlock: m.deadlock,
            timeout: m.timeout,
            travel_steps: m.travel_steps,
            calls_l0: m.calls_level0,
            calls_l1: m.calls_level1,
            calls_l2: m.calls_level2,
            fallbacks: m.fallbacks,
            clamped: m.clamped_lookups,
            mean_nt: m.mean_nt,
            mean_mt: m.mean_mt,
            mean_m1: m.mean_m1,
            mean_m2: m.mean_m2,
            mean_e: m.mean_e,
            e_steps: m.e_defined_steps,
            feasible_steps: m.feasible_steps,
            safe_feasible_steps: m.safe_feasible_steps,
            infeasible_steps: m.infeasible_steps,
            error: String::new(),
            pred_time_s: m.pred_time_s,
            mpc_time_s: m.mpc_time_s,
            wall_time_s: m.wall_time_s,
        }
    }

    pub fn from_error(arch: Architecture, spec: &ScenarioSpec, err: &HarnessError) -> TrialRow {
        TrialRow {
            arch: arch.name().to_string(),
            seed: spec.seed,
            n_obstacles: spec.n_obstacles,
            success: false,
            collision: false,
            deadlock: false,
            timeout: false,
            travel_steps: 0,
            calls_l0: 0,
            calls_l1: 0,
            calls_l2: 0,
            fallbacks: 0,
            clamped: 0,
            mean_nt: 0.0,
            mean_mt: 0.0,
            mean_m1: 0.0,
            mean_m2: 0.0,
            mean_e: 0.0,
            e_steps: 0,
            feasible_steps: 0,
            safe_feasible_steps: 0,
            infeasible_steps: 0,
            error: err.to_string().replace([',', '\n'], ";"),
            pred_time_s: 0.0,
            mpc_time_s: 0.0,
            wall_time_s: 0.0,
        }
    }

    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }

    pub fn total_real_calls(&self) -> u64 {
        self.calls_l1 + self.calls_l2
    }

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            TRIALS_FORMAT_VERSION,
            self.arch,
            self.seed,
            self.n_obstacles,
            self.success as u8,
            self.collision as u8,
            self.deadlock as u8,
            self.timeout as u8,
            self.travel_steps,
            self.calls_l0,
            self.calls_l1,
            self.calls_l2,
            self.fallbacks,
            self.clamped,
            self.mean_nt,
            self.mean_mt,
            self.mean_m1,
            self.mean_m2,
            self.mean_e,
            self.e_steps,
            self.feasible_steps,
            self.safe_feasible_steps,
            self.infeasible_steps,
            self.error,
            self.pred_time_s,
            self.mpc_time_s,
            self.wall_time_s,
        )
    }

    fn from_csv_line(line: &str, path: &Path) -> Result<TrialRow, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        let expected = TRIALS_CSV_HEADER.split(',').count();
        if fields.len() != expected {
            return Err(HarnessError::MalformedCsv {
                path: path.display().to_string(),
                reason: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| HarnessError::MalformedCsv {
            path: path.display().to_string(),
            reason: format!("unparseable {what}"),
        };
        if fields[0] != TRIALS_FORMAT_VERSION {
            return Err(HarnessError::MalformedCsv {
                path: path.display().to_string(),
                reason: format!("unsupported format version {}", fields[0]),
            });
        }
        Ok(TrialRow {
            arch: fields[1].to_string(),
            seed: fields[2].parse().map_err(|_| bad("seed"))?,
            n_obstacles: fields[3].parse().map_err(|_| bad("n_obstacles"))?,
            success: fields[4] == "1",
            collision: fields[5] == "1",
            deadlock: fields[6] == "1",
            timeout: fields[7] == "1",
            travel_steps: fields[8].parse().map_err(|_| bad("travel_steps"))?,
            calls_l0: fields[9].parse().map_err(|_| bad("calls_l0"))?,
            calls_l1: fields[10].parse().map_err(|_| bad("calls_l1"))?,
            calls_l2: fields[11].parse().map_err(|_| bad("calls_l2"))?,
            fallbacks: fields[12].parse().map_err(|_| bad("fallbacks"))?,
            clamped: fields[13].parse().map_err(|_| bad("clamped"))?,
            mean_nt: fields[14].parse().map_err(|_| bad("mean_nt"))?,
            mean_mt: fields[15].parse().map_err(|_| bad("mean_mt"))?,
            mean_m1: fields[16].parse().map_err(|_| bad("mean_m1"))?,
            mean_m2: fields[17].parse().map_err(|_| bad("mean_m2"))?,
            mean_e: fields[18].parse().map_err(|_| bad("mean_e"))?,
            e_steps: fields[19].parse().map_err(|_| bad("e_steps"))?,
            feasible_steps: fields[20].parse().map_err(|_| bad("feasible_steps"))?,
            safe_feasible_steps: fields[21].parse().map_err(|_| bad("safe_feasible_steps"))?,
            infeasible_steps: fields[22].parse().map_err(|_| bad("infeasible_steps"))?,
            error: fields[23].to_string(),
            pred_time_s: fields[24].parse().map_err(|_| bad("pred_time_s"))?,
            mpc_time_s: fields[25].parse().map_err(|_| bad("mpc_time_s"))?,
            wall_time_s: fields[26].parse().map_err(|_| bad("wall_time_s"))?,
        })
    }
}

/// Outcome of a batch: one row per (architecture, spec), in input order,
/// plus per-architecture computation-time curves over the routed count.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub rows: Vec<TrialRow>,
    pub per_mt: BTreeMap<(String, usize), MtAccum>,
}

/// Re-exported alias: a completed trial or its recorded failure.
pub type TrialRecord = TrialRow;

/// Run the full (architecture x spec) grid. With `timing_isolated` the grid
/// runs sequentially; otherwise a pool of `parallelism` workers is used.
/// Per-trial failures become error rows and the batch continues.
pub fn run_batch(
    specs: &[ScenarioSpec],
    architectures: &[Architecture],
    ctx: &RunContext,
    parallelism: usize,
    timing_isolated: bool,
) -> BatchResult {
    let jobs: Vec<(Architecture, &ScenarioSpec)> = architectures
        .iter()
        .flat_map(|a| specs.iter().map(move |s| (*a, s)))
        .collect();

    let run_one = |&(arch, spec): &(Architecture, &ScenarioSpec)| -> (TrialRow, Option<BTreeMap<usize, MtAccum>>) {
        match run_scenario(spec, arch, ctx, None) {
            Ok(metrics) => {
                let per_mt = metrics.per_mt.clone();
                (TrialRow::from_metrics(&metrics), Some(per_mt))
            }
            Err(err) => (TrialRow::from_error(arch, spec, &err), None),
        }
    };

    let outcomes: Vec<(TrialRow, Option<BTreeMap<usize, MtAccum>>)> =
        if parallelism > 1 && !timing_isolated {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .expect("thread pool builds");
            pool.install(|| jobs.par_iter().map(run_one).collect())
        } else {
            jobs.iter().map(run_one).collect()
        };

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut per_mt: BTreeMap<(String, usize), MtAccum> = BTreeMap::new();
    for (row, trial_mt) in outcomes {
        if let Some(trial_mt) = trial_mt {
            for (mt, accum) in trial_mt {
                let slot = per_mt.entry((row.arch.clone(), mt)).or_default();
                slot.steps += accum.steps;
                slot.pred_time_s += accum.pred_time_s;
                slot.mpc_time_s += accum.mpc_time_s;
            }
        }
        rows.push(row);
    }
    BatchResult { rows, per_mt }
}

pub fn write_trials_csv(rows: &[TrialRow], path: &Path) -> Result<(), HarnessError> {
    let io = |source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    writeln!(file, "{TRIALS_CSV_HEADER}").map_err(io)?;
    for row in rows {
        writeln!(file, "{}", row.to_csv_line()).map_err(io)?;
    }
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>, HarnessError> {
    let io = |source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(io)?.unwrap_or_default();
    if header != TRIALS_CSV_HEADER {
        return Err(HarnessError::MalformedCsv {
            path: path.display().to_string(),
            reason: "unrecognized header".into(),
        });
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(TrialRow::from_csv_line(&line, path)?);
    }
    Ok(rows)
}

/// Write the per-(architecture, routed-count) computation-time table.
pub fn write_mt_csv(
    per_mt: &BTreeMap<(String, usize), MtAccum>,
    path: &Path,
) -> Result<(), HarnessError> {
    let io = |source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    writeln!(file, "arch,m_t,steps,pred_time_s_mean,mpc_time_s_mean").map_err(io)?;
    for ((arch, mt), accum) in per_mt {
        let steps = accum.steps.max(1) as f64;
        writeln!(
            file,
            "{arch},{mt},{},{},{}",
            accum.steps,
            accum.pred_time_s / steps,
            accum.mpc_time_s / steps,
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Strip the trailing timing columns off a CSV line, for determinism checks.
pub fn strip_timing_columns(line: &str) -> String {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() <= TIMING_COLUMNS {
        return line.to_string();
    }
    fields[..fields.len() - TIMING_COLUMNS].join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> TrialRow {
        TrialRow {
            arch: "hyprap".into(),
            seed: 42,
            n_obstacles: 30,
            success: true,
            collision: false,
            deadlock: false,
            timeout: false,
            travel_steps: 180,
            calls_l0: 1000,
            calls_l1: 50,
            calls_l2: 200,
            fallbacks: 3,
            clamped: 0,
            mean_nt: 9.25,
            mean_mt: 3.5,
            mean_m1: 0.5,
            mean_m2: 3.0,
            mean_e: 0.91,
            e_steps: 170,
            feasible_steps: 175,
            safe_feasible_steps: 175,
            infeasible_steps: 5,
            error: String::new(),
            pred_time_s: 0.5,
            mpc_time_s: 1.25,
            wall_time_s: 2.0,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![sample_row()];
        let path = std::env::temp_dir().join("hyprap-trials-test.csv");
        write_trials_csv(&rows, &path).unwrap();
        let back = read_trials_csv(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let path = std::env::temp_dir().join("hyprap-badheader.csv");
        std::fs::write(&path, "wrong,header\n1,2\n").unwrap();
        assert!(matches!(
            read_trials_csv(&path),
            Err(HarnessError::MalformedCsv { .. })
        ));
    }

    #[test]
    fn timing_columns_strip_cleanly() {
        let line = sample_row().to_csv_line();
        let stripped = strip_timing_columns(&line);
        assert!(stripped.ends_with(",175,5,"));
        assert_eq!(
            stripped.split(',').count(),
            TRIALS_CSV_HEADER.split(',').count() - TIMING_COLUMNS
        );
    }
}
