//! Aggregation of trial rows into per-architecture summaries, comparison
//! tables, and plot files.

use super::batch::TrialRow;
use super::runner::MtAccum;
use super::svg::{line_chart, Series};
use super::tradeoff::TradeoffCurve;
use super::HarnessError;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Aggregates for one architecture over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSummary {
    pub arch: String,
    pub trials: usize,
    pub errors: usize,
    pub success_pct: f64,
    /// Mean and standard deviation of travel steps over successful trials.
    pub travel_mean: f64,
    pub travel_std: f64,
    pub collision_pct: f64,
    pub deadlock_pct: f64,
    pub timeout_pct: f64,
    pub mean_calls_l1: f64,
    pub mean_calls_l2: f64,
    pub mean_calls_total: f64,
    pub mean_e: f64,
    /// Realized horizon-wide non-collision frequency over feasible steps.
    pub safety_frequency: f64,
    pub pred_time_per_step_s: f64,
    pub mpc_time_per_step_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub summaries: Vec<ArchSummary>,
}

impl BatchReport {
    pub fn summary(&self, arch: &str) -> Option<&ArchSummary> {
        self.summaries.iter().find(|s| s.arch == arch)
    }

    /// Markdown rendering of the headline table plus the model-call
    /// comparison table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Batch summary\n\n");
        out.push_str(
            "| architecture | trials | success % | travel steps (mean±std) | collision % | deadlock % | timeout % | safety freq | mean E |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "| {} | {} | {:.1} | {:.1}±{:.1} | {:.1} | {:.1} | {:.1} | {:.4} | {:.4} |\n",
                s.arch,
                s.trials,
                s.success_pct,
                s.travel_mean,
                s.travel_std,
                s.collision_pct,
                s.deadlock_pct,
                s.timeout_pct,
                s.safety_frequency,
                s.mean_e,
            ));
        }
        out.push_str("\n## Prediction model calls per trial\n\n");
        out.push_str("| architecture | success % | level-1 calls | level-2 calls | total |\n");
        out.push_str("|---|---|---|---|---|\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "| {} | {:.1} | {:.1} | {:.1} | {:.1} |\n",
                s.arch, s.success_pct, s.mean_calls_l1, s.mean_calls_l2, s.mean_calls_total,
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "arch,trials,errors,success_pct,travel_mean,travel_std,collision_pct,deadlock_pct,timeout_pct,mean_calls_l1,mean_calls_l2,mean_calls_total,mean_e,safety_frequency,pred_time_per_step_s,mpc_time_per_step_s\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.arch,
                s.trials,
                s.errors,
                s.success_pct,
                s.travel_mean,
                s.travel_std,
                s.collision_pct,
                s.deadlock_pct,
                s.timeout_pct,
                s.mean_calls_l1,
                s.mean_calls_l2,
                s.mean_calls_total,
                s.mean_e,
                s.safety_frequency,
                s.pred_time_per_step_s,
                s.mpc_time_per_step_s,
            ));
        }
        out
    }
}

/// Aggregate rows per architecture. Travel statistics follow the convention
/// of averaging over successful trials only; error rows count toward the
/// error column and nothing else.
pub fn aggregate_report(rows: &[TrialRow]) -> Result<BatchReport, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut grouped: BTreeMap<&str, Vec<&TrialRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.arch.as_str()).or_default().push(row);
    }
    let mut summaries = Vec::with_capacity(grouped.len());
    for (arch, group) in grouped {
        let errors = group.iter().filter(|r| r.failed()).count();
        let valid: Vec<&&TrialRow> = group.iter().filter(|r| !r.failed()).collect();
        let n = valid.len().max(1) as f64;
        let successes: Vec<&&&TrialRow> = valid.iter().filter(|r| r.success).collect();
        let travel: Vec<f64> = successes.iter().map(|r| r.travel_steps as f64).collect();
        let travel_mean = if travel.is_empty() {
            0.0
        } else {
            travel.iter().sum::<f64>() / travel.len() as f64
        };
        let travel_std = if travel.len() < 2 {
            0.0
        } else {
            (travel.iter().map(|t| (t - travel_mean).powi(2)).sum::<f64>()
                / (travel.len() as f64 - 1.0))
                .sqrt()
        };
        let pct = |pred: &dyn Fn(&TrialRow) -> bool| {
            100.0 * valid.iter().filter(|r| pred(r)).count() as f64 / n
        };
        let total_feasible: u64 = valid.iter().map(|r| r.feasible_steps as u64).sum();
        let total_safe: u64 = valid.iter().map(|r| r.safe_feasible_steps as u64).sum();
        let total_steps: f64 = valid.iter().map(|r| r.travel_steps as f64).sum::<f64>().max(1.0);
        let e_weighted: f64 = valid.iter().map(|r| r.mean_e * r.e_steps as f64).sum();
        let e_steps: f64 = valid.iter().map(|r| r.e_steps as f64).sum();
        summaries.push(ArchSummary {
            arch: arch.to_string(),
            trials: group.len(),
            errors,
            success_pct: pct(&|r| r.success),
            travel_mean,
            travel_std,
            collision_pct: pct(&|r| r.collision),
            deadlock_pct: pct(&|r| r.deadlock),
            timeout_pct: pct(&|r| r.timeout),
            mean_calls_l1: valid.iter().map(|r| r.calls_l1 as f64).sum::<f64>() / n,
            mean_calls_l2: valid.iter().map(|r| r.calls_l2 as f64).sum::<f64>() / n,
            mean_calls_total: valid.iter().map(|r| r.total_real_calls() as f64).sum::<f64>() / n,
            mean_e: if e_steps > 0.0 { e_weighted / e_steps } else { 0.0 },
            safety_frequency: if total_feasible > 0 {
                total_safe as f64 / total_feasible as f64
            } else {
                1.0
            },
            pred_time_per_step_s: valid.iter().map(|r| r.pred_time_s).sum::<f64>() / total_steps,
            mpc_time_per_step_s: valid.iter().map(|r| r.mpc_time_s).sum::<f64>() / total_steps,
        });
    }
    Ok(BatchReport { summaries })
}

/// Write summary.csv, summary.md, and the plot SVGs into `out_dir`.
pub fn render_report_files(
    report: &BatchReport,
    per_mt: &BTreeMap<(String, usize), MtAccum>,
    tradeoff: Option<&TradeoffCurve>,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let write = |name: &str, contents: &str| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        let mut file = std::fs::File::create(&path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(contents.as_bytes())
            .map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })
    };
    write("summary.csv", &report.to_csv())?;
    write("summary.md", &report.to_markdown())?;

    if !per_mt.is_empty() {
        let mut arches: Vec<&String> = per_mt.keys().map(|(a, _)| a).collect();
        arches.dedup();
        let mut pred_series = Vec::new();
        let mut total_series = Vec::new();
        for arch in arches {
            let mut pred_points = Vec::new();
            let mut total_points = Vec::new();
            for ((a, mt), accum) in per_mt {
                if a == arch && accum.steps > 0 {
                    let steps = accum.steps as f64;
                    let pred = accum.pred_time_s / steps;
                    let mpc = accum.mpc_time_s / steps;
                    pred_points.push((*mt as f64, pred));
                    total_points.push((*mt as f64, pred + mpc));
                }
            }
            pred_series.push(Series {
                label: format!("{arch} prediction"),
                points: pred_points,
            });
            total_series.push(Series {
                label: format!("{arch} total"),
                points: total_points,
            });
        }
        write(
            "computation_vs_mt.svg",
            &line_chart(
                "Mean computation time vs routed obstacle count",
                "routed obstacles",
                "seconds per step",
                &pred_series
                    .into_iter()
                    .chain(total_series)
                    .collect::<Vec<_>>(),
            ),
        )?;
    }

    if let Some(curve) = tradeoff {
        let pred = Series {
            label: "measured prediction".into(),
            points: curve
                .points
                .iter()
                .map(|p| (p.m1 as f64, p.pred_time_s))
                .collect(),
        };
        let total = Series {
            label: "measured prediction+MPC".into(),
            points: curve
                .points
                .iter()
                .map(|p| (p.m1 as f64, p.total_time_s))
                .collect(),
        };
        let theory = Series {
            label: "linear cost model".into(),
            points: curve
                .points
                .iter()
                .map(|p| (p.m1 as f64, p.theory_time_s))
                .collect(),
        };
        write(
            "tradeoff_times.svg",
            &line_chart(
                "Computation time vs accurate-predictor allocation",
                "obstacles routed to the accurate predictor",
                "seconds per step",
                &[pred, total, theory],
            ),
        )?;
        let accuracy = Series {
            label: "allocation accuracy metric".into(),
            points: curve
                .points
                .iter()
                .map(|p| (p.m1 as f64, p.e_value))
                .collect(),
        };
        write(
            "tradeoff_accuracy.svg",
            &line_chart(
                "Accuracy metric vs accurate-predictor allocation",
                "obstacles routed to the accurate predictor",
                "E",
                &[accuracy],
            ),
        )?;
        let mut csv = String::from("m1,m2,pred_time_s,total_time_s,theory_time_s,e\n");
        for p in &curve.points {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.m1, p.m2, p.pred_time_s, p.total_time_s, p.theory_time_s, p.e_value
            ));
        }
        write("tradeoff.csv", &csv)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(arch: &str, success: bool, travel: usize) -> TrialRow {
        TrialRow {
            arch: arch.into(),
            seed: 1,
            n_obstacles: 10,
            success,
            collision: !success,
            deadlock: false,
            timeout: false,
            travel_steps: travel,
            calls_l0: 10,
            calls_l1: 5,
            calls_l2: 20,
            fallbacks: 0,
            clamped: 0,
            mean_nt: 5.0,
            mean_mt: 2.0,
            mean_m1: 0.3,
            mean_m2: 1.7,
            mean_e: 0.9,
            e_steps: travel,
            feasible_steps: travel,
            safe_feasible_steps: travel,
            infeasible_steps: 0,
            error: String::new(),
            pred_time_s: 0.01,
            mpc_time_s: 0.1,
            wall_time_s: 0.2,
        }
    }

    #[test]
    fn single_success_aggregates_cleanly() {
        let report = aggregate_report(&[row("hyprap", true, 150)]).unwrap();
        let s = report.summary("hyprap").unwrap();
        assert_eq!(s.success_pct, 100.0);
        assert_eq!(s.travel_mean, 150.0);
        assert_eq!(s.travel_std, 0.0);
    }

    #[test]
    fn travel_statistics_ignore_failures() {
        let rows = vec![row("sp1", true, 100), row("sp1", true, 120), row("sp1", false, 400)];
        let report = aggregate_report(&rows).unwrap();
        let s = report.summary("sp1").unwrap();
        assert_eq!(s.travel_mean, 110.0);
        assert!((s.success_pct - 66.6667).abs() < 0.01);
    }

    #[test]
    fn identical_groups_produce_identical_rows() {
        let rows = vec![row("sp1", true, 100), row("sp2", true, 100)];
        let report = aggregate_report(&rows).unwrap();
        let a = report.summary("sp1").unwrap();
        let b = report.summary("sp2").unwrap();
        assert_eq!(a.success_pct, b.success_pct);
        assert_eq!(a.travel_mean, b.travel_mean);
        assert_eq!(a.mean_calls_total, b.mean_calls_total);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            aggregate_report(&[]),
            Err(HarnessError::EmptyReport)
        ));
    }
}
