//! End-to-end exercise of the command-line surface on a shrunk config:
//! calibrate writes artifacts, run writes a trace, batch writes the CSVs,
//! and report renders summaries. Config and artifact errors exit nonzero.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hyprap")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("hyprap-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small but feasible: full horizon, reduced library and calibration sizes,
/// table width 1 (needs 599+ examples at delta 0.05, H = 30).
fn write_small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        r#"
[predictors]
library_rollouts = 60
library_rollout_steps = 200
calibration_streams = 160
calibration_samples_per_stream = 4
holdout_streams = 12
holdout_samples_per_stream = 3

[conformal]
m_max = 1

[batch]
scenarios = 2
obstacle_min = 8
obstacle_max = 12
"#,
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = workdir("pipeline");
    let config = write_small_config(&dir);
    let artifacts = dir.join("artifacts");

    let calibrate = Command::new(bin())
        .args(["calibrate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&artifacts)
        .args(["--seed", "7", "--skip-coverage"])
        .output()
        .expect("calibrate runs");
    assert!(
        calibrate.status.success(),
        "calibrate failed: {}",
        String::from_utf8_lossy(&calibrate.stderr)
    );
    for file in ["library.bin", "calibration.bin", "epsilon_table.bin"] {
        assert!(artifacts.join(file).exists(), "{file} missing");
    }

    let trace = dir.join("trace.jsonl");
    let run = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "11", "--arch", "hyprap", "--trace"])
        .arg(&trace)
        .arg("--artifacts")
        .arg(&artifacts)
        .output()
        .expect("run runs");
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.lines().count() > 0, "trace is empty");
    let first: serde_json::Value = serde_json::from_str(trace_text.lines().next().unwrap()).unwrap();
    assert!(first.get("t").is_some() && first.get("m_t").is_some());

    let seeds = dir.join("seeds.txt");
    std::fs::write(&seeds, "11\n12\n").unwrap();
    let out = dir.join("batch");
    let batch = Command::new(bin())
        .args(["batch", "--config"])
        .arg(&config)
        .arg("--seeds")
        .arg(&seeds)
        .args(["--archs", "hyprap,sp2", "--out"])
        .arg(&out)
        .arg("--artifacts")
        .arg(&artifacts)
        .args(["--parallel", "2"])
        .output()
        .expect("batch runs");
    assert!(
        batch.status.success(),
        "batch failed: {}",
        String::from_utf8_lossy(&batch.stderr)
    );
    let trials = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 4, "2 seeds x 2 archs plus header");
    assert!(out.join("per_mt.csv").exists());

    let report_dir = dir.join("report");
    let report = Command::new(bin())
        .args(["report", "--in"])
        .arg(&out)
        .arg("--out")
        .arg(&report_dir)
        .output()
        .expect("report runs");
    assert!(
        report.status.success(),
        "report failed: {}",
        String::from_utf8_lossy(&report.stderr)
    );
    assert!(report_dir.join("summary.csv").exists());
    assert!(report_dir.join("summary.md").exists());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = workdir("bad-config");
    let config = dir.join("config.toml");
    std::fs::write(&config, "[router]\ntheta1 = 0.9\ntheta2 = 0.2\n").unwrap();
    let output = Command::new(bin())
        .args(["calibrate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("artifacts"))
        .output()
        .expect("calibrate invoked");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("theta"), "unexpected stderr: {stderr}");
}

#[test]
fn missing_artifacts_exit_nonzero() {
    let dir = workdir("missing-artifacts");
    let config = write_small_config(&dir);
    let output = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--arch", "sp1", "--trace"])
        .arg(dir.join("t.jsonl"))
        .arg("--artifacts")
        .arg(dir.join("nowhere"))
        .output()
        .expect("run invoked");
    assert!(!output.status.success());
}

#[test]
fn unknown_architecture_exits_nonzero() {
    let dir = workdir("bad-arch");
    let config = write_small_config(&dir);
    let output = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--arch", "warp", "--trace"])
        .arg(dir.join("t.jsonl"))
        .arg("--artifacts")
        .arg(dir.join("artifacts"))
        .output()
        .expect("run invoked");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("warp"));
}
