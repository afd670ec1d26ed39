use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twolayer_core::harness::io::{read_csv, RunStatus, RunSummary, Snapshot, CSV_HEADER};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn twolayer(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_twolayer"));
    cmd.args(args).env_remove("TWOLAYER_OUT_DIR");
    if let Some(p) = env_out {
        cmd.env("TWOLAYER_OUT_DIR", p);
    }
    cmd.output().expect("binary runs")
}

fn smoke_path() -> String {
    configs().join("smoke.toml").display().to_string()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twolayer(&["run", "--config", &smoke_path(), "--out", out, "--override", "T_end=0.01"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let text = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let records = read_csv(&dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(records.len(), 1001);
    assert_eq!(records.last().unwrap().t, 0.01);

    let init = Snapshot::read(&dir.path().join("snapshot_initial.json")).unwrap();
    let fin = Snapshot::read(&dir.path().join("snapshot_final.json")).unwrap();
    assert_eq!((init.n, init.t, fin.t), (16, 0.0, 0.01));

    let summary = RunSummary::read(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.status, RunStatus::Completed);
    assert!(summary.all_checks_passed);
    assert_eq!(summary.config.t_end, 0.01);
    assert_eq!(summary.config.m, Some(136));
}

#[test]
fn environment_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = twolayer(&["run", "--config", &smoke_path(), "--override", "T_end=0.001"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twolayer(
        &["run", "--config", &smoke_path(), "--out", out, "--override", "T_end=0.001", "--override", "checks.entropy_slack=-1"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!RunSummary::read(&dir.path().join("summary.json")).unwrap().all_checks_passed);
}

#[test]
fn integration_failure_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twolayer(
        &[
            "run", "--config", &smoke_path(), "--out", out,
            "--override", "controls.dt_min=1e-3",
            "--override", "controls.dt_init=1e-3",
            "--override", "controls.rel_tol=1e-14",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    let summary = RunSummary::read(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.status, RunStatus::Failed);
    assert!(summary.error.is_some());
    assert!(summary.samples_written >= 1);
    assert!(dir.path().join("timeseries.csv").exists());
}

#[test]
fn bad_input_exits_with_one() {
    let o = twolayer(&["run", "--config", "/nonexistent/cfg.toml"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = twolayer(&["run", "--config", &smoke_path(), "--override", "M=8"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("M = 8"));
}

#[test]
fn decay_check_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twolayer(&["decay-check", "--out", out], None);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("decay.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "measured");
    let o = twolayer(&["decay-check", "--out", out, "--amp", "0"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Stationary"));
}

#[test]
fn experiment_subcommands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let deg = configs().join("degenerate.toml").display().to_string();
    let tfe = configs().join("tfe.toml").display().to_string();
    let short = ["--override", "T_end=0.001", "--override", "sample_count=11"];

    let mut args = vec!["sweep-eps", "--config", deg.as_str(), "--out", out, "--eps", "0.1,0.01"];
    args.extend_from_slice(&short);
    assert_eq!(twolayer(&args, None).status.code(), Some(0));

    let mut args = vec!["refine", "--config", deg.as_str(), "--out", out, "--n-list", "8,16"];
    args.extend_from_slice(&short);
    assert_eq!(twolayer(&args, None).status.code(), Some(0));

    let args = vec!["tfe-check", "--config", tfe.as_str(), "--out", out];
    assert_eq!(twolayer(&args, None).status.code(), Some(0));

    for f in ["sweep.json", "refinement.json", "tfe.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn unsorted_eps_list_is_an_error() {
    let deg = configs().join("degenerate.toml").display().to_string();
    let o = twolayer(&["sweep-eps", "--config", &deg, "--eps", "0.01,0.1"], None);
    assert_eq!(o.status.code(), Some(1));
}
