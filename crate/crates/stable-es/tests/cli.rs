//! End-to-end checks of the command-line surface: subcommands, overrides,
//! and exit codes (0 success, 1 config error, 2 runtime failure).

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stable-es"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn tiny_config(out_dir: &Path) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "task": "task1",
  "optimizer": {{ "population": 4, "elites": 2, "max_iters": 2, "seed": 0 }},
  "k": 1,
  "init": {{ "kind": "uninformative" }},
  "out_dir": "{}",
  "seeds": [0]
}}"#,
        out_dir.display()
    )
}

#[test]
fn train_succeeds_and_writes_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("runs")));
    let out = bin().args(["train", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("seed 0: wrote"), "stdout: {stdout}");
    let run_dir = std::fs::read_dir(tmp.path().join("runs"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    assert!(run_dir.join("curve.csv").exists());
    assert!(run_dir.join("summary.json").exists());
}

#[test]
fn train_rejects_bad_config_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"schema_version": 1, "task": "task9"}"#);
    let out = bin().args(["train", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn train_collision_is_runtime_error_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("runs")));
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let out = bin().args(["train", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to overwrite"));
}

#[test]
fn overrides_change_behavior() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("runs")));
    let out = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--override", "optimizer.max_iters=0", "--seed", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let run_dir = std::fs::read_dir(tmp.path().join("runs"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    assert!(run_dir.to_string_lossy().ends_with("seed5"));
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1, "zero-row curve expected");
}

#[test]
fn gamma_and_entropy_scan_report_fits() {
    let out = bin().args(["gamma", "--dim", "2"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gamma=") && stdout.contains("r_squared="));

    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("scan.csv");
    let out = bin()
        .args(["entropy-scan", "--dim", "7", "--points", "30", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 31);
}

#[test]
fn eval_runs_checkpoint_from_random_initials() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("runs")));
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let run_dir = std::fs::read_dir(tmp.path().join("runs"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let eval_dir = tmp.path().join("eval");
    let out = bin()
        .args(["eval", "--checkpoint"])
        .arg(run_dir.join("best_policy.json"))
        .args(["--task", "task1", "--n-initials", "2", "--out"])
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(eval_dir.join("eval_summary.csv").exists());
    assert!(eval_dir.join("trace_1.csv").exists());
}

#[test]
fn excursion_stats_writes_quantile_table() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("runs")));
    let csv = tmp.path().join("excursions.csv");
    let out = bin()
        .args(["excursion-stats", "--config"])
        .arg(&config)
        .args(["--iters", "2", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("iter,min,q25,median,q75,max,n_samples\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &tiny_config(&tmp.path().join("unused")));
    let mut curves = Vec::new();
    for threads in ["1", "2"] {
        let out = tmp.path().join(format!("runs-{threads}"));
        assert!(bin()
            .env("STABLE_ES_THREADS", threads)
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
        let run_dir = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
        curves.push(std::fs::read(run_dir.join("curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1], "scheduling must not change results");
}

#[test]
fn thread_cap_env_var_is_validated() {
    let out = bin()
        .env("STABLE_ES_THREADS", "zero")
        .args(["gamma", "--dim", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .env("STABLE_ES_THREADS", "1")
        .args(["gamma", "--dim", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
}
