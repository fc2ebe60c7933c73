use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn microsense(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microsense"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MICROSENSE_CONFIG")
        .output()
        .expect("binary runs")
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn report_prints_headline_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = microsense(&["report"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1.5708e-2"), "{text}");
    assert!(text.contains("7.8540e3"), "{text}");
    assert!(dir.path().join("report.csv").exists());
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "report");
    assert!(manifest["duration_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn roc_sweep_has_one_row_per_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = microsense(
        &["roc", "--task-time", "1000", "--required", "1", "--thresholds", "1..20"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(csv.contains("# task_time_s=1000"));
    assert!(csv.lines().any(|l| l == "threshold,p_true,p_false"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 20);
    let p_true: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(p_true.windows(2).all(|w| w[1] <= w[0]));
    let entries = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(entries, 2, "one csv and one manifest");
}

#[test]
fn rates_and_field_headers() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(microsense(&["rates", "--thresholds", "1..3"], dir.path()).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert!(csv.starts_with("threshold,sigma_source_per_s,sigma_background_per_s\n"));
    assert_eq!(data_rows(&csv).len(), 3);

    assert_eq!(microsense(&["field"], dir.path()).status.code(), Some(0));
    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert!(field.starts_with("r_um,x_um,conc_per_um3\n"));
    assert_eq!(data_rows(&field).len(), 21 * 501);
    assert!(dir.path().join("field_manifest.json").exists());
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = microsense(&["rates", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(microsense(&["launch"], dir.path()).status.code(), Some(2));
    assert_eq!(microsense(&["roc", "--thresholds", "9..2"], dir.path()).status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[fluid]\nviscosity_g_cm_s = -1\n").unwrap();
    let out = microsense(&["rates", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("viscosity"));

    let missing = dir.path().join("missing.conf");
    let out = microsense(&["rates", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("tight.conf");
    fs::write(&conf, "[numerics]\ntolerance = 1e-300\n").unwrap();
    let out = microsense(&["field", "--config", conf.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn env_var_supplies_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("env.conf");
    fs::write(&conf, "[control]\nthreshold = 4\n[mission]\ntask_time_s = 20\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_microsense"))
        .args(["roc", "--thresholds", "1..2", "--out"])
        .arg(dir.path())
        .env("MICROSENSE_CONFIG", &conf)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(csv.contains("# task_time_s=20"), "{csv}");
}

#[test]
fn manifest_replays_simulation_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let args = ["simulate", "--case", "background", "--trials", "5000", "--thresholds", "1..4", "--seed", "11"];
    assert_eq!(microsense(&args, &first).status.code(), Some(0));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(first.join("simulate_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 11);
    let conf = dir.path().join("replay.conf");
    fs::write(&conf, manifest["config_text"].as_str().unwrap()).unwrap();

    let second = dir.path().join("second");
    let mut replay: Vec<&str> = args.to_vec();
    replay.extend(["--config", conf.to_str().unwrap()]);
    assert_eq!(microsense(&replay, &second).status.code(), Some(0));
    let a = fs::read_to_string(first.join("simulate.csv")).unwrap();
    let b = fs::read_to_string(second.join("simulate.csv")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("threshold,p_hat,ci_low,ci_high,n_trials,seed\n"));
    assert_eq!(data_rows(&a).len(), 4);
}

#[test]
fn compare_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = microsense(
        &["compare", "--source-trials", "500", "--background-trials", "20000", "--thresholds", "1..3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("case,threshold,p_mc,ci_low,ci_high,p_analytic,ratio,analytic_in_ci\n"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][0], "source");
    assert_eq!(rows[5][0], "background");
    assert!(rows.iter().all(|r| r[7] == "true" || r[7] == "false"));
}
