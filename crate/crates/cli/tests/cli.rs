use std::path::PathBuf;
use std::process::Command;

use lbmesh_cli::output::HEADER;
use lbmesh_cli::{parse_config, preset, run_experiment, run_to_csv, ConfigError, Rep};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lbmesh"))
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("lbmesh-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

const SMALL: &str = r#"{"experiment_id": "small", "family": "single-server", "policy": {"kind": "jsq_d", "d": 2},
    "n": [20, 40], "load": {"rule": "fixed", "lambda": 0.8}, "horizon": 50, "replications": 3, "seed": 5}"#;

#[test]
fn presets_command_lists_every_preset() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(names, lbmesh_cli::list_presets());
}

#[test]
fn run_writes_csv_with_exact_header() {
    let dir = scratch("run");
    let cfg = dir.join("small.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("small.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER);
    assert!(text.lines().skip(1).all(|l| l.starts_with("small,")));
    assert!(!dir.join("small.csv.partial").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn run_by_preset_name() {
    let dir = scratch("preset");
    let out = bin().args(["run", "--preset", "jsq-d-ode", "--out"]).arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(dir.join("jsq-d-ode.csv")).unwrap().contains("q1@t=10,"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_inputs_fail_with_messages() {
    let out = bin().args(["run", "--preset", "missing"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
    let dir = scratch("bad");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, SMALL.replace("0.8", "1.3")).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("subcritical load required"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn replicate_means_follow_runs() {
    let cfg = parse_config(SMALL).unwrap().config;
    let rows = run_experiment(&cfg).unwrap();
    let per_run = rows.iter().filter(|r| r.rep != Rep::Mean && r.n == 20 && r.metric == "mean_wait").count();
    assert_eq!(per_run, 3);
    let mean = rows.iter().find(|r| r.rep == Rep::Mean && r.n == 20 && r.metric == "mean_wait").unwrap();
    let vals: Vec<f64> =
        rows.iter().filter(|r| r.rep != Rep::Mean && r.n == 20 && r.metric == "mean_wait").map(|r| r.value).collect();
    assert!((mean.value - vals.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!(mean.stderr.is_some());
    let first_mean = rows.iter().position(|r| r.rep == Rep::Mean).unwrap();
    assert!(rows[first_mean..].iter().all(|r| r.rep == Rep::Mean));
}

#[test]
fn csv_is_independent_of_worker_count() {
    let cfg = parse_config(SMALL).unwrap().config;
    let serial = run_to_csv(&cfg).unwrap();
    std::env::set_var("LBMESH_WORKERS", "3");
    let parallel = run_to_csv(&cfg).unwrap();
    std::env::remove_var("LBMESH_WORKERS");
    assert_eq!(serial, parallel);
    let other_seed = parse_config(&SMALL.replace("\"seed\": 5", "\"seed\": 6")).unwrap().config;
    assert_ne!(run_to_csv(&other_seed).unwrap(), serial);
}

#[test]
fn every_family_runs_at_small_scale() {
    let configs = [
        r#"{"experiment_id": "f1", "family": "infinite-server", "policy": {"kind": "jsq"}, "n": [30], "buffer": 2,
            "load": {"rule": "pooled-halfin-whitt", "k": 2, "beta": 1}, "horizon": 20}"#,
        r#"{"experiment_id": "f2", "family": "delayed-off", "policy": {"kind": "delayedoff", "mu": 0.5, "nu": 0.5},
            "n": [30], "load": {"rule": "fixed", "lambda": 0.4}, "horizon": 20, "power": {"start": "idle-off"}}"#,
        r#"{"experiment_id": "f3", "family": "tabs", "policy": {"kind": "tabs", "mu": 0.5, "nu": 0.5}, "n": [30],
            "load": {"rule": "periodic", "base": 0.4, "amplitude": 0.2, "period": 10}, "horizon": 20, "sample_interval": 1}"#,
        r#"{"experiment_id": "f4", "family": "graph", "policy": {"kind": "graph_jsq_d", "d": 2}, "n": [36],
            "topology": {"kind": "grid"}, "arrivals": "per-vertex", "load": {"rule": "fixed", "lambda": 0.5}, "horizon": 20}"#,
        r#"{"experiment_id": "f5", "family": "sde", "horizon": 50, "dt": 0.01, "sde": {"betas": [1], "min_cycles": 1}}"#,
        r#"{"experiment_id": "f6", "family": "ode", "policy": {"kind": "jsq"}, "load": {"rule": "fixed", "lambda": 0.7},
            "horizon": 5, "dt": 0.01, "ode": {"model": "jsq", "levels": 5}}"#,
        r#"{"experiment_id": "f7", "family": "coupling", "n": [10], "buffer": 2, "load": {"rule": "fixed", "lambda": 1.5},
            "horizon": 10, "coupling": {"scheme": "t", "policy_a": "jsq", "policy_b": "cjsq(2)", "order": "level-first"}}"#,
    ];
    for text in configs {
        let cfg = parse_config(text).unwrap_or_else(|e| panic!("{text}: {e}")).config;
        let csv = run_to_csv(&cfg).unwrap_or_else(|e| panic!("{}: {e}", cfg.experiment_id));
        assert!(csv.lines().count() > 3, "{}", cfg.experiment_id);
    }
}

#[test]
fn preset_lookup_errors() {
    assert!(matches!(preset("nope"), Err(ConfigError::Invalid(_))));
    assert!(preset("mm1-random").is_ok());
}
