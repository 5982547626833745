use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fusim::commands::{Report, SimulationReport, UnlearnSummary};
use fusim::{cmd_report, cmd_train, cmd_unlearn, CliError, ExperimentConfig, RunManifest, MANIFEST_FILE};
use fusim_core::fed::StorageMode;
use fusim_core::unlearn::Method;

const SMALL: &str = r#"{
    "total_clients": 12, "clients": 4, "shards": 2, "rounds": 2, "local_epochs": 2,
    "dataset": {"num_classes": 3, "samples_per_class": 20, "feature_dim": 4},
    "training": {"hidden": [8]},
    "simulate": {"shards": [1, 2], "requests": [1, 2], "trials": 2000}
}"#;

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig { out_dir: out.to_path_buf(), ..ExperimentConfig::from_json(SMALL).unwrap() }
}

fn fusim(args: &[&str], dir: &Path, out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fusim"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "warn").env_remove("FUSIM_OUT");
    if let Some(o) = out_env {
        cmd.env("FUSIM_OUT", o);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"{"shards": 3}"#);
    let o = fusim(&["train", "--config", "config.json"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shards"), "{}", stderr(&o));

    write_config(tmp.path(), r#"{"nonsense": true}"#);
    assert_eq!(fusim(&["train", "--config", "config.json"], tmp.path(), None).status.code(), Some(2));
    assert_eq!(fusim(&["report"], tmp.path(), None).status.code(), Some(2));
}

#[test]
fn missing_history_names_the_expected_file() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let o = fusim(&["unlearn", "--config", "config.json", "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train/manifest.json"), "{}", stderr(&o));
}

#[test]
fn fe_refuses_sharded_history() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    assert!(fusim(&["train", "--config", "config.json", "--out", "o"], tmp.path(), None).status.success());
    let o = fusim(&["unlearn", "--config", "config.json", "--out", "o", "--method", "fe"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FE"), "{}", stderr(&o));
}

#[test]
fn emptied_shard_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        SMALL.replace("\"shards\": 2,", "\"shards\": 2, \"workload\": {\"distribution\": \"adaptive\", \"k\": 2},");
    write_config(tmp.path(), &text);
    assert!(fusim(&["train", "--config", "config.json", "--out", "o"], tmp.path(), None).status.success());
    let o = fusim(&["unlearn", "--config", "config.json", "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let env_out = tmp.path().join("from-env");
    let o =
        fusim(&["train", "--config", "config.json", "--seed", "3", "--mode", "uncoded"], tmp.path(), Some(&env_out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("seed-3/s2-uncoded/train").join(MANIFEST_FILE).exists());
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn rerun_is_a_no_op_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let first = cmd_train(&cfg, false).unwrap();
    fs::write(cfg.train_dir().join("marker"), b"x").unwrap();
    let second = cmd_train(&cfg, false).unwrap();
    assert_eq!(first, second);
    assert!(cfg.train_dir().join("marker").exists());
    let forced = cmd_train(&cfg, true).unwrap();
    assert_eq!(forced.artifacts, first.artifacts);
    assert!(!cfg.train_dir().join("marker").exists());

    let changed = ExperimentConfig { rounds: 3, ..cfg.clone() };
    assert!(matches!(cmd_train(&changed, false), Err(CliError::Config(_))));
}

#[test]
fn zero_rounds_trains_initialization_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { rounds: 0, ..small(tmp.path()) };
    let m = cmd_train(&cfg, false).unwrap();
    assert!(m.artifacts.iter().any(|a| a.path == "models/shard_0.bin"));
    let u = cmd_unlearn(&cfg, Method::Se, false).unwrap();
    let o: UnlearnSummary =
        serde_json::from_slice(&fs::read(cfg.unlearn_dir(Method::Se).join("outcome.json")).unwrap()).unwrap();
    assert_eq!(o.ledger.client_epochs, 0);
    assert_eq!(u.method, Some(Method::Se));
}

#[test]
fn single_request_touches_one_shard() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in [StorageMode::Uncoded, StorageMode::Coded] {
        let cfg = ExperimentConfig { storage: mode, ..small(tmp.path()) };
        cmd_train(&cfg, false).unwrap();
        cmd_unlearn(&cfg, Method::Se, false).unwrap();
        let audit: fusim::commands::Audit =
            serde_json::from_slice(&fs::read(cfg.unlearn_dir(Method::Se).join("audit.json")).unwrap()).unwrap();
        let shard_files: Vec<_> = audit.history_files.iter().filter(|f| f.starts_with("history/")).collect();
        assert_eq!(shard_files.len(), 1, "{mode:?}");
        let shards: std::collections::BTreeSet<_> =
            audit.stage_events.iter().chain(&audit.history_events).map(|e| e.shard).collect();
        assert_eq!(shards.len(), 1, "{mode:?}");
    }
}

#[test]
fn report_has_one_row_per_method_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for seed in [1, 2] {
        let cfg = ExperimentConfig { seed, ..small(tmp.path()) };
        cmd_train(&cfg, false).unwrap();
        for method in [Method::Se, Method::Fr] {
            cmd_unlearn(&cfg, method, false).unwrap();
            manifests.push(cfg.unlearn_dir(method).join(MANIFEST_FILE));
        }
        let flat = ExperimentConfig { seed, shards: 1, storage: StorageMode::Uncoded, ..small(tmp.path()) };
        cmd_train(&flat, false).unwrap();
        cmd_unlearn(&flat, Method::Fe, false).unwrap();
        manifests.push(flat.unlearn_dir(Method::Fe).join(MANIFEST_FILE));
    }
    let m = cmd_report(&manifests, tmp.path(), false).unwrap();
    assert_eq!(m.inputs.len(), 6);
    let report: Report = serde_json::from_slice(&fs::read(tmp.path().join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.storage.len(), 2);
    assert!(report.storage.iter().all(|s| s.coded_bytes < s.fe_bytes));
    let csv = fs::read_to_string(tmp.path().join("report/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let other = ExperimentConfig { rounds: 3, ..small(&tmp.path().join("other")) };
    cmd_train(&other, false).unwrap();
    cmd_unlearn(&other, Method::Se, false).unwrap();
    let mixed = vec![manifests[0].clone(), other.unlearn_dir(Method::Se).join(MANIFEST_FILE)];
    assert!(matches!(cmd_report(&mixed, &tmp.path().join("mixed"), false), Err(CliError::Config(_))));
    assert!(matches!(cmd_report(&[], tmp.path(), false), Err(CliError::Config(_))));
}

#[test]
fn simulate_checks_error_budget() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"{"clients": 8, "shards": 5, "simulate": {"mu": 0.25, "trials": 100}}"#);
    let o = fusim(&["simulate", "--config", "config.json", "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu"), "{}", stderr(&o));

    let cfg = small(tmp.path());
    let m = fusim::cmd_simulate(&cfg, false).unwrap();
    assert_eq!(m.artifacts.len(), 2);
    let dir = tmp.path().join("seed-0/simulate");
    let r: SimulationReport = serde_json::from_slice(&fs::read(dir.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 4);
    let single = r.rows.iter().find(|x| x.shards == 1 && x.requests == 1).unwrap();
    assert_eq!(single.sequential_theory, single.concurrent_theory);
    assert!(RunManifest::read(&dir.join(MANIFEST_FILE)).unwrap().verify(&dir));
}
