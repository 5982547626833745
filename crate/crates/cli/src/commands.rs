use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fusim_core::fed::{
    checkpoint, contiguous_shards, train_stage, AccessEvent, HistoryStore, ShardConfig, Stage, StorageMode,
    StorageReport,
};
use fusim_core::mia::{unlearning_effectiveness, Effectiveness};
use fusim_core::model::{evaluate, make_synthetic_dataset, partition, Dataset, Layout, Mlp, PartitionSpec};
use fusim_core::rng::{stream, stream_seed, tag};
use fusim_core::sim::{
    coded_throughput, generate_workload, monte_carlo, simulate_stage, storage_efficiency_bounds, write_csv, Arrival,
    CostLedger, Distribution, LedgerRow, MonteCarloSpec, RequestFailure, SimOptions, StorageBounds, UnlearnRequest,
    WorkloadSpec,
};
use fusim_core::unlearn::{run_baseline_fr, Method, UnlearnJob};
use fusim_core::{ClientId, Exec, ParamVector, ShardId};
use log::info;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::{digest, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};

/// The cohort stage and the data needed to evaluate it.
pub struct World {
    pub stage: Stage,
    /// Cohort members' local data.
    pub data: BTreeMap<ClientId, Dataset>,
    /// Pooled data of the clients left out of the cohort.
    pub heldout: Option<Dataset>,
}

/// Regenerates the population, draws the cohort and shards it. Client ids
/// are population indices.
pub fn build_world(cfg: &ExperimentConfig) -> CliResult<World> {
    let d = &cfg.dataset;
    let full = make_synthetic_dataset(d.num_classes, d.samples_per_class, d.feature_dim, d.cluster_spread, cfg.seed)?;
    let spec = PartitionSpec {
        mode: cfg.partition.mode,
        num_clients: cfg.total_clients,
        primary_fraction: cfg.partition.primary_fraction,
        seed: cfg.seed,
    };
    let mut parts: Vec<Option<Dataset>> = partition(&full, &spec)?.into_iter().map(Some).collect();
    let mut cohort = index::sample(&mut stream(&[tag::COHORT, cfg.seed]), cfg.total_clients, cfg.clients).into_vec();
    cohort.sort_unstable();
    let shards = contiguous_shards(cohort.len(), cfg.shards)?
        .into_iter()
        .enumerate()
        .map(|(s, members)| ShardConfig {
            shard_id: s as ShardId,
            client_ids: members.iter().map(|&i| cohort[i as usize] as ClientId).collect(),
            rounds: cfg.rounds,
            local_epochs: cfg.local_epochs,
            server_id: s as u32,
        })
        .collect();
    let data: BTreeMap<ClientId, Dataset> =
        cohort.iter().map(|&c| (c as ClientId, parts[c].take().expect("cohort indices are distinct"))).collect();
    let rest: Vec<Dataset> = parts.into_iter().flatten().collect();
    let heldout = if rest.is_empty() { None } else { Some(Dataset::concat(&rest)?) };
    let stage = Stage::new(0, shards, data.clone(), Mlp::new(&cfg.mlp())?, cfg.sgd(), cfg.seed)?;
    Ok(World { stage, data, heldout })
}

fn write_model(path: &Path, params: &ParamVector) -> CliResult<()> {
    fs::write(path, params.to_le_bytes())?;
    Ok(())
}

pub fn read_model(path: &Path, layout: &Arc<Layout>) -> CliResult<ParamVector> {
    let bytes =
        fs::read(path).map_err(|e| CliError::MissingInput(format!("cannot read model {}: {e}", path.display())))?;
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(ParamVector::new(values, Arc::clone(layout))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(path.to_path_buf())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::MissingInput(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Returns the existing manifest when `dir` already holds an intact run of
/// the same config. Clears the directory otherwise.
fn resume(dir: &Path, config_hash: &str, force: bool) -> CliResult<Option<RunManifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !force && path.exists() {
        let m = RunManifest::read(&path)?;
        if m.config_hash != config_hash {
            return Err(CliError::Config(format!(
                "{} holds a run with a different config; pass --force to overwrite it",
                dir.display()
            )));
        }
        if m.verify(dir) {
            info!("{} is up to date", dir.display());
            return Ok(Some(m));
        }
        info!("{} has stale artifacts, rerunning", dir.display());
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(None)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub mode: StorageMode,
    pub shards: usize,
    pub rounds: u32,
    pub dim: usize,
    pub shard_clients: BTreeMap<ShardId, Vec<ClientId>>,
    /// Per-shard model accuracy on the whole cohort's data.
    pub accuracy: BTreeMap<ShardId, f64>,
    pub storage: StorageReport,
}

/// Trains every shard and persists histories, final models and a summary.
pub fn cmd_train(cfg: &ExperimentConfig, force: bool) -> CliResult<RunManifest> {
    cfg.validate_training()?;
    let dir = cfg.train_dir();
    if let Some(m) = resume(&dir, &cfg.training_hash(), force)? {
        return Ok(m);
    }
    let world = build_world(cfg)?;
    let stage = &world.stage;
    let mut history = match cfg.storage {
        StorageMode::Uncoded => HistoryStore::uncoded(stage),
        StorageMode::Coded => HistoryStore::coded(stage, cfg.codec()?, stream_seed(&[tag::KEYS, cfg.seed]))?,
    };
    let models = train_stage(stage, &mut history)?;
    let mut files = checkpoint::save(&history, &dir)?;
    fs::create_dir_all(dir.join("models"))?;
    let all = Dataset::concat(world.data.values())?;
    let mut accuracy = BTreeMap::new();
    for (&s, p) in &models {
        let path = dir.join("models").join(format!("shard_{s}.bin"));
        write_model(&path, p)?;
        files.push(path);
        accuracy.insert(s, evaluate(stage.model(), p, &all)?.accuracy);
    }
    let summary = TrainSummary {
        seed: cfg.seed,
        mode: cfg.storage,
        shards: cfg.shards,
        rounds: cfg.rounds,
        dim: stage.model().dim(),
        shard_clients: stage.shards().iter().map(|s| (s.shard_id, s.client_ids.clone())).collect(),
        accuracy,
        storage: history.storage_report(),
    };
    files.push(write_json(&dir.join("summary.json"), &summary)?);
    files.push(write_json(&dir.join("config.json"), &ExperimentConfig { out_dir: PathBuf::new(), ..cfg.clone() })?);
    let mut m = RunManifest::new("train", cfg.training_hash(), cfg.comparable_hash(), cfg.seed);
    m.stamp(&dir, files)?;
    m.write(&dir)?;
    info!("trained {} shards over {} rounds into {}", cfg.shards, cfg.rounds, dir.display());
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardEval {
    pub shard_id: ShardId,
    pub erased: Vec<ClientId>,
    pub accuracy_unlearned: f64,
    pub accuracy_scratch: f64,
    pub accuracy_original: f64,
    /// Attack on the unlearned model against the retrained-from-scratch one.
    pub mia: Option<Effectiveness>,
    /// Attack on the never-unlearned model against the scratch one.
    pub mia_original: Option<Effectiveness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnSummary {
    pub method: Method,
    pub seed: u64,
    pub mode: StorageMode,
    pub shards: usize,
    pub arrival: Arrival,
    pub distribution: Distribution,
    pub k: usize,
    pub requests: Vec<UnlearnRequest>,
    pub ledger: LedgerRow,
    pub passes: u64,
    pub metadata_bytes: u64,
    pub failures: Vec<RequestFailure>,
    pub evals: Vec<ShardEval>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub f1_scratch: Option<f64>,
    pub f1_original: Option<f64>,
    pub mia_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub history_files: Vec<String>,
    pub stage_events: Vec<AccessEvent>,
    pub history_events: Vec<AccessEvent>,
    pub slice_retrievals: Vec<fusim_core::coded::AuditEntry>,
}

/// Serves the configured workload against a trained run with `method`,
/// then evaluates accuracy and membership leakage of the result.
pub fn cmd_unlearn(cfg: &ExperimentConfig, method: Method, force: bool) -> CliResult<RunManifest> {
    cfg.validate_training()?;
    if method == Method::Fe && cfg.shards != 1 {
        return Err(CliError::Config(format!("shards: FE needs a single-shard history, got {}", cfg.shards)));
    }
    let train_dir = cfg.train_dir();
    let train_manifest = train_dir.join(MANIFEST_FILE);
    if !train_manifest.exists() {
        return Err(CliError::MissingInput(format!(
            "no training manifest at {}; run `fusim train` with the same config first",
            train_manifest.display()
        )));
    }
    let tm = RunManifest::read(&train_manifest)?;
    if tm.config_hash != cfg.training_hash() {
        return Err(CliError::Config(format!("{} was trained with a different config", train_dir.display())));
    }
    if !tm.verify(&train_dir) {
        return Err(CliError::MissingInput(format!(
            "training artifacts in {} do not match their manifest; rerun `fusim train --force`",
            train_dir.display()
        )));
    }
    let dir = cfg.unlearn_dir(method);
    if let Some(mut m) = resume(&dir, &cfg.hash(), force)? {
        m.method = Some(method);
        return Ok(m);
    }
    let summary: TrainSummary = read_json(&train_dir.join("summary.json"))?;
    let world = build_world(cfg)?;
    let stage = &world.stage;
    let w = cfg.workload;
    let requests = generate_workload(
        &WorkloadSpec { arrival: w.arrival, distribution: w.distribution, k: w.k, seed: cfg.seed },
        stage,
    )?;
    let impacted: Vec<ShardId> = requests.iter().map(|r| r.shard_id).collect::<BTreeSet<_>>().into_iter().collect();
    let layout = stage.model().layout();
    let (history, history_files) = if method == Method::Fr {
        (HistoryStore::uncoded(stage), Vec::new())
    } else {
        let files = checkpoint::files_for(&train_dir, &impacted).map_err(|e| CliError::MissingInput(e.to_string()))?;
        let h = checkpoint::load(&train_dir, layout, &impacted).map_err(|e| match e {
            fusim_core::Error::Io(io) => CliError::MissingInput(format!("history checkpoint unavailable: {io}")),
            other => CliError::Core(other),
        })?;
        (h, files)
    };
    stage.access_log().clear();
    let options = SimOptions {
        run_id: format!("{}-seed{}", method.as_str().to_lowercase(), cfg.seed),
        method,
        arrival: w.arrival,
        distribution: w.distribution,
        local_epoch_ratio: cfg.ratio,
        network: cfg.network,
        record_wall_clock: cfg.record_wall_clock,
    };
    let mut result = simulate_stage(stage, &history, &requests, &options)?;
    if method != Method::Fr {
        result.ledger.storage_bytes = summary.storage.server_payload_bytes;
        result.ledger.metadata_bytes = summary.storage.server_metadata_bytes;
    }
    let audit = Audit {
        history_files: history_files
            .iter()
            .map(|p| p.strip_prefix(&train_dir).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect(),
        stage_events: stage.access_log().events(),
        history_events: history.access_log().events(),
        slice_retrievals: history.registry().map(|r| r.audit_log()).unwrap_or_default(),
    };

    fs::create_dir_all(dir.join("models"))?;
    let mut files =
        vec![write_json(&dir.join("audit.json"), &audit)?, write_json(&dir.join("ledger.json"), &result.ledger)?];
    let ledger_csv = dir.join("ledger.csv");
    write_csv(&[result.ledger.row()], fs::File::create(&ledger_csv)?)?;
    files.push(ledger_csv);

    let evals = evaluate_shards(cfg, &world, &train_dir, &result.models, &result.removed, method)?;
    for (&s, p) in &result.models {
        let path = dir.join("models").join(format!("shard_{s}.bin"));
        write_model(&path, p)?;
        files.push(path);
    }
    let ledger: &CostLedger = &result.ledger;
    let out = UnlearnSummary {
        method,
        seed: cfg.seed,
        mode: cfg.storage,
        shards: cfg.shards,
        arrival: w.arrival,
        distribution: w.distribution,
        k: w.k,
        requests,
        ledger: ledger.row(),
        passes: ledger.total_passes(),
        metadata_bytes: ledger.metadata_bytes,
        failures: ledger.failures.clone(),
        accuracy: mean(evals.iter().map(|e| e.accuracy_unlearned)),
        f1: mean(evals.iter().filter_map(|e| e.mia.map(|m| m.f1_unlearned))),
        f1_scratch: mean(evals.iter().filter_map(|e| e.mia.map(|m| m.f1_scratch))),
        f1_original: mean(evals.iter().filter_map(|e| e.mia_original.map(|m| m.f1_unlearned))),
        mia_delta: mean(evals.iter().filter_map(|e| e.mia.map(|m| m.delta))),
        evals,
    };
    files.push(write_json(&dir.join("outcome.json"), &out)?);
    if !ledger.failures.is_empty() {
        let msgs: Vec<String> = ledger.failures.iter().map(|f| format!("shard {}: {}", f.shard_id, f.error)).collect();
        return Err(CliError::Unlearning(msgs.join("; ")));
    }
    let mut m = RunManifest::new("unlearn", cfg.hash(), cfg.comparable_hash(), cfg.seed);
    m.method = Some(method);
    m.inputs.push(train_manifest);
    m.stamp(&dir, files)?;
    m.write(&dir)?;
    info!("{} served {} request(s) in {}", method, out.requests.len(), dir.display());
    Ok(m)
}

fn evaluate_shards(
    cfg: &ExperimentConfig,
    world: &World,
    train_dir: &Path,
    models: &BTreeMap<ShardId, ParamVector>,
    removed: &BTreeMap<ShardId, BTreeSet<ClientId>>,
    method: Method,
) -> CliResult<Vec<ShardEval>> {
    let stage = &world.stage;
    let model = stage.model();
    let gone: BTreeSet<ClientId> = removed.values().flatten().copied().collect();
    let retained = Dataset::concat(world.data.iter().filter(|(c, _)| !gone.contains(c)).map(|(_, d)| d))?;
    let split_seed = stream_seed(&[tag::MIA, cfg.seed]);
    let mut evals = Vec::new();
    for (&s, unlearned) in models {
        let erased_ids = &removed[&s];
        let original = read_model(&train_dir.join("models").join(format!("shard_{s}.bin")), model.layout())?;
        let scratch = if method == Method::Fr {
            unlearned.clone()
        } else {
            run_baseline_fr(stage, &UnlearnJob::new(s, erased_ids.iter().copied(), cfg.rounds, cfg.ratio)?)?.params
        };
        let erased = Dataset::concat(erased_ids.iter().map(|c| &world.data[c]))?;
        let attack = |p: &ParamVector| -> CliResult<Option<Effectiveness>> {
            match &world.heldout {
                Some(h) => Ok(Some(unlearning_effectiveness(model, p, &scratch, &erased, h, split_seed)?)),
                None => Ok(None),
            }
        };
        evals.push(ShardEval {
            shard_id: s,
            erased: erased_ids.iter().copied().collect(),
            accuracy_unlearned: evaluate(model, unlearned, &retained)?.accuracy,
            accuracy_scratch: evaluate(model, &scratch, &retained)?.accuracy,
            accuracy_original: evaluate(model, &original, &retained)?.accuracy,
            mia: attack(unlearned)?,
            mia_original: attack(&original)?,
        });
    }
    Ok(evals)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    #[serde(rename = "S")]
    pub shards: usize,
    #[serde(rename = "K")]
    pub requests: usize,
    pub trials: usize,
    pub sequential_theory: f64,
    pub sequential_measured: f64,
    pub concurrent_theory: f64,
    pub concurrent_measured: f64,
    pub sequential_rel_error: f64,
    pub concurrent_rel_error: f64,
    pub max_hit_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    #[serde(rename = "C")]
    pub clients: usize,
    #[serde(rename = "S")]
    pub shards: usize,
    pub mu: f64,
    pub bounds: StorageBounds,
    /// Relative to a unit decoding constant.
    pub coded_throughput: Option<f64>,
    pub rows: Vec<SimulationRow>,
}

/// Monte Carlo of the request-time models over the configured grid, plus
/// the storage bounds of the configured layout. No model is trained.
pub fn cmd_simulate(cfg: &ExperimentConfig, force: bool) -> CliResult<RunManifest> {
    cfg.validate()?;
    let sim = &cfg.simulate;
    let bounds = storage_efficiency_bounds(cfg.clients, cfg.shards, sim.mu)
        .map_err(|e| CliError::Config(format!("simulate.mu: {e}")))?;
    let dir = cfg.out_dir.join(format!("seed-{}", cfg.seed)).join("simulate");
    let hash = digest(&(sim, cfg.clients, cfg.shards, cfg.seed));
    if let Some(m) = resume(&dir, &hash, force)? {
        return Ok(m);
    }
    let mut rows = Vec::new();
    for &s in &sim.shards {
        for &k in &sim.requests {
            let spec = MonteCarloSpec {
                shards: s,
                requests: k,
                pass_cost: sim.pass_cost,
                trials: sim.trials,
                jitter: sim.jitter,
                seed: cfg.seed,
            };
            let r = monte_carlo(&spec, Exec::default())?;
            rows.push(SimulationRow {
                shards: s,
                requests: k,
                trials: sim.trials,
                sequential_theory: r.sequential_theory,
                sequential_measured: r.sequential_measured,
                concurrent_theory: r.concurrent_theory,
                concurrent_measured: r.concurrent_measured,
                sequential_rel_error: r.sequential_rel_error(),
                concurrent_rel_error: r.concurrent_rel_error(),
                max_hit_error: r.max_hit_error(),
            });
        }
    }
    let report = SimulationReport {
        clients: cfg.clients,
        shards: cfg.shards,
        mu: sim.mu,
        bounds,
        coded_throughput: coded_throughput(cfg.clients, cfg.shards, 1.0).ok(),
        rows,
    };
    let csv_path = dir.join("montecarlo.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let files = vec![csv_path, write_json(&dir.join("simulation.json"), &report)?];
    let mut m = RunManifest::new("simulate", hash, cfg.comparable_hash(), cfg.seed);
    m.stamp(&dir, files)?;
    m.write(&dir)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub seed: u64,
    pub mode: StorageMode,
    #[serde(rename = "S")]
    pub shards: usize,
    pub arrival: Arrival,
    pub distribution: Distribution,
    #[serde(rename = "K")]
    pub k: usize,
    pub accuracy: Option<f64>,
    pub client_epochs: u64,
    pub comm_seconds: f64,
    pub storage_bytes: u64,
    pub metadata_bytes: u64,
    pub f1: Option<f64>,
    pub mia_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageComparison {
    pub seed: u64,
    /// Server payload plus metadata of the coded run.
    pub coded_bytes: u64,
    pub fe_bytes: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub storage: Vec<StorageComparison>,
}

/// Consolidates unlearning runs into one CSV and JSON report.
pub fn cmd_report(manifests: &[PathBuf], out_dir: &Path, force: bool) -> CliResult<RunManifest> {
    if manifests.is_empty() {
        return Err(CliError::Config("report needs at least one manifest".into()));
    }
    let mut loaded = Vec::new();
    for path in manifests {
        let m = RunManifest::read(path)?;
        if m.command != "unlearn" {
            return Err(CliError::Config(format!("{} is a {} manifest, expected unlearn", path.display(), m.command)));
        }
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        if !m.verify(&dir) {
            return Err(CliError::MissingInput(format!("artifacts next to {} do not match it", path.display())));
        }
        loaded.push((path.clone(), dir, m));
    }
    let first = &loaded[0];
    if let Some((p, _, _)) = loaded.iter().find(|(_, _, m)| m.comparable_hash != first.2.comparable_hash) {
        return Err(CliError::Config(format!(
            "{} and {} come from incompatible configs",
            first.0.display(),
            p.display()
        )));
    }
    let dir = out_dir.join("report");
    let mut inputs: Vec<(&str, &str)> =
        loaded.iter().map(|(_, _, m)| (m.config_hash.as_str(), m.comparable_hash.as_str())).collect();
    inputs.sort_unstable();
    let hash = digest(&inputs);
    if let Some(m) = resume(&dir, &hash, force)? {
        return Ok(m);
    }
    let mut rows = Vec::new();
    for (_, d, m) in &loaded {
        let o: UnlearnSummary = read_json(&m.artifact_path(d, "outcome.json")?)?;
        rows.push(ReportRow {
            method: o.method,
            seed: o.seed,
            mode: o.mode,
            shards: o.shards,
            arrival: o.arrival,
            distribution: o.distribution,
            k: o.k,
            accuracy: o.accuracy,
            client_epochs: o.ledger.client_epochs,
            comm_seconds: o.ledger.comm_seconds,
            storage_bytes: o.ledger.storage_bytes,
            metadata_bytes: o.metadata_bytes,
            f1: o.f1,
            mia_delta: o.mia_delta,
        });
    }
    rows.sort_by(|a, b| {
        (a.seed, a.method.as_str(), a.shards, a.mode.as_str(), a.arrival.as_str(), a.distribution.as_str(), a.k).cmp(&(
            b.seed,
            b.method.as_str(),
            b.shards,
            b.mode.as_str(),
            b.arrival.as_str(),
            b.distribution.as_str(),
            b.k,
        ))
    });
    let mut storage = Vec::new();
    let seeds: BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    for seed in seeds {
        let fe = rows.iter().find(|r| r.seed == seed && r.method == Method::Fe);
        let coded = rows.iter().find(|r| r.seed == seed && r.method == Method::Se && r.mode == StorageMode::Coded);
        if let (Some(fe), Some(c)) = (fe, coded) {
            let coded_bytes = c.storage_bytes + c.metadata_bytes;
            storage.push(StorageComparison {
                seed,
                coded_bytes,
                fe_bytes: fe.storage_bytes,
                ratio: coded_bytes as f64 / fe.storage_bytes.max(1) as f64,
            });
        }
    }
    let report = Report { rows, storage };
    let csv_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let files = vec![csv_path, write_json(&dir.join("report.json"), &report)?];
    let mut m = RunManifest::new("report", hash, first.2.comparable_hash.clone(), first.2.seed);
    m.inputs = manifests.to_vec();
    m.stamp(&dir, files)?;
    m.write(&dir)?;
    Ok(m)
}
