use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Arrival, CostLedger, Distribution, NetworkModel, RequestFailure, UnlearnRequest};
use crate::error::Result;
use crate::fed::{HistoryStore, Stage};
use crate::model::ParamVector;
use crate::unlearn::{run_baseline_fe, run_baseline_fr, run_unlearning_se, Method, UnlearnJob, UnlearnOutcome};
use crate::{ClientId, ShardId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub run_id: String,
    pub method: Method,
    pub arrival: Arrival,
    pub distribution: Distribution,
    pub local_epoch_ratio: f64,
    pub network: NetworkModel,
    /// Measure elapsed time; off by default so ledgers are reproducible.
    pub record_wall_clock: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            method: Method::Se,
            arrival: Arrival::default(),
            distribution: Distribution::default(),
            local_epoch_ratio: 2.0,
            network: NetworkModel::default(),
            record_wall_clock: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub ledger: CostLedger,
    pub outcomes: Vec<UnlearnOutcome>,
    /// Latest unlearned model per retrained shard.
    pub models: BTreeMap<ShardId, ParamVector>,
    /// Clients removed per shard by successful passes.
    pub removed: BTreeMap<ShardId, BTreeSet<ClientId>>,
}

fn run_job(stage: &Stage, history: &HistoryStore, job: &UnlearnJob, method: Method) -> Result<UnlearnOutcome> {
    match method {
        Method::Se => run_unlearning_se(stage, history, job),
        Method::Fe => run_baseline_fe(stage, history, job),
        Method::Fr => run_baseline_fr(stage, job),
    }
}

/// Executes a workload against trained histories and ledgers the cost.
///
/// Requests are routed by the stage's own shard membership, so the same
/// workload can be replayed on an unsharded stage. Sequential requests each
/// trigger one pass that also excludes clients removed earlier in the run;
/// concurrent requests are batched into one pass per impacted shard. A
/// failing pass is ledgered and skipped.
pub fn simulate_stage(
    stage: &Stage,
    history: &HistoryStore,
    requests: &[UnlearnRequest],
    options: &SimOptions,
) -> Result<SimulationResult> {
    options.network.validate()?;
    let start = Instant::now();
    let report = history.storage_report();
    let mut ledger = CostLedger {
        run_id: options.run_id.clone(),
        mode: history.mode(),
        arrival: options.arrival,
        distribution: options.distribution,
        shards: stage.num_shards(),
        clients: stage.num_clients(),
        requests: requests.len(),
        storage_bytes: if options.method == Method::Fr { 0 } else { report.server_payload_bytes },
        metadata_bytes: if options.method == Method::Fr { 0 } else { report.server_metadata_bytes },
        ..Default::default()
    };
    let mut result = SimulationResult {
        ledger: CostLedger::default(),
        outcomes: Vec::new(),
        models: BTreeMap::new(),
        removed: BTreeMap::new(),
    };

    let route = |r: &UnlearnRequest| -> Result<ShardId> { stage.shard_of(r.client_id) };
    let rounds = |shard: ShardId| -> Result<u32> { Ok(stage.shard(shard)?.rounds) };

    let batches: Vec<(Vec<u32>, ShardId, BTreeSet<ClientId>)> = match options.arrival {
        Arrival::Sequential => {
            let mut ordered: Vec<&UnlearnRequest> = requests.iter().collect();
            ordered.sort_by_key(|r| (r.arrival_index, r.request_id));
            ordered
                .into_iter()
                .map(|r| Ok((vec![r.request_id], route(r)?, BTreeSet::from([r.client_id]))))
                .collect::<Result<_>>()?
        }
        Arrival::Concurrent => {
            let mut by_shard: BTreeMap<ShardId, (Vec<u32>, BTreeSet<ClientId>)> = BTreeMap::new();
            for r in requests {
                let e = by_shard.entry(route(r)?).or_default();
                e.0.push(r.request_id);
                e.1.insert(r.client_id);
            }
            by_shard.into_iter().map(|(s, (ids, clients))| (ids, s, clients)).collect()
        }
    };

    match options.arrival {
        Arrival::Sequential => {
            for (ids, shard, clients) in batches {
                let mut all = result.removed.get(&shard).cloned().unwrap_or_default();
                all.extend(clients);
                let job = UnlearnJob::new(shard, all.clone(), rounds(shard)?, options.local_epoch_ratio)?;
                match run_job(stage, history, &job, options.method) {
                    Ok(out) => {
                        ledger.charge(&out, &options.network);
                        result.removed.insert(shard, all);
                        result.models.insert(shard, out.params.clone());
                        result.outcomes.push(out);
                    }
                    Err(e) => {
                        ledger.failures.push(RequestFailure { request_ids: ids, shard_id: shard, error: e.to_string() })
                    }
                }
            }
        }
        Arrival::Concurrent => {
            let jobs = batches
                .iter()
                .map(|(_, shard, clients)| {
                    UnlearnJob::new(*shard, clients.clone(), rounds(*shard)?, options.local_epoch_ratio)
                })
                .collect::<Result<Vec<_>>>()?;
            let outcomes = stage.exec().map(&jobs, |job| run_job(stage, history, job, options.method));
            for ((ids, shard, clients), out) in batches.into_iter().zip(outcomes) {
                match out {
                    Ok(out) => {
                        ledger.charge(&out, &options.network);
                        result.removed.insert(shard, clients);
                        result.models.insert(shard, out.params.clone());
                        result.outcomes.push(out);
                    }
                    Err(e) => {
                        ledger.failures.push(RequestFailure { request_ids: ids, shard_id: shard, error: e.to_string() })
                    }
                }
            }
        }
    }
    if options.record_wall_clock {
        ledger.wall_seconds = start.elapsed().as_secs_f64();
    }
    result.ledger = ledger;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::train_stage;
    use crate::model::{make_synthetic_dataset, partition, Mlp, MlpConfig, PartitionSpec, SgdConfig};
    use crate::sim::{generate_workload, WorkloadSpec};

    fn setup(clients: usize, shards: usize) -> (Stage, HistoryStore) {
        let data = make_synthetic_dataset(3, 10 * clients, 4, 0.3, 1).unwrap();
        let parts = partition(&data, &PartitionSpec::iid(clients, 1)).unwrap();
        let model = Mlp::new(&MlpConfig { input_dim: 4, hidden: vec![4], num_classes: 3 }).unwrap();
        let stage = Stage::from_clients(0, parts, shards, 2, 4, model, SgdConfig::default(), 1).unwrap();
        let mut h = HistoryStore::uncoded(&stage);
        train_stage(&stage, &mut h).unwrap();
        (stage, h)
    }

    fn options(arrival: Arrival, distribution: Distribution) -> SimOptions {
        SimOptions { arrival, distribution, ..Default::default() }
    }

    #[test]
    fn concurrent_adaptive_is_one_pass() {
        let (stage, h) = setup(8, 2);
        let spec = WorkloadSpec { arrival: Arrival::Concurrent, distribution: Distribution::Adaptive, k: 3, seed: 4 };
        let reqs = generate_workload(&spec, &stage).unwrap();
        let r = simulate_stage(&stage, &h, &reqs, &options(Arrival::Concurrent, Distribution::Adaptive)).unwrap();
        assert_eq!(r.ledger.total_passes(), 1);
        // one retained client, two local epochs, two rounds
        assert_eq!(r.ledger.total_client_epochs(), 4);
        assert_eq!(r.ledger.storage_bytes, h.storage_report().server_payload_bytes);
        assert_eq!(r.ledger.wall_seconds, 0.0);
    }

    #[test]
    fn sequential_accumulates_removals_and_conserves_cost() {
        let (stage, h) = setup(8, 2);
        let spec = WorkloadSpec { arrival: Arrival::Sequential, distribution: Distribution::Adaptive, k: 3, seed: 2 };
        let reqs = generate_workload(&spec, &stage).unwrap();
        let r = simulate_stage(&stage, &h, &reqs, &options(Arrival::Sequential, Distribution::Adaptive)).unwrap();
        assert_eq!(r.ledger.total_passes(), 3);
        // retained 3, 2, 1 clients × 2 epochs × 2 rounds
        assert_eq!(r.ledger.total_client_epochs(), (3 + 2 + 1) * 2 * 2);
        let expected: u64 = r.outcomes.iter().map(|o| o.client_epochs()).sum();
        assert_eq!(expected, r.ledger.total_client_epochs());
        assert_eq!(r.removed.values().map(BTreeSet::len).sum::<usize>(), 3);
    }

    #[test]
    fn failed_pass_is_ledgered_not_fatal() {
        let (stage, h) = setup(4, 2);
        let reqs: Vec<UnlearnRequest> = [0, 1, 2]
            .iter()
            .enumerate()
            .map(|(i, &c)| UnlearnRequest {
                request_id: i as u32,
                client_id: c,
                shard_id: 0,
                arrival_index: i as u32 + 1,
            })
            .collect();
        let r = simulate_stage(&stage, &h, &reqs, &options(Arrival::Sequential, Distribution::Even)).unwrap();
        assert_eq!(r.ledger.failures.len(), 1);
        assert_eq!(r.ledger.failures[0].request_ids, vec![1]);
        assert_eq!(r.ledger.total_passes(), 2);
    }

    #[test]
    fn concurrent_is_deterministic_across_exec_modes() {
        let (stage, h) = setup(8, 4);
        let spec = WorkloadSpec { arrival: Arrival::Concurrent, distribution: Distribution::Even, k: 4, seed: 1 };
        let reqs = generate_workload(&spec, &stage).unwrap();
        let opts = options(Arrival::Concurrent, Distribution::Even);
        let a = simulate_stage(&stage, &h, &reqs, &opts).unwrap();
        let seq = stage.clone().with_exec(crate::exec::Exec::Sequential);
        let b = simulate_stage(&seq, &h, &reqs, &opts).unwrap();
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.models, b.models);
    }
}
