//! Stage-based sharded FedAvg training.

mod access;
pub mod checkpoint;
mod history;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use access::{AccessEvent, AccessKind, AccessLog};
pub use history::{HistoryStore, RoundRecord, StorageMode, StorageReport};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{train_local, Dataset, Mlp, ParamVector, SgdConfig};
use crate::rng::{stream_seed, tag};
use crate::{ClientId, Round, ShardId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardConfig {
    pub shard_id: ShardId,
    /// Sorted, duplicate-free.
    pub client_ids: Vec<ClientId>,
    pub rounds: Round,
    pub local_epochs: usize,
    pub server_id: u32,
}

/// One period of fixed shard membership.
#[derive(Debug, Clone)]
pub struct Stage {
    stage_id: u32,
    shards: Vec<ShardConfig>,
    datasets: BTreeMap<ClientId, Dataset>,
    model: Mlp,
    sgd: SgdConfig,
    seed: u64,
    exec: Exec,
    access: Arc<AccessLog>,
}

/// Near-equal contiguous split of `0..clients` into `shards` groups.
pub fn contiguous_shards(clients: usize, shards: usize) -> Result<Vec<Vec<ClientId>>> {
    if shards == 0 || shards > clients {
        return Err(Error::invalid(format!("cannot split {clients} clients into {shards} shards")));
    }
    let (base, extra) = (clients / shards, clients % shards);
    let mut next = 0u32;
    Ok((0..shards)
        .map(|s| {
            let n = base + usize::from(s < extra);
            let ids = (next..next + n as u32).collect();
            next += n as u32;
            ids
        })
        .collect())
}

impl Stage {
    pub fn new(
        stage_id: u32,
        mut shards: Vec<ShardConfig>,
        datasets: BTreeMap<ClientId, Dataset>,
        model: Mlp,
        sgd: SgdConfig,
        seed: u64,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::invalid("a stage needs at least one shard"));
        }
        shards.sort_by_key(|s| s.shard_id);
        let mut seen = BTreeSet::new();
        let mut servers = BTreeSet::new();
        for s in shards.iter_mut() {
            s.client_ids.sort_unstable();
            if s.client_ids.is_empty() {
                return Err(Error::invalid(format!("shard {} has no clients", s.shard_id)));
            }
            if !servers.insert(s.server_id) {
                return Err(Error::invalid(format!("server {} assigned to two shards", s.server_id)));
            }
            for &c in &s.client_ids {
                if !seen.insert(c) {
                    return Err(Error::invalid(format!("client {c} belongs to more than one shard")));
                }
                let data = datasets.get(&c).ok_or(Error::UnknownClient(c))?;
                if data.dim() != model.input_dim() {
                    return Err(Error::DimensionMismatch { expected: model.input_dim(), found: data.dim() });
                }
            }
        }
        let ids: BTreeSet<_> = shards.iter().map(|s| s.shard_id).collect();
        if ids.len() != shards.len() {
            return Err(Error::invalid("duplicate shard id"));
        }
        Ok(Self { stage_id, shards, datasets, model, sgd, seed, exec: Exec::default(), access: Arc::default() })
    }

    /// Builds a stage whose client `i` owns `client_data[i]`, split into
    /// `num_shards` contiguous shards.
    #[allow(clippy::too_many_arguments)]
    pub fn from_clients(
        stage_id: u32,
        client_data: Vec<Dataset>,
        num_shards: usize,
        rounds: Round,
        local_epochs: usize,
        model: Mlp,
        sgd: SgdConfig,
        seed: u64,
    ) -> Result<Self> {
        let groups = contiguous_shards(client_data.len(), num_shards)?;
        let shards = groups
            .into_iter()
            .enumerate()
            .map(|(s, client_ids)| ShardConfig {
                shard_id: s as u32,
                client_ids,
                rounds,
                local_epochs,
                server_id: s as u32,
            })
            .collect();
        let datasets = client_data.into_iter().enumerate().map(|(i, d)| (i as ClientId, d)).collect();
        Self::new(stage_id, shards, datasets, model, sgd, seed)
    }

    /// Same clients, data and seed, all in one shard.
    pub fn single_shard(&self) -> Stage {
        let first = &self.shards[0];
        let client_ids = self.client_ids();
        let shards = vec![ShardConfig {
            shard_id: 0,
            client_ids,
            rounds: first.rounds,
            local_epochs: first.local_epochs,
            server_id: 0,
        }];
        Stage { shards, access: Arc::default(), ..self.clone() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn stage_id(&self) -> u32 {
        self.stage_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn sgd(&self) -> &SgdConfig {
        &self.sgd
    }

    pub fn shards(&self) -> &[ShardConfig] {
        &self.shards
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, id: ShardId) -> Result<&ShardConfig> {
        self.shards
            .iter()
            .find(|s| s.shard_id == id)
            .ok_or_else(|| Error::invalid(format!("no shard {id} in stage {}", self.stage_id)))
    }

    /// All participating clients, sorted.
    pub fn client_ids(&self) -> Vec<ClientId> {
        let mut ids: Vec<_> = self.shards.iter().flat_map(|s| s.client_ids.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn num_clients(&self) -> usize {
        self.shards.iter().map(|s| s.client_ids.len()).sum()
    }

    pub fn shard_of(&self, client: ClientId) -> Result<ShardId> {
        self.shards
            .iter()
            .find(|s| s.client_ids.binary_search(&client).is_ok())
            .map(|s| s.shard_id)
            .ok_or(Error::UnknownClient(client))
    }

    /// A client's local data, as read by its shard. Every call is logged.
    pub fn client_data(&self, shard: ShardId, client: ClientId) -> Result<&Dataset> {
        if self.shard(shard)?.client_ids.binary_search(&client).is_err() {
            return Err(Error::UnknownClient(client));
        }
        self.access.record(AccessEvent { shard, kind: AccessKind::DatasetRead, round: None, client: Some(client) });
        Ok(&self.datasets[&client])
    }

    /// Replaces a client's dataset, keeping its shard membership.
    pub fn set_client_data(&mut self, client: ClientId, data: Dataset) -> Result<()> {
        let slot = self.datasets.get_mut(&client).ok_or(Error::UnknownClient(client))?;
        if data.dim() != slot.dim() {
            return Err(Error::DimensionMismatch { expected: slot.dim(), found: data.dim() });
        }
        *slot = data;
        Ok(())
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.access
    }

    /// Shard-global initialization before round 1.
    pub fn shard_init(&self, shard: ShardId) -> ParamVector {
        self.model.init(stream_seed(&[tag::INIT, self.seed, self.stage_id as u64, shard as u64]))
    }

    /// Seed for one client's local training in one round.
    pub fn client_round_seed(&self, shard: ShardId, client: ClientId, round: Round, purpose: u64) -> u64 {
        stream_seed(&[self.seed, self.stage_id as u64, shard as u64, client as u64, round as u64, purpose])
    }

    /// One FedAvg round: every listed client trains `epochs` epochs from
    /// `global`, returning per-client results in client order.
    pub(crate) fn local_round(
        &self,
        shard: ShardId,
        clients: &[ClientId],
        global: &ParamVector,
        epochs: usize,
        round: Round,
        purpose: u64,
    ) -> Result<BTreeMap<ClientId, ParamVector>> {
        let sgd = SgdConfig { epochs, ..self.sgd };
        let trained = self.exec.try_map(clients, |&c| {
            let data = self.client_data(shard, c)?;
            train_local(&self.model, global, data, &sgd, self.client_round_seed(shard, c, round, purpose))
        })?;
        Ok(clients.iter().copied().zip(trained).collect())
    }
}

/// Unweighted elementwise mean, accumulated in f64.
pub fn fedavg_aggregate<'a>(params: impl IntoIterator<Item = &'a ParamVector>) -> Result<ParamVector> {
    let mut iter = params.into_iter();
    let first = iter.next().ok_or_else(|| Error::invalid("cannot aggregate zero vectors"))?;
    let mut acc: Vec<f64> = first.values().iter().map(|&v| v as f64).collect();
    let mut n = 1usize;
    for p in iter {
        first.ensure_same_dim(p)?;
        for (a, &v) in acc.iter_mut().zip(p.values()) {
            *a += v as f64;
        }
        n += 1;
    }
    first.with_values(acc.into_iter().map(|a| (a / n as f64) as f32).collect())
}

fn run_shard(stage: &Stage, shard: ShardId) -> Result<(ParamVector, Vec<RoundRecord>)> {
    let cfg = stage.shard(shard)?;
    let mut global = stage.shard_init(shard);
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for g in 1..=cfg.rounds {
        let clients = stage.local_round(shard, &cfg.client_ids, &global, cfg.local_epochs, g, tag::TRAIN)?;
        global = fedavg_aggregate(clients.values())?;
        records.push(RoundRecord { round: g, clients, global: global.clone() });
    }
    Ok((global, records))
}

/// Trains one shard for its configured rounds, committing each round to
/// `history`. Returns the final shard-global model.
pub fn train_shard(stage: &Stage, shard: ShardId, history: &mut HistoryStore) -> Result<ParamVector> {
    let cfg = stage.shard(shard)?;
    let mut global = stage.shard_init(shard);
    for g in 1..=cfg.rounds {
        let clients = stage.local_round(shard, &cfg.client_ids, &global, cfg.local_epochs, g, tag::TRAIN)?;
        global = fedavg_aggregate(clients.values())?;
        history.commit(shard, RoundRecord { round: g, clients, global: global.clone() })?;
    }
    Ok(global)
}

/// Trains every shard, independent shards running concurrently. Rounds are
/// committed in round-major order once all shards finish.
pub fn train_stage(stage: &Stage, history: &mut HistoryStore) -> Result<BTreeMap<ShardId, ParamVector>> {
    let ids: Vec<ShardId> = stage.shards().iter().map(|s| s.shard_id).collect();
    let results = stage.exec().try_map(&ids, |&s| run_shard(stage, s))?;
    let max_rounds = results.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    let mut queues: Vec<_> = results.iter().map(|(_, r)| r.iter()).collect();
    for _ in 0..max_rounds {
        for (&shard, q) in ids.iter().zip(queues.iter_mut()) {
            if let Some(rec) = q.next() {
                history.commit(shard, rec.clone())?;
            }
        }
    }
    Ok(ids.into_iter().zip(results.into_iter().map(|(g, _)| g)).collect())
}
