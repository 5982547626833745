use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fed::Stage;
use crate::rng::{stream, tag};
use crate::{ClientId, ShardId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    Sequential,
    #[default]
    Concurrent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Even,
    #[default]
    Adaptive,
}

impl Arrival {
    pub fn as_str(self) -> &'static str {
        match self {
            Arrival::Sequential => "sequential",
            Arrival::Concurrent => "concurrent",
        }
    }
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Even => "even",
            Distribution::Adaptive => "adaptive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub arrival: Arrival,
    pub distribution: Distribution,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearnRequest {
    pub request_id: u32,
    pub client_id: ClientId,
    pub shard_id: ShardId,
    /// 1-based order for sequential workloads, 0 for a single batch.
    pub arrival_index: u32,
}

/// Draws `k` unlearning requests against the stage's clients.
///
/// Even workloads visit shards round-robin from a random starting shard,
/// skipping shards with no clients left. Adaptive workloads pick one shard
/// and draw every target from it.
pub fn generate_workload(spec: &WorkloadSpec, stage: &Stage) -> Result<Vec<UnlearnRequest>> {
    if spec.k == 0 {
        return Err(Error::invalid("a workload needs at least one request"));
    }
    if spec.k > stage.num_clients() {
        return Err(Error::invalid(format!("{} requests exceed the {} stage clients", spec.k, stage.num_clients())));
    }
    let mut rng = stream(&[tag::WORKLOAD, spec.seed, stage.stage_id() as u64]);
    let shards = stage.shards();
    let targets: Vec<(ShardId, ClientId)> = match spec.distribution {
        Distribution::Adaptive => {
            let s = &shards[rng.random_range(0..shards.len())];
            if spec.k > s.client_ids.len() {
                return Err(Error::invalid(format!(
                    "adaptive workload of {} requests exceeds shard {} size {}",
                    spec.k,
                    s.shard_id,
                    s.client_ids.len()
                )));
            }
            index::sample(&mut rng, s.client_ids.len(), spec.k)
                .into_iter()
                .map(|i| (s.shard_id, s.client_ids[i]))
                .collect()
        }
        Distribution::Even => {
            let mut pools: Vec<Vec<ClientId>> = shards.iter().map(|s| s.client_ids.clone()).collect();
            let mut at = rng.random_range(0..shards.len());
            let mut out = Vec::with_capacity(spec.k);
            while out.len() < spec.k {
                if !pools[at].is_empty() {
                    let i = rng.random_range(0..pools[at].len());
                    out.push((shards[at].shard_id, pools[at].swap_remove(i)));
                }
                at = (at + 1) % shards.len();
            }
            out
        }
    };
    Ok(targets
        .into_iter()
        .enumerate()
        .map(|(i, (shard_id, client_id))| UnlearnRequest {
            request_id: i as u32,
            client_id,
            shard_id,
            arrival_index: match spec.arrival {
                Arrival::Sequential => i as u32 + 1,
                Arrival::Concurrent => 0,
            },
        })
        .collect())
}
