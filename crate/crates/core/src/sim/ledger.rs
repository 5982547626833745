use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Arrival, Distribution};
use crate::error::{Error, Result};
use crate::fed::StorageMode;
use crate::unlearn::UnlearnOutcome;
use crate::ShardId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_delay_seconds: f64,
    pub data_rate_bps: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self { base_delay_seconds: 0.1, data_rate_bps: 1e7 }
    }
}

impl NetworkModel {
    pub fn new(base_delay_seconds: f64, data_rate_bps: f64) -> Result<Self> {
        let n = Self { base_delay_seconds, data_rate_bps };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data_rate_bps.is_finite() && self.data_rate_bps > 0.0) {
            return Err(Error::invalid(format!("data rate must be positive, got {}", self.data_rate_bps)));
        }
        if !(self.base_delay_seconds.is_finite() && self.base_delay_seconds >= 0.0) {
            return Err(Error::invalid(format!("base delay must be non-negative, got {}", self.base_delay_seconds)));
        }
        Ok(())
    }

    /// Seconds to move one message of `bytes`.
    pub fn transfer_seconds(&self, bytes: u64) -> f64 {
        self.base_delay_seconds + bytes as f64 * 8.0 / self.data_rate_bps
    }

    /// Seconds for `transfers` messages totalling `bytes`.
    pub fn seconds(&self, transfers: u64, bytes: u64) -> f64 {
        transfers as f64 * self.base_delay_seconds + bytes as f64 * 8.0 / self.data_rate_bps
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFailure {
    pub request_ids: Vec<u32>,
    pub shard_id: ShardId,
    pub error: String,
}

/// Accumulated costs of one simulated run. Counters only grow.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub run_id: String,
    pub mode: StorageMode,
    pub arrival: Arrival,
    pub distribution: Distribution,
    pub shards: usize,
    pub clients: usize,
    pub requests: usize,
    pub client_epochs: BTreeMap<ShardId, u64>,
    pub passes: BTreeMap<ShardId, u64>,
    pub comm_seconds: f64,
    pub storage_bytes: u64,
    pub metadata_bytes: u64,
    pub wall_seconds: f64,
    pub failures: Vec<RequestFailure>,
}

/// One CSV line of ledger output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub run_id: String,
    pub mode: StorageMode,
    pub arrival: Arrival,
    pub distribution: Distribution,
    #[serde(rename = "S")]
    pub shards: usize,
    #[serde(rename = "C")]
    pub clients: usize,
    #[serde(rename = "K")]
    pub requests: usize,
    pub client_epochs: u64,
    pub comm_seconds: f64,
    pub storage_bytes: u64,
    pub wall_seconds: f64,
}

impl CostLedger {
    /// Adds one retraining pass.
    pub fn charge(&mut self, outcome: &UnlearnOutcome, network: &NetworkModel) {
        *self.client_epochs.entry(outcome.shard_id).or_default() += outcome.client_epochs();
        *self.passes.entry(outcome.shard_id).or_default() += 1;
        self.comm_seconds += network.seconds(outcome.transfers(), outcome.bytes_moved());
    }

    pub fn total_client_epochs(&self) -> u64 {
        self.client_epochs.values().sum()
    }

    pub fn total_passes(&self) -> u64 {
        self.passes.values().sum()
    }

    /// Mean client-epoch cost of one pass, or 0 without passes.
    pub fn mean_pass_cost(&self) -> f64 {
        match self.total_passes() {
            0 => 0.0,
            n => self.total_client_epochs() as f64 / n as f64,
        }
    }

    pub fn row(&self) -> LedgerRow {
        LedgerRow {
            run_id: self.run_id.clone(),
            mode: self.mode,
            arrival: self.arrival,
            distribution: self.distribution,
            shards: self.shards,
            clients: self.clients,
            requests: self.requests,
            client_epochs: self.total_client_epochs(),
            comm_seconds: self.comm_seconds,
            storage_bytes: self.storage_bytes,
            wall_seconds: self.wall_seconds,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[LedgerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<LedgerRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}
