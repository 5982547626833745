use std::collections::BTreeSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::{ClientId, Round, ShardId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    DatasetRead,
    HistoryRead,
    HistoryWrite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub shard: ShardId,
    pub kind: AccessKind,
    pub round: Option<Round>,
    pub client: Option<ClientId>,
}

/// Append-only record of which shard-keyed state was touched.
#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<AccessEvent>>);

impl AccessLog {
    pub fn record(&self, event: AccessEvent) {
        self.0.lock().unwrap().push(event);
    }

    pub fn events(&self) -> Vec<AccessEvent> {
        self.0.lock().unwrap().clone()
    }

    pub fn shards(&self) -> BTreeSet<ShardId> {
        self.0.lock().unwrap().iter().map(|e| e.shard).collect()
    }

    pub fn clients_read(&self) -> BTreeSet<ClientId> {
        self.0.lock().unwrap().iter().filter(|e| e.kind == AccessKind::DatasetRead).filter_map(|e| e.client).collect()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().unwrap().clear();
    }
}

impl Clone for AccessLog {
    fn clone(&self) -> Self {
        Self(Mutex::new(self.events()))
    }
}
