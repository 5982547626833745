use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CodedSlice;
use crate::error::{Error, Result};
use crate::{Round, ShardId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessKey(pub [u8; 32]);

impl AccessKey {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub shard_id: ShardId,
    pub round: Round,
    pub slices: usize,
}

/// Client-side slice storage, indexed by round then slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SliceHolders {
    rounds: BTreeMap<Round, Vec<CodedSlice>>,
}

impl SliceHolders {
    pub fn store(&mut self, round: Round, slices: Vec<CodedSlice>) {
        self.rounds.insert(round, slices);
    }

    pub fn round(&self, round: Round) -> Option<&[CodedSlice]> {
        self.rounds.get(&round).map(Vec::as_slice)
    }

    pub fn round_mut(&mut self, round: Round) -> Option<&mut Vec<CodedSlice>> {
        self.rounds.get_mut(&round)
    }

    pub fn rounds(&self) -> impl Iterator<Item = (&Round, &Vec<CodedSlice>)> {
        self.rounds.iter()
    }

    /// Everything slot `slot` holds, in round order.
    pub fn held_by(&self, slot: u32) -> Vec<&CodedSlice> {
        self.rounds.values().filter_map(|v| v.iter().find(|s| s.client_id == slot)).collect()
    }

    /// Bytes of field elements held across all clients.
    pub fn payload_bytes(&self) -> u64 {
        self.rounds.values().flatten().map(|s| s.len() as u64 * 8).sum()
    }
}

/// Per-(shard, round) access keys gating slice retrieval.
///
/// Keys are derived from a registry secret, so a registry rebuilt from the
/// same secret reissues the same keys.
#[derive(Debug, Default)]
pub struct KeyRegistry {
    secret: u64,
    keys: BTreeMap<AccessKey, (ShardId, Round)>,
    revoked: BTreeSet<AccessKey>,
    audit: Mutex<Vec<AuditEntry>>,
}

impl Clone for KeyRegistry {
    fn clone(&self) -> Self {
        Self {
            secret: self.secret,
            keys: self.keys.clone(),
            revoked: self.revoked.clone(),
            audit: Mutex::new(self.audit_log()),
        }
    }
}

impl KeyRegistry {
    pub fn new(secret: u64) -> Self {
        Self { secret, ..Default::default() }
    }

    pub fn issue_key(&mut self, shard: ShardId, round: Round) -> AccessKey {
        let mut h = Sha256::new();
        h.update(b"fusim-key");
        h.update(self.secret.to_le_bytes());
        h.update(shard.to_le_bytes());
        h.update(round.to_le_bytes());
        let key = AccessKey(h.finalize().into());
        self.keys.insert(key, (shard, round));
        self.revoked.remove(&key);
        key
    }

    /// Registers a key read back from a checkpoint.
    pub fn register(&mut self, key: AccessKey, shard: ShardId, round: Round) {
        self.keys.insert(key, (shard, round));
    }

    pub fn key_for(&self, shard: ShardId, round: Round) -> Option<AccessKey> {
        self.keys.iter().find(|(k, &v)| v == (shard, round) && !self.revoked.contains(k)).map(|(k, _)| *k)
    }

    pub fn revoke(&mut self, key: &AccessKey) {
        self.revoked.insert(*key);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = (&AccessKey, &(ShardId, Round))> {
        self.keys.iter()
    }

    pub fn authorize(&self, key: &AccessKey) -> Result<(ShardId, Round)> {
        if self.revoked.contains(key) {
            return Err(Error::Unauthorized(format!("key {} revoked", key.to_hex())));
        }
        self.keys.get(key).copied().ok_or_else(|| Error::Unauthorized("unknown key".into()))
    }

    /// All slices for the key's round; every successful call is audited.
    pub fn retrieve_slices(&self, key: &AccessKey, holders: &SliceHolders) -> Result<Vec<CodedSlice>> {
        let (shard_id, round) = self.authorize(key)?;
        let slices = holders.round(round).ok_or(Error::NotFound { shard: shard_id, round })?.to_vec();
        self.audit.lock().unwrap().push(AuditEntry { shard_id, round, slices: slices.len() });
        Ok(slices)
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().unwrap().clone()
    }

    /// Server-side bytes: 32 per key plus 8 for its (shard, round) label.
    pub fn metadata_bytes(&self) -> u64 {
        self.keys.len() as u64 * 40
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holders() -> SliceHolders {
        let mut h = SliceHolders::default();
        h.store(1, (0..4).map(|i| CodedSlice::new(i, 1, vec![i as u64])).collect());
        h
    }

    #[test]
    fn issue_then_retrieve() {
        let mut reg = KeyRegistry::new(5);
        let key = reg.issue_key(0, 1);
        let h = holders();
        assert_eq!(reg.retrieve_slices(&key, &h).unwrap().len(), 4);
        assert_eq!(reg.audit_log().len(), 1);
        reg.retrieve_slices(&key, &h).unwrap();
        assert_eq!(reg.audit_log().len(), 2);
        assert_eq!(reg.audit_log()[1], AuditEntry { shard_id: 0, round: 1, slices: 4 });
    }

    #[test]
    fn random_and_revoked_keys_refused() {
        let mut reg = KeyRegistry::new(5);
        let key = reg.issue_key(0, 1);
        let h = holders();
        assert!(matches!(reg.retrieve_slices(&AccessKey([7; 32]), &h), Err(Error::Unauthorized(_))));
        reg.revoke(&key);
        assert!(matches!(reg.retrieve_slices(&key, &h), Err(Error::Unauthorized(_))));
        assert!(reg.audit_log().is_empty());
    }

    #[test]
    fn keys_are_deterministic_per_secret() {
        let mut a = KeyRegistry::new(1);
        let mut b = KeyRegistry::new(1);
        let mut c = KeyRegistry::new(2);
        assert_eq!(a.issue_key(3, 4), b.issue_key(3, 4));
        assert_ne!(a.issue_key(3, 4), c.issue_key(3, 4));
        assert_ne!(a.issue_key(3, 5), a.issue_key(2, 4));
    }
}
