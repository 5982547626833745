use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AccessEvent, AccessKind, AccessLog, Stage};
use crate::coded::{CodedSlice, DecodeStrategy, EvalPoints, KeyRegistry, LagrangeCode, ShardBlock, SliceHolders};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{FixedPointCodec, Layout, ParamVector};
use crate::{ClientId, Round, ShardId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    #[default]
    Uncoded,
    Coded,
}

impl StorageMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StorageMode::Uncoded => "uncoded",
            StorageMode::Coded => "coded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: Round,
    pub clients: BTreeMap<ClientId, ParamVector>,
    pub global: ParamVector,
}

/// Byte accounting split by where the bytes live.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub mode: StorageMode,
    /// Per-client parameter bytes persisted on shard servers.
    pub server_payload_bytes: u64,
    /// Per-round aggregated globals persisted on shard servers.
    pub aggregate_bytes: u64,
    /// Keys, evaluation points and codec parameters.
    pub server_metadata_bytes: u64,
    /// Coded slices held by clients.
    pub client_payload_bytes: u64,
}

#[derive(Debug)]
pub(crate) struct CodedState {
    pub(crate) codec: FixedPointCodec,
    pub(crate) code: LagrangeCode,
    pub(crate) strategy: DecodeStrategy,
    /// Slot index to client id.
    pub(crate) slots: Vec<ClientId>,
    /// Shard id to its ω index.
    pub(crate) shard_index: BTreeMap<ShardId, usize>,
    pub(crate) block_len: usize,
    pub(crate) registry: KeyRegistry,
    pub(crate) holders: SliceHolders,
    pub(crate) pending: BTreeMap<Round, BTreeMap<ShardId, RoundRecord>>,
    pub(crate) decode_ops: AtomicU64,
}

impl Clone for CodedState {
    fn clone(&self) -> Self {
        Self {
            codec: self.codec,
            code: self.code.clone(),
            strategy: self.strategy,
            slots: self.slots.clone(),
            shard_index: self.shard_index.clone(),
            block_len: self.block_len,
            registry: self.registry.clone(),
            holders: self.holders.clone(),
            pending: self.pending.clone(),
            decode_ops: AtomicU64::new(self.decode_ops.load(Ordering::Relaxed)),
        }
    }
}

/// Per-round parameter history for every shard of a stage.
///
/// In uncoded mode the server keeps each round's client vectors verbatim.
/// In coded mode a round is buffered until every shard has committed it,
/// then quantized, Lagrange-encoded into one slice per client and handed to
/// the clients; the server keeps only access keys and evaluation points.
#[derive(Clone, Debug)]
pub struct HistoryStore {
    pub(crate) mode: StorageMode,
    pub(crate) layout: Arc<Layout>,
    pub(crate) shard_clients: BTreeMap<ShardId, Vec<ClientId>>,
    pub(crate) total_clients: usize,
    pub(crate) records: BTreeMap<(ShardId, Round), RoundRecord>,
    pub(crate) latest: BTreeMap<ShardId, Round>,
    pub(crate) coded: Option<CodedState>,
    pub(crate) access: AccessLog,
}

impl HistoryStore {
    pub fn uncoded(stage: &Stage) -> Self {
        Self {
            mode: StorageMode::Uncoded,
            layout: Arc::clone(stage.model().layout()),
            shard_clients: stage.shards().iter().map(|s| (s.shard_id, s.client_ids.clone())).collect(),
            total_clients: stage.num_clients(),
            records: BTreeMap::new(),
            latest: BTreeMap::new(),
            coded: None,
            access: AccessLog::default(),
        }
    }

    /// Coded store with the default evaluation points for the stage's
    /// `S` shards and `C` clients. `key_secret` seeds access-key derivation.
    pub fn coded(stage: &Stage, codec: FixedPointCodec, key_secret: u64) -> Result<Self> {
        let slots = stage.client_ids();
        let points = EvalPoints::standard(stage.num_shards(), slots.len());
        let code = LagrangeCode::for_codec(points, &codec)?.with_exec(stage.exec());
        let mut store = Self::uncoded(stage);
        let shard_index = store.shard_clients.keys().enumerate().map(|(i, &s)| (s, i)).collect();
        let block_len = stage.shards().iter().map(|s| s.client_ids.len()).max().unwrap_or(0) * store.layout.dim();
        store.mode = StorageMode::Coded;
        store.coded = Some(CodedState {
            codec,
            code,
            strategy: DecodeStrategy::default(),
            slots,
            shard_index,
            block_len,
            registry: KeyRegistry::new(key_secret),
            holders: SliceHolders::default(),
            pending: BTreeMap::new(),
            decode_ops: AtomicU64::new(0),
        });
        Ok(store)
    }

    pub fn with_strategy(mut self, strategy: DecodeStrategy) -> Self {
        if let Some(c) = self.coded.as_mut() {
            c.strategy = strategy;
        }
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        if let Some(c) = self.coded.as_mut() {
            c.code = c.code.clone().with_exec(exec);
        }
        self
    }

    pub fn mode(&self) -> StorageMode {
        self.mode
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn shards(&self) -> impl Iterator<Item = ShardId> + '_ {
        self.shard_clients.keys().copied()
    }

    pub fn shard_clients(&self, shard: ShardId) -> Result<&[ClientId]> {
        self.shard_clients
            .get(&shard)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("shard {shard} not in this history")))
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.access
    }

    /// Highest committed round for `shard` (0 if none).
    pub fn latest_round(&self, shard: ShardId) -> Round {
        self.latest.get(&shard).copied().unwrap_or(0)
    }

    /// Rounds available for `fetch_round` on `shard`.
    pub fn record_count(&self, shard: ShardId) -> usize {
        match &self.coded {
            None => self.records.range((shard, 0)..=(shard, Round::MAX)).count(),
            Some(c) => c.registry.keys().filter(|(_, (s, _))| *s == shard).count(),
        }
    }

    /// Rounds still waiting for other shards before they can be encoded.
    pub fn pending_rounds(&self) -> Vec<Round> {
        self.coded.as_ref().map(|c| c.pending.keys().copied().collect()).unwrap_or_default()
    }

    /// Field multiplications spent by coded reconstructions so far.
    pub fn decode_ops(&self) -> u64 {
        self.coded.as_ref().map_or(0, |c| c.decode_ops.load(Ordering::Relaxed))
    }

    pub fn registry(&self) -> Option<&KeyRegistry> {
        self.coded.as_ref().map(|c| &c.registry)
    }

    pub fn holders(&self) -> Option<&SliceHolders> {
        self.coded.as_ref().map(|c| &c.holders)
    }

    /// Client-held slices for `round`, for fault injection.
    pub fn slices_mut(&mut self, round: Round) -> Option<&mut Vec<CodedSlice>> {
        self.coded.as_mut().and_then(|c| c.holders.round_mut(round))
    }

    pub fn codec(&self) -> Option<&FixedPointCodec> {
        self.coded.as_ref().map(|c| &c.codec)
    }

    pub fn eval_points(&self) -> Option<&EvalPoints> {
        self.coded.as_ref().map(|c| c.code.points())
    }

    /// Bytes per coded slice (`B` field elements of 8 bytes).
    pub fn slice_bytes(&self) -> u64 {
        self.coded.as_ref().map_or(0, |c| c.block_len as u64 * 8)
    }

    pub fn num_slots(&self) -> usize {
        self.coded.as_ref().map_or(0, |c| c.slots.len())
    }

    fn log(&self, shard: ShardId, kind: AccessKind, round: Round) {
        self.access.record(AccessEvent { shard, kind, round: Some(round), client: None });
    }

    fn validate(&self, shard: ShardId, rec: &RoundRecord) -> Result<()> {
        let clients = self.shard_clients(shard)?;
        if rec.round == 0 || rec.round <= self.latest_round(shard) {
            return Err(Error::Commit(format!(
                "round {} for shard {shard} not after {}",
                rec.round,
                self.latest_round(shard)
            )));
        }
        if !rec.clients.keys().eq(clients.iter()) {
            return Err(Error::Commit(format!("round {} client set does not match shard {shard}", rec.round)));
        }
        for p in rec.clients.values().chain(std::iter::once(&rec.global)) {
            if p.dim() != self.layout.dim() {
                return Err(Error::DimensionMismatch { expected: self.layout.dim(), found: p.dim() });
            }
        }
        Ok(())
    }

    /// Commits one round of one shard. Either the whole round is recorded or
    /// nothing changes.
    pub fn commit(&mut self, shard: ShardId, rec: RoundRecord) -> Result<()> {
        self.validate(shard, &rec)?;
        self.log(shard, AccessKind::HistoryWrite, rec.round);
        let round = rec.round;
        match self.coded.as_mut() {
            None => {
                self.records.insert((shard, round), rec);
            }
            Some(c) => {
                let entry = c.pending.entry(round).or_default();
                entry.insert(shard, rec);
                if entry.len() == self.shard_clients.len() {
                    let batch = c.pending.remove(&round).unwrap();
                    if let Err(e) = c.encode_round(round, &batch, &self.shard_clients) {
                        let mut batch = batch;
                        batch.remove(&shard);
                        c.pending.insert(round, batch);
                        return Err(e);
                    }
                }
            }
        }
        self.latest.insert(shard, round);
        Ok(())
    }

    /// Per-client parameters of `shard` in round `round`.
    pub fn fetch_round(&self, shard: ShardId, round: Round) -> Result<BTreeMap<ClientId, ParamVector>> {
        self.shard_clients(shard)?;
        self.log(shard, AccessKind::HistoryRead, round);
        match &self.coded {
            None => {
                self.records.get(&(shard, round)).map(|r| r.clients.clone()).ok_or(Error::NotFound { shard, round })
            }
            Some(c) => {
                let blocks = c.retrieve(shard, round)?;
                c.split_block(&blocks[c.shard_index[&shard]], &self.shard_clients[&shard], &self.layout)
            }
        }
    }

    /// The round's aggregated model. Coded stores do not keep it, so it is
    /// recomputed from the reconstructed client vectors.
    pub fn fetch_global(&self, shard: ShardId, round: Round) -> Result<ParamVector> {
        match &self.coded {
            None => {
                self.log(shard, AccessKind::HistoryRead, round);
                self.records.get(&(shard, round)).map(|r| r.global.clone()).ok_or(Error::NotFound { shard, round })
            }
            Some(_) => super::fedavg_aggregate(self.fetch_round(shard, round)?.values()),
        }
    }

    /// Overwrites one stored client vector. Coded stores decode the round,
    /// patch the client's segment and re-encode every slice.
    pub fn replace_client_vector(
        &mut self,
        shard: ShardId,
        round: Round,
        client: ClientId,
        params: ParamVector,
    ) -> Result<()> {
        if params.dim() != self.layout.dim() {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(), found: params.dim() });
        }
        let clients = self.shard_clients(shard)?.to_vec();
        let pos = clients.iter().position(|&c| c == client).ok_or(Error::UnknownClient(client))?;
        self.log(shard, AccessKind::HistoryWrite, round);
        match self.coded.as_mut() {
            None => {
                let rec = self.records.get_mut(&(shard, round)).ok_or(Error::NotFound { shard, round })?;
                rec.clients.insert(client, params);
            }
            Some(c) => {
                let mut blocks = c.retrieve(shard, round)?;
                let d = self.layout.dim();
                let q = c.codec.quantize(&params);
                blocks[c.shard_index[&shard]].values[pos * d..(pos + 1) * d].copy_from_slice(&q.values);
                let slices = c.code.encode(&blocks)?;
                c.holders.store(round, slices);
            }
        }
        Ok(())
    }

    pub fn storage_report(&self) -> StorageReport {
        let d = self.layout.dim() as u64;
        match &self.coded {
            None => StorageReport {
                mode: self.mode,
                server_payload_bytes: self.records.values().map(|r| r.clients.len() as u64 * d * 4).sum(),
                aggregate_bytes: self.records.len() as u64 * d * 4,
                server_metadata_bytes: 0,
                client_payload_bytes: 0,
            },
            Some(c) => {
                let points = c.code.points();
                StorageReport {
                    mode: self.mode,
                    server_payload_bytes: 0,
                    aggregate_bytes: 0,
                    server_metadata_bytes: c.registry.metadata_bytes()
                        + 8 * (points.shards() + points.clients()) as u64
                        + 24,
                    client_payload_bytes: c.holders.payload_bytes(),
                }
            }
        }
    }
}

impl CodedState {
    fn encode_round(
        &mut self,
        round: Round,
        batch: &BTreeMap<ShardId, RoundRecord>,
        shard_clients: &BTreeMap<ShardId, Vec<ClientId>>,
    ) -> Result<()> {
        let mut blocks = Vec::with_capacity(batch.len());
        for (&shard, rec) in batch {
            let mut values = Vec::with_capacity(self.block_len);
            for c in &shard_clients[&shard] {
                values.extend(self.codec.quantize(&rec.clients[c]).values);
            }
            values.resize(self.block_len, 0);
            blocks.push(ShardBlock { shard_id: shard, round, values });
        }
        blocks.sort_by_key(|b| self.shard_index[&b.shard_id]);
        let slices = self.code.encode(&blocks)?;
        self.holders.store(round, slices);
        for &shard in batch.keys() {
            self.registry.issue_key(shard, round);
        }
        Ok(())
    }

    /// Key-gated retrieval and reconstruction of every block of a round.
    fn retrieve(&self, shard: ShardId, round: Round) -> Result<Vec<ShardBlock>> {
        let key = self.registry.key_for(shard, round).ok_or(Error::NotFound { shard, round })?;
        let slices = self.registry.retrieve_slices(&key, &self.holders)?;
        let capacity = self.code.error_capacity();
        let tag_failures = slices.iter().filter(|s| !s.verify()).count();
        if tag_failures > capacity {
            return Err(Error::DecodeFailure(format!(
                "{tag_failures} slices of round {round} fail integrity checks, at most {capacity} correctable"
            )));
        }
        let mut blocks = match self.strategy {
            DecodeStrategy::Robust => {
                let r = self.code.reconstruct_robust(&slices)?;
                self.decode_ops.fetch_add(r.field_ops, Ordering::Relaxed);
                if !r.corrected.is_empty() {
                    log::warn!("round {round}: corrected slices from slots {:?}", r.corrected);
                }
                r.blocks
            }
            DecodeStrategy::Fast => {
                let clean: Vec<CodedSlice> =
                    slices.into_iter().filter(CodedSlice::verify).take(self.code.shards()).collect();
                self.code.reconstruct_fast(&clean)?
            }
        };
        for (&id, &i) in &self.shard_index {
            blocks[i].shard_id = id;
        }
        Ok(blocks)
    }

    fn split_block(
        &self,
        block: &ShardBlock,
        clients: &[ClientId],
        layout: &Arc<Layout>,
    ) -> Result<BTreeMap<ClientId, ParamVector>> {
        let d = layout.dim();
        clients
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let values = self.codec.dequantize_values(&block.values[i * d..(i + 1) * d]);
                Ok((c, ParamVector::new(values, Arc::clone(layout))?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::tests::blob_stage;
    use crate::fed::{train_shard, train_stage};

    #[test]
    fn uncoded_roundtrip_is_bit_identical() {
        let stage = blob_stage(4, 2, 2, 1, 1);
        let mut h = HistoryStore::uncoded(&stage);
        let mut shadow = Vec::new();
        let cfg = stage.shards()[0].clone();
        let mut global = stage.shard_init(0);
        for g in 1..=2 {
            let clients = stage.local_round(0, &cfg.client_ids, &global, 1, g, 99).unwrap();
            global = crate::fed::fedavg_aggregate(clients.values()).unwrap();
            shadow.push(clients.clone());
            h.commit(0, RoundRecord { round: g, clients, global: global.clone() }).unwrap();
        }
        assert_eq!(h.fetch_round(0, 1).unwrap(), shadow[0]);
        assert_eq!(h.fetch_round(0, 2).unwrap(), shadow[1]);
        assert!(matches!(h.fetch_round(0, 3), Err(Error::NotFound { shard: 0, round: 3 })));
    }

    #[test]
    fn commit_rejects_bad_rounds() {
        let stage = blob_stage(4, 2, 1, 1, 2);
        let mut h = HistoryStore::uncoded(&stage);
        train_shard(&stage, 0, &mut h).unwrap();
        let rec =
            RoundRecord { round: 1, clients: h.fetch_round(0, 1).unwrap(), global: h.fetch_global(0, 1).unwrap() };
        assert!(matches!(h.commit(0, rec.clone()), Err(Error::Commit(_))));
        let mut wrong = rec.clone();
        wrong.round = 2;
        wrong.clients.remove(&0);
        assert!(matches!(h.commit(0, wrong), Err(Error::Commit(_))));
        assert_eq!(h.record_count(0), 1);
    }

    #[test]
    fn coded_fetch_matches_shadow_within_resolution() {
        let stage = blob_stage(6, 3, 2, 2, 3);
        let codec = FixedPointCodec::default();
        let mut shadow = HistoryStore::uncoded(&stage);
        let mut coded = HistoryStore::coded(&stage, codec, 7).unwrap();
        train_stage(&stage, &mut shadow).unwrap();
        train_stage(&stage, &mut coded).unwrap();
        assert!(coded.pending_rounds().is_empty());
        for s in 0..3 {
            assert_eq!(coded.record_count(s), 2);
            for g in 1..=2 {
                let a = shadow.fetch_round(s, g).unwrap();
                let b = coded.fetch_round(s, g).unwrap();
                for (c, v) in &a {
                    for (x, y) in v.values().iter().zip(b[c].values()) {
                        assert!(((x - y).abs() as f64) <= codec.resolution() + 1e-9, "{x} vs {y}");
                    }
                }
            }
        }
        let r = coded.storage_report();
        assert_eq!(r.server_payload_bytes, 0);
        assert_eq!(r.client_payload_bytes, 2 * 6 * coded.slice_bytes());
        let u = shadow.storage_report();
        assert_eq!(u.server_payload_bytes, 2 * 6 * stage.model().dim() as u64 * 4);
        assert_eq!(coded.registry().unwrap().audit_log().len(), 6);
        assert!(coded.decode_ops() > 0);
    }

    #[test]
    fn coded_round_waits_for_all_shards() {
        let stage = blob_stage(4, 2, 2, 1, 4);
        let mut h = HistoryStore::coded(&stage, FixedPointCodec::default(), 1).unwrap();
        train_shard(&stage, 0, &mut h).unwrap();
        assert_eq!(h.pending_rounds(), vec![1, 2]);
        assert!(matches!(h.fetch_round(0, 1), Err(Error::NotFound { .. })));
        train_shard(&stage, 1, &mut h).unwrap();
        assert!(h.pending_rounds().is_empty());
        assert_eq!(h.fetch_round(0, 1).unwrap().len(), 2);
    }

    #[test]
    fn coded_corruption_corrected_then_refused() {
        let stage = blob_stage(6, 2, 1, 1, 5);
        let mut h = HistoryStore::coded(&stage, FixedPointCodec::default(), 1).unwrap();
        train_stage(&stage, &mut h).unwrap();
        let clean = h.fetch_round(1, 1).unwrap();
        // C = 6, S = 2: two slices can be repaired
        for slot in [0, 4] {
            h.slices_mut(1).unwrap()[slot].values[3] ^= 0x55;
        }
        assert_eq!(h.fetch_round(1, 1).unwrap(), clean);
        h.slices_mut(1).unwrap()[2].values[0] ^= 1;
        assert!(matches!(h.fetch_round(1, 1), Err(Error::DecodeFailure(_))));
    }

    #[test]
    fn replace_client_vector_in_both_modes() {
        let stage = blob_stage(4, 2, 1, 1, 6);
        let mut u = HistoryStore::uncoded(&stage);
        let mut c = HistoryStore::coded(&stage, FixedPointCodec::default(), 1).unwrap();
        train_stage(&stage, &mut u).unwrap();
        train_stage(&stage, &mut c).unwrap();
        let noise = ParamVector::zeros(Arc::clone(stage.model().layout()));
        u.replace_client_vector(1, 1, 3, noise.clone()).unwrap();
        c.replace_client_vector(1, 1, 3, noise.clone()).unwrap();
        assert_eq!(u.fetch_round(1, 1).unwrap()[&3], noise);
        assert_eq!(c.fetch_round(1, 1).unwrap()[&3], noise);
        assert!(c.replace_client_vector(1, 1, 0, noise).is_err());
    }
}
