//! On-disk history checkpoints.
//!
//! Each shard server owns one file, `history/shard_{s}.fush`:
//!
//! ```text
//! "FUSH" | version u16 | mode u8 | S u32 | C u32 | G u32 | d u32
//! shard_id u32 | n u32 | n client ids u32
//! ```
//!
//! Uncoded files continue with records `shard u32, round u32, client u32,
//! d × f32` until end of file; the round aggregate uses client id
//! `0xFFFFFFFF`. Coded files continue with
//!
//! ```text
//! ω index u32
//! n u32 | n × (shard u32, round u32, client u32, α u64)
//! k u32 | k × (shard u32, round u32, key [u8; 32], B u32)
//! S × ω u64 | C × (client u32, α u64) | p u64 | scale u64 | clamp f64
//! ```
//!
//! and client slices live in `slices/client_{slot}.fucs`, one slice record
//! per round. All integers are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use super::history::CodedState;
use super::{AccessLog, HistoryStore, RoundRecord, StorageMode};
use crate::coded::{
    decode_slice, encode_slice, AccessKey, DecodeStrategy, EvalPoints, KeyRegistry, LagrangeCode, SliceHolders,
};
use crate::error::{Error, Result};
use crate::model::{FixedPointCodec, Layout, ParamVector};
use crate::{ClientId, Round, ShardId};

pub const HISTORY_MAGIC: &[u8; 4] = b"FUSH";
pub const HISTORY_VERSION: u16 = 1;
pub const AGGREGATE_ID: u32 = u32::MAX;

pub fn shard_path(root: &Path, shard: ShardId) -> PathBuf {
    root.join("history").join(format!("shard_{shard}.fush"))
}

pub fn client_path(root: &Path, slot: usize) -> PathBuf {
    root.join("slices").join(format!("client_{slot}.fucs"))
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

/// Serializes one shard's part of the history.
pub fn write_shard(store: &HistoryStore, shard: ShardId, w: &mut impl Write) -> Result<()> {
    let clients = store.shard_clients(shard)?;
    w.write_all(HISTORY_MAGIC)?;
    w.write_all(&HISTORY_VERSION.to_le_bytes())?;
    w.write_all(&[match store.mode {
        StorageMode::Uncoded => 0,
        StorageMode::Coded => 1,
    }])?;
    put_u32(w, store.shard_clients.len() as u32)?;
    put_u32(w, store.total_clients as u32)?;
    put_u32(w, store.record_count(shard) as u32)?;
    put_u32(w, store.layout.dim() as u32)?;
    put_u32(w, shard)?;
    put_u32(w, clients.len() as u32)?;
    for &c in clients {
        put_u32(w, c)?;
    }
    match &store.coded {
        None => {
            for ((_, round), rec) in store.records.range((shard, 0)..=(shard, Round::MAX)) {
                let entries = rec.clients.iter().map(|(&c, p)| (c, p)).chain([(AGGREGATE_ID, &rec.global)]);
                for (c, p) in entries {
                    put_u32(w, shard)?;
                    put_u32(w, *round)?;
                    put_u32(w, c)?;
                    w.write_all(&p.to_le_bytes())?;
                }
            }
        }
        Some(cs) => {
            let points = cs.code.points();
            let alpha_of: BTreeMap<ClientId, u64> =
                cs.slots.iter().zip(&points.alphas).map(|(&c, &a)| (c, a)).collect();
            put_u32(w, cs.shard_index[&shard] as u32)?;
            let keys: Vec<(&AccessKey, Round)> =
                cs.registry.keys().filter(|(_, (s, _))| *s == shard).map(|(k, (_, r))| (k, *r)).collect();
            let mut keys = keys;
            keys.sort_by_key(|(_, r)| *r);
            put_u32(w, (keys.len() * clients.len()) as u32)?;
            for (_, round) in &keys {
                for c in clients {
                    put_u32(w, shard)?;
                    put_u32(w, *round)?;
                    put_u32(w, *c)?;
                    put_u64(w, alpha_of[c])?;
                }
            }
            put_u32(w, keys.len() as u32)?;
            for (key, round) in &keys {
                put_u32(w, shard)?;
                put_u32(w, *round)?;
                w.write_all(&key.0)?;
                put_u32(w, cs.block_len as u32)?;
            }
            for &o in &points.omegas {
                put_u64(w, o)?;
            }
            for (&c, &a) in cs.slots.iter().zip(&points.alphas) {
                put_u32(w, c)?;
                put_u64(w, a)?;
            }
            put_u64(w, cs.codec.prime())?;
            put_u64(w, cs.codec.scale())?;
            put_u64(w, cs.codec.clamp_range().to_bits())?;
        }
    }
    Ok(())
}

struct Header {
    mode: StorageMode,
    shards: usize,
    clients: usize,
    rounds: usize,
    dim: usize,
    shard: ShardId,
    members: Vec<ClientId>,
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let magic: [u8; 4] = get(r)?;
    if &magic != HISTORY_MAGIC {
        return Err(Error::Format(format!("bad history magic {magic:?}")));
    }
    let version = u16::from_le_bytes(get(r)?);
    if version != HISTORY_VERSION {
        return Err(Error::Format(format!("unsupported history version {version}")));
    }
    let mode = match get::<1>(r)?[0] {
        0 => StorageMode::Uncoded,
        1 => StorageMode::Coded,
        m => return Err(Error::Format(format!("unknown storage mode {m}"))),
    };
    let shards = get_u32(r)? as usize;
    let clients = get_u32(r)? as usize;
    let rounds = get_u32(r)? as usize;
    let dim = get_u32(r)? as usize;
    let shard = get_u32(r)?;
    let n = get_u32(r)? as usize;
    let members = (0..n).map(|_| get_u32(r)).collect::<Result<_>>()?;
    Ok(Header { mode, shards, clients, rounds, dim, shard, members })
}

/// Parsed contents of one shard file, merged into a store by [`load`].
struct ShardFile {
    header: Header,
    records: Vec<RoundRecord>,
    coded: Option<CodedPart>,
}

struct CodedPart {
    shard_index: usize,
    keys: Vec<(Round, AccessKey)>,
    block_len: usize,
    points: EvalPoints,
    slots: Vec<ClientId>,
    codec: FixedPointCodec,
}

fn read_shard(bytes: &[u8], layout: &Arc<Layout>) -> Result<ShardFile> {
    let mut r = Cursor::new(bytes);
    let header = read_header(&mut r)?;
    if header.dim != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), found: header.dim });
    }
    let d = header.dim;
    let mut records = Vec::new();
    let mut coded = None;
    match header.mode {
        StorageMode::Uncoded => {
            let mut by_round: BTreeMap<Round, (BTreeMap<ClientId, ParamVector>, Option<ParamVector>)> = BTreeMap::new();
            while (r.position() as usize) < bytes.len() {
                let shard = get_u32(&mut r)?;
                let round = get_u32(&mut r)?;
                let client = get_u32(&mut r)?;
                if shard != header.shard {
                    return Err(Error::Format(format!("record for shard {shard} in file of shard {}", header.shard)));
                }
                let mut values = Vec::with_capacity(d);
                for _ in 0..d {
                    values.push(f32::from_le_bytes(get(&mut r)?));
                }
                let p = ParamVector::new(values, Arc::clone(layout)).map_err(|e| Error::Format(e.to_string()))?;
                let entry = by_round.entry(round).or_default();
                if client == AGGREGATE_ID {
                    entry.1 = Some(p);
                } else {
                    entry.0.insert(client, p);
                }
            }
            for (round, (clients, global)) in by_round {
                let global = global.ok_or_else(|| Error::Format(format!("round {round} lacks its aggregate")))?;
                records.push(RoundRecord { round, clients, global });
            }
            if records.len() != header.rounds {
                return Err(Error::Format(format!("header claims {} rounds, found {}", header.rounds, records.len())));
            }
        }
        StorageMode::Coded => {
            let shard_index = get_u32(&mut r)? as usize;
            let n = get_u32(&mut r)? as usize;
            for _ in 0..n {
                get::<20>(&mut r)?;
            }
            let k = get_u32(&mut r)? as usize;
            let mut keys = Vec::with_capacity(k);
            let mut block_len = 0;
            for _ in 0..k {
                let _shard = get_u32(&mut r)?;
                let round = get_u32(&mut r)?;
                let key = AccessKey(get(&mut r)?);
                block_len = get_u32(&mut r)? as usize;
                keys.push((round, key));
            }
            let omegas = (0..header.shards).map(|_| get_u64(&mut r)).collect::<Result<Vec<_>>>()?;
            let mut slots = Vec::with_capacity(header.clients);
            let mut alphas = Vec::with_capacity(header.clients);
            for _ in 0..header.clients {
                slots.push(get_u32(&mut r)?);
                alphas.push(get_u64(&mut r)?);
            }
            let prime = get_u64(&mut r)?;
            let scale = get_u64(&mut r)?;
            let clamp = f64::from_bits(get_u64(&mut r)?);
            let codec = FixedPointCodec::new(prime, scale, clamp)?;
            coded =
                Some(CodedPart { shard_index, keys, block_len, points: EvalPoints::new(omegas, alphas), slots, codec });
        }
    }
    Ok(ShardFile { header, records, coded })
}

/// Writes every shard file (and, in coded mode, every client slice file)
/// under `root`, returning the paths written.
pub fn save(store: &HistoryStore, root: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(root.join("history"))?;
    let mut written = Vec::new();
    for shard in store.shards() {
        let mut buf = Vec::new();
        write_shard(store, shard, &mut buf)?;
        let path = shard_path(root, shard);
        fs::write(&path, buf)?;
        written.push(path);
    }
    if let Some(cs) = &store.coded {
        fs::create_dir_all(root.join("slices"))?;
        for slot in 0..cs.slots.len() {
            let mut buf = Vec::new();
            for (_, slices) in cs.holders.rounds() {
                buf.extend(encode_slice(&slices[slot], &cs.codec));
            }
            let path = client_path(root, slot);
            fs::write(&path, buf)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Every file [`load`] would open for `shards`.
pub fn files_for(root: &Path, shards: &[ShardId]) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = shards.iter().map(|&s| shard_path(root, s)).collect();
    if let Some(first) = paths.first() {
        let bytes = fs::read(first).map_err(|e| missing(first, e))?;
        let header = read_header(&mut Cursor::new(&bytes))?;
        if header.mode == StorageMode::Coded {
            paths.extend((0..header.clients).map(|slot| client_path(root, slot)));
        }
    }
    Ok(paths)
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Rebuilds a store from the given shards' files. Coded stores also read
/// every client's slice file, since each slice mixes all shards.
pub fn load(root: &Path, layout: &Arc<Layout>, shards: &[ShardId]) -> Result<HistoryStore> {
    if shards.is_empty() {
        return Err(Error::invalid("no shards requested"));
    }
    let mut store: Option<HistoryStore> = None;
    for &shard in shards {
        let path = shard_path(root, shard);
        let bytes = fs::read(&path).map_err(|e| missing(&path, e))?;
        let file = read_shard(&bytes, layout)?;
        if file.header.shard != shard {
            return Err(Error::Format(format!("{} holds shard {}", path.display(), file.header.shard)));
        }
        let st = store.get_or_insert_with(|| HistoryStore {
            mode: file.header.mode,
            layout: Arc::clone(layout),
            shard_clients: BTreeMap::new(),
            total_clients: file.header.clients,
            records: BTreeMap::new(),
            latest: BTreeMap::new(),
            coded: None,
            access: AccessLog::default(),
        });
        if st.mode != file.header.mode || st.total_clients != file.header.clients {
            return Err(Error::Format(format!("{} disagrees with other shard files", path.display())));
        }
        st.shard_clients.insert(shard, file.header.members.clone());
        let last = file.records.last().map(|r| r.round);
        for rec in file.records {
            st.records.insert((shard, rec.round), rec);
        }
        if let Some(part) = file.coded {
            let last = part.keys.iter().map(|(r, _)| *r).max();
            if st.coded.is_none() {
                let code = LagrangeCode::for_codec(part.points.clone(), &part.codec)?;
                st.coded = Some(CodedState {
                    codec: part.codec,
                    code,
                    strategy: DecodeStrategy::default(),
                    slots: part.slots.clone(),
                    shard_index: BTreeMap::new(),
                    block_len: part.block_len,
                    registry: KeyRegistry::new(0),
                    holders: SliceHolders::default(),
                    pending: BTreeMap::new(),
                    decode_ops: AtomicU64::new(0),
                });
            }
            let cs = st.coded.as_mut().unwrap();
            if cs.code.points() != &part.points || cs.slots != part.slots {
                return Err(Error::Format(format!("{} uses different evaluation points", path.display())));
            }
            cs.shard_index.insert(shard, part.shard_index);
            for (round, key) in part.keys {
                cs.registry.register(key, shard, round);
            }
            if let Some(l) = last {
                st.latest.insert(shard, l);
            }
        } else if let Some(l) = last {
            st.latest.insert(shard, l);
        }
    }
    let mut store = store.unwrap();
    if let Some(cs) = store.coded.as_mut() {
        let mut by_round: BTreeMap<Round, Vec<_>> = BTreeMap::new();
        for slot in 0..cs.slots.len() {
            let path = client_path(root, slot);
            let bytes = fs::read(&path).map_err(|e| missing(&path, e))?;
            let mut r = Cursor::new(bytes.as_slice());
            while (r.position() as usize) < bytes.len() {
                let f = decode_slice(&mut r)?;
                if f.prime != cs.codec.prime() || f.scale != cs.codec.scale() {
                    return Err(Error::Format(format!("{} uses a different codec", path.display())));
                }
                if f.slice.client_id as usize != slot {
                    return Err(Error::Format(format!("{} holds slot {}", path.display(), f.slice.client_id)));
                }
                by_round.entry(f.slice.round).or_default().push(f.slice);
            }
        }
        for (round, slices) in by_round {
            cs.holders.store(round, slices);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::tests::blob_stage;
    use crate::fed::train_stage;

    fn roundtrip(store: &HistoryStore) -> HistoryStore {
        let dir = tempfile::tempdir().unwrap();
        save(store, dir.path()).unwrap();
        let shards: Vec<_> = store.shards().collect();
        let back = load(dir.path(), store.layout(), &shards).unwrap();
        for &s in &shards {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            write_shard(store, s, &mut a).unwrap();
            write_shard(&back, s, &mut b).unwrap();
            assert_eq!(a, b);
        }
        back
    }

    #[test]
    fn uncoded_files_roundtrip_bit_exact() {
        let stage = blob_stage(4, 2, 2, 1, 1);
        let mut h = HistoryStore::uncoded(&stage);
        train_stage(&stage, &mut h).unwrap();
        let back = roundtrip(&h);
        for s in 0..2 {
            for g in 1..=2 {
                assert_eq!(back.fetch_round(s, g).unwrap(), h.fetch_round(s, g).unwrap());
                assert_eq!(back.fetch_global(s, g).unwrap(), h.fetch_global(s, g).unwrap());
            }
        }
    }

    #[test]
    fn coded_files_roundtrip() {
        let stage = blob_stage(5, 2, 2, 1, 2);
        let mut h = HistoryStore::coded(&stage, FixedPointCodec::default(), 3).unwrap();
        train_stage(&stage, &mut h).unwrap();
        let back = roundtrip(&h);
        assert_eq!(back.holders(), h.holders());
        assert_eq!(back.fetch_round(1, 2).unwrap(), h.fetch_round(1, 2).unwrap());
    }

    #[test]
    fn partial_load_reads_one_shard_file() {
        let stage = blob_stage(6, 3, 1, 1, 3);
        let mut h = HistoryStore::uncoded(&stage);
        train_stage(&stage, &mut h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&h, dir.path()).unwrap();
        fs::remove_file(shard_path(dir.path(), 0)).unwrap();
        let back = load(dir.path(), h.layout(), &[2]).unwrap();
        assert_eq!(back.fetch_round(2, 1).unwrap(), h.fetch_round(2, 1).unwrap());
        assert!(back.fetch_round(1, 1).is_err());
        let err = load(dir.path(), h.layout(), &[0]).unwrap_err();
        assert!(err.to_string().contains("shard_0.fush"), "{err}");
        assert_eq!(files_for(dir.path(), &[2]).unwrap(), vec![shard_path(dir.path(), 2)]);
    }

    #[test]
    fn header_fields() {
        let stage = blob_stage(4, 2, 3, 1, 4);
        let mut h = HistoryStore::uncoded(&stage);
        train_stage(&stage, &mut h).unwrap();
        let mut buf = Vec::new();
        write_shard(&h, 1, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FUSH");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf[6], 0);
        let field = |i: usize| u32::from_le_bytes(buf[7 + 4 * i..11 + 4 * i].try_into().unwrap());
        assert_eq!((field(0), field(1), field(2), field(3)), (2, 4, 3, stage.model().dim() as u32));
        let d = stage.model().dim();
        let header = 23 + 4 + 4 + 2 * 4;
        assert_eq!(buf.len(), header + 3 * 3 * (12 + 4 * d));
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let stage = blob_stage(4, 2, 1, 1, 5);
        let mut h = HistoryStore::uncoded(&stage);
        train_stage(&stage, &mut h).unwrap();
        let mut buf = Vec::new();
        write_shard(&h, 0, &mut buf).unwrap();
        assert!(read_shard(&buf[..buf.len() - 3], h.layout()).is_err());
        buf[0] = b'X';
        assert!(matches!(read_shard(&buf, h.layout()), Err(Error::Format(_))));
    }
}
