use std::io::Read;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::FixedPointCodec;
use crate::{Round, ShardId};

pub const SLICE_MAGIC: &[u8; 4] = b"FUCS";
pub const SLICE_VERSION: u16 = 1;

/// One shard's quantized payload for one round, padded to the common length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardBlock {
    pub shard_id: ShardId,
    pub round: Round,
    pub values: Vec<u64>,
}

/// The coded vector held by one client slot for one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedSlice {
    /// Slot index into [`EvalPoints::alphas`](super::EvalPoints).
    pub client_id: u32,
    pub round: Round,
    pub values: Vec<u64>,
    pub tag: [u8; 32],
}

fn content_tag(client_id: u32, round: Round, values: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(client_id.to_le_bytes());
    h.update(round.to_le_bytes());
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

impl CodedSlice {
    pub fn new(client_id: u32, round: Round, values: Vec<u64>) -> Self {
        let tag = content_tag(client_id, round, &values);
        Self { client_id, round, values, tag }
    }

    /// True when the tag still matches the contents.
    pub fn verify(&self) -> bool {
        content_tag(self.client_id, self.round, &self.values) == self.tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A slice read back from its wire form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceFile {
    pub slice: CodedSlice,
    pub prime: u64,
    pub scale: u64,
}

/// Wire form: `"FUCS"`, version u16, round u32, client_id u32, B u32,
/// p u64, scale u64, then B field elements as u64 and the 32-byte tag.
/// All integers little-endian.
pub fn encode_slice(slice: &CodedSlice, codec: &FixedPointCodec) -> Vec<u8> {
    let mut out = Vec::with_capacity(34 + slice.values.len() * 8 + 32);
    out.extend_from_slice(SLICE_MAGIC);
    out.extend(SLICE_VERSION.to_le_bytes());
    out.extend(slice.round.to_le_bytes());
    out.extend(slice.client_id.to_le_bytes());
    out.extend((slice.values.len() as u32).to_le_bytes());
    out.extend(codec.prime().to_le_bytes());
    out.extend(codec.scale().to_le_bytes());
    for v in &slice.values {
        out.extend(v.to_le_bytes());
    }
    out.extend_from_slice(&slice.tag);
    out
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads one slice. The tag is carried through unchecked; call
/// [`CodedSlice::verify`] to detect tampering.
pub fn decode_slice(r: &mut impl Read) -> Result<SliceFile> {
    let magic: [u8; 4] = take(r)?;
    if &magic != SLICE_MAGIC {
        return Err(Error::Format(format!("bad slice magic {magic:?}")));
    }
    let version = u16::from_le_bytes(take(r)?);
    if version != SLICE_VERSION {
        return Err(Error::Format(format!("unsupported slice version {version}")));
    }
    let round = u32::from_le_bytes(take(r)?);
    let client_id = u32::from_le_bytes(take(r)?);
    let len = u32::from_le_bytes(take(r)?) as usize;
    let prime = u64::from_le_bytes(take(r)?);
    let scale = u64::from_le_bytes(take(r)?);
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        let v = u64::from_le_bytes(take(r)?);
        if v >= prime {
            return Err(Error::Format(format!("element {v} not below p = {prime}")));
        }
        values.push(v);
    }
    let tag = take::<32>(r)?;
    Ok(SliceFile { slice: CodedSlice { client_id, round, values, tag }, prime, scale })
}
