//! Lagrange-coded storage of per-round shard parameter blocks.
//!
//! Each client `i` holds `u(α_i)`, where `u` is the degree `< S` polynomial
//! through the points `(ω_s, block_s)`. Any `S` slices recover every block
//! (Vandermonde path); all `C` slices recover them while correcting up to
//! `⌊(C - S)/2⌋` corrupted slices (Gao decoder).

mod keys;
mod lagrange;
mod points;
pub mod real;
mod robust;
mod slice;

pub use keys::{AccessKey, AuditEntry, KeyRegistry, SliceHolders};
pub use lagrange::{encode_slices, reconstruct_fast, solve_vandermonde, LagrangeCode};
pub use points::EvalPoints;
pub use robust::{reconstruct_robust, RobustDecode};
pub use slice::{decode_slice, encode_slice, CodedSlice, ShardBlock, SliceFile, SLICE_MAGIC, SLICE_VERSION};

use serde::{Deserialize, Serialize};

/// Which reconstruction path the server uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStrategy {
    /// Any S slices, no error tolerance.
    Fast,
    /// All C slices, corrects up to ⌊(C - S)/2⌋ corrupted ones.
    #[default]
    Robust,
}
