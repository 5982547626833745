//! Sharded federated unlearning with Lagrange-coded parameter storage.
//!
//! Clients are split into isolated shards that each run FedAvg against their
//! own server. Per-round client parameters are retained either verbatim or as
//! Lagrange-coded slices held by the clients, so that an unlearning request
//! only retrains the shard that contained the departing client.
//!
//! Module map:
//! - [`model`]: parameter vectors, fixed-point codec, datasets, MLP training.
//! - [`fed`]: stages, shard FedAvg training, the history store and its
//!   checkpoint format.
//! - [`unlearn`]: calibrated retraining (SE) plus the FR and FE baselines.
//! - [`coded`]: Lagrange encoding, Vandermonde and Gao decoding, key registry,
//!   slice wire format.
//! - [`sim`]: workloads, cost ledger, analytical time/storage models.
//! - [`mia`]: loss-threshold membership inference scoring.

pub mod coded;
pub mod error;
pub mod exec;
pub mod fed;
pub mod field;
pub mod mia;
pub mod model;
pub mod rng;
pub mod sim;
pub mod unlearn;

pub use error::{Error, Result};
pub use exec::Exec;
pub use field::PrimeField;
pub use model::{Dataset, FixedPointCodec, Mlp, ParamVector};

pub type ClientId = u32;
pub type ShardId = u32;
pub type Round = u32;
