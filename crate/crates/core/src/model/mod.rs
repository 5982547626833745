//! Parameter vectors, the fixed-point field codec, datasets and the MLP
//! classifier trained by every client.

mod codec;
mod data;
pub mod idx;
mod mlp;
mod params;
mod partition;

pub use codec::{FixedPointCodec, Quantized};
pub use data::{make_synthetic_dataset, Dataset};
pub use mlp::{evaluate, train_local, Evaluation, Mlp, MlpConfig, SgdConfig};
pub use params::{LayerShape, Layout, ParamVector};
pub use partition::{partition, partition_indices, PartitionMode, PartitionSpec};
