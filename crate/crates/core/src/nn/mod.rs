//! A small deterministic neural-network engine sized for error-map networks.

pub mod checkpoint;
pub mod layers;
mod linalg;
pub mod network;
pub mod train;

pub use checkpoint::Checkpoint;
pub use layers::{conv_forward, Activation, ConvLayer, DenseLayer};
pub use network::{Architecture, ErrorMapNetwork, LayerId};
pub use train::{gradients, loss, train, validation_error, GradBlock, Gradients, Sample, TrainConfig, TrainOutcome};
