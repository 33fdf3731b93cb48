//! Convolutional decoder.

pub mod adam;
pub mod arch;
pub mod model;
pub mod network;
pub mod ops;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{CnnArchitecture, ParamLayout};
pub use model::{CheckpointMeta, CnnModel};
pub use network::{backward, forward, loss, ForwardPass, Mode};
pub use train::{predict, predict_batch, train, train_with, EpochStats, TrainConfig, TrainTrace};
