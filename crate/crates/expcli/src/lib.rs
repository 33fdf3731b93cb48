//! Experiment pipeline: datasets, channel caches, model training and BER
//! reports.

pub mod dataset;
pub mod evaluate;
pub mod pipeline;
pub mod report;
pub mod settings;

pub use dataset::{gen_dataset, Dataset};
pub use evaluate::{evaluate_samples, DecoderInputs};
pub use pipeline::{run_all, StageError, Workspace};
pub use report::{BerReport, BerRow, Decoder};
pub use settings::{Profile, Settings};
