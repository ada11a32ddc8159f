//! A micro decoder-only transformer over the special + TS-token vocabulary,
//! with hand-written backpropagation and an AdamW training loop.

pub mod kernels;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

pub use kernels::Real;
pub use metrics::Confusion;
pub use network::{ask_prefix, ce_from_logits};
pub use optim::{AdamW, AdamWConfig, Schedule};
pub use params::{Layout, Model, ModelConfig};
pub use train::{
    evaluate, load_checkpoint, save_checkpoint, train, CheckpointHeader, EvalReport, Example,
    LogRow, TrainConfig, TrainOutcome,
};
