//! Dense networks with hand-written reverse passes, Adam, feature
//! standardization, finite-difference gradient checks and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod mlp;
mod schedule;
mod standardizer;

pub use adam::{adam_step, clip_global_norm, layout_blocks, AdamState, ParamBlock};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, sha256_hex, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use mlp::{Dense, MlpParams, MlpTape};
pub use schedule::{lr_at, TrainConfig};
pub use standardizer::{Standardizer, StandardizerAccumulator, STD_FLOOR};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("tape does not belong to the current parameters")]
    StaleTape,
    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NeuralError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Self::Contract(msg.into())
    }
}
