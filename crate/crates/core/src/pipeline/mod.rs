//! Datasets, configuration, checkpoints and the training loop.

mod checkpoint;
mod config;
mod dataset;
mod synthetic;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION};
pub use config::RunConfig;
pub use dataset::{format_dataset, load_dataset, parse_dataset, split_indices, Dataset, Record, SkippedRecord, Split};
pub use synthetic::{planted_pairs, FRAGMENTS};
pub use train::{evaluate, train, EpochLog, TrainOutcome};

use thiserror::Error;

use crate::encoders::EncoderError;
use crate::loss::LossError;
use crate::retrieval::RetrievalError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint version error: {0}")]
    Version(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl PipelineError {
    /// The message without the variant prefix.
    pub fn message(&self) -> String {
        match self {
            PipelineError::Input(m)
            | PipelineError::Config(m)
            | PipelineError::Version(m)
            | PipelineError::Checkpoint(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// True when the fault lies in user-supplied data or settings.
    pub fn is_input_error(&self) -> bool {
        match self {
            PipelineError::Input(_)
            | PipelineError::Config(_)
            | PipelineError::Version(_)
            | PipelineError::Checkpoint(_) => true,
            PipelineError::Encoder(e) => matches!(
                e,
                EncoderError::Input(_)
                    | EncoderError::Smiles(_)
                    | EncoderError::Format(_)
                    | EncoderError::WidthMismatch { .. }
                    | EncoderError::Io(_)
            ),
            _ => false,
        }
    }
}
