//! The encoder–aligner–decoder model.
//!
//! * [`config`] — hyperparameters, canonical parameter layout, init.
//! * [`forward`] — tape-free forward steps used for decoding.
//! * [`graph`] — the differentiable training loss on the autodiff tape.
//! * [`checkpoint`] — self-contained save/load.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod graph;

pub use checkpoint::{load_model, save_model, Model, SavedModel};
pub use config::{names, AlignerMode, ModelConfig};
pub use forward::{align_step, decode_step, encode, multi_repr, preselect, AlignOutput, DecodeOutput};
pub use graph::{build_loss, loss, selection_penalty, LossBreakdown, LossGraph};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] crate::diff::DiffError),
    #[error("record feature width {got} does not match the configured width {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("scenario has no records")]
    NoRecords,
    #[error("no decoding targets")]
    EmptyTargets,
    #[error("token index {index} is out of range for a vocabulary of {vocab}")]
    TokenOutOfRange { index: usize, vocab: usize },
    #[error("decoder state width {got}, expected {expected}")]
    StateWidth { expected: usize, got: usize },
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
