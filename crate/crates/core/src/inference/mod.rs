//! Decoding: greedy search, beam search, nearest-neighbour reranking, and
//! record-selection readout.

mod decode;
mod knn;
mod scenario;

pub use decode::{beam_decode, greedy_decode, trace_for_tokens, DecodeConfig, DecodeMode, Hypothesis};
pub use knn::{knn_beam_filter, FilterOutcome, NeighborIndex};
pub use scenario::{conditional_decode, ScenarioDecoder};

use crate::model::ModelError;

/// Per-step alignment diagnostics: attention scores, weights, refined
/// weights, and the context vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub refined: Vec<f64>,
    pub context: Vec<f64>,
}

/// Alignment diagnostics for a decoded sequence: the per-record
/// pre-selection probabilities (when the model has a pre-selector) and one
/// [`TraceStep`] per emitted token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignmentTrace {
    pub preselect: Option<Vec<f64>>,
    pub steps: Vec<TraceStep>,
}

/// Output of one decoding step.
pub struct StepOutput<S> {
    /// Next-token distribution (sums to 1).
    pub probs: Vec<f64>,
    /// State after consuming the step.
    pub next: S,
    /// Alignment diagnostics, if the model exposes them.
    pub align: Option<TraceStep>,
}

/// Anything that can be decoded step by step: the real scenario decoder,
/// or small hand-built models in tests.
pub trait SequenceModel {
    type State: Clone;
    fn vocab_len(&self) -> usize;
    fn start(&self) -> Self::State;
    fn step(&self, state: &Self::State, prev_token: usize)
        -> Result<StepOutput<Self::State>, ModelError>;
    /// Per-record pre-selection probabilities, when the model has them.
    fn preselect_probs(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Record indices a decode attended to: the argmax record of each step's
/// refined alignment, deduplicated and sorted.
pub fn selected_records(alpha_rows: &[Vec<f64>]) -> std::collections::BTreeSet<usize> {
    alpha_rows
        .iter()
        .filter(|row| !row.is_empty())
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
