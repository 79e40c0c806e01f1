//! Evaluation: BLEU variants, selection F1, embedding neighbours, and
//! alignment heat-map export.

mod alignment;
mod bleu;
mod neighbors;
mod selection;

pub use alignment::{export_alignment, render_alignment_svg};
pub use bleu::{cbleu, sbleu, sbleu_multi, BleuReport};
pub use neighbors::embedding_neighbors;
pub use selection::{selection_f1, SelectionReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty candidate list")]
    EmptyCorpus,
    #[error("candidate and reference counts differ: {cands} vs {refs}")]
    LengthMismatch { cands: usize, refs: usize },
    #[error("candidate {index} has an empty reference set")]
    NoReferences { index: usize },
    #[error("numeric slack must be non-negative, got {0}")]
    BadSlack(i64),
    #[error("no scenarios with gold selections")]
    NoGold,
    #[error("word `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("`{0}` is a reserved token, not a corpus word")]
    ReservedWord(String),
    #[error("alignment trace has {rows} step rows for {tokens} tokens")]
    TraceMismatch { rows: usize, tokens: usize },
    #[error("alignment rows span {row} records but {labels} labels were given")]
    LabelMismatch { row: usize, labels: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
