//! Corpus data model: records, scenarios, vocabulary, featurization, and a
//! synthetic weather-forecast generator.

mod data;
mod features;
mod synth;
mod vocab;

pub use data::{load_scenarios, save_scenarios, Record, Scenario};
pub use features::{FeatureSpec, ModeSpec, NumericFieldSpec, TypeSpec};
pub use synth::{synth_generate, synthetic_feature_spec, SynthConfig};
pub use vocab::{Vocabulary, EOS, PAD, START, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid scenario: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record type `{0}` is not in the feature spec")]
    UnknownRecordType(String),
    #[error("record of type `{rtype}` has no attribute `{attr}` required by the feature spec")]
    MissingAttribute { rtype: String, attr: String },
    #[error("record of type `{rtype}` has mode `{mode}` not listed in the feature spec")]
    UnknownMode { rtype: String, mode: String },
    #[error("feature spec field `{field}` of `{rtype}` has an empty range")]
    EmptyRange { rtype: String, field: String },
    #[error("scenario has no records")]
    EmptyScenario,
    #[error("synthetic generator: {0}")]
    Synth(String),
}
