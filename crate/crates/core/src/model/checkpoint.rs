//! Self-contained model checkpoints.
//!
//! A checkpoint bundles the configuration, the vocabulary, and every
//! parameter tensor, so a saved model can generate text with no access to
//! the training corpus. Serialization is deterministic: parameters are
//! written as a name-sorted JSON object and f64 values round-trip exactly,
//! so identical models produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::diff::{ParamStore, Tensor};

use super::{ModelConfig, ModelError};

const FORMAT_TAG: &str = "selgen-checkpoint-v1";

/// A trained (or initialized) model: configuration, parameters, and the
/// vocabulary its token indices refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub vocab: Vocabulary,
}

impl Model {
    /// Builds a freshly initialized model.
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.len() != config.vocab {
            return Err(ModelError::BadConfig(format!(
                "vocabulary has {} entries but the configuration says {}",
                vocab.len(),
                config.vocab
            )));
        }
        let params = config.init_params(seed);
        Ok(Model {
            config,
            params,
            vocab,
        })
    }

    /// Checks parameters match the configuration's canonical layout.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        let expected = self.config.param_shapes();
        if self.params.len() != expected.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                self.params.len()
            )));
        }
        for (name, shape) in expected {
            let t = self
                .params
                .get(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        if self.vocab.len() != self.config.vocab {
            return Err(ModelError::Checkpoint(format!(
                "vocabulary has {} entries but the configuration says {}",
                self.vocab.len(),
                self.config.vocab
            )));
        }
        Ok(())
    }
}

/// A checkpoint on disk: the model plus generation metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub model: Model,
    /// Longest training description, in tokens; generation defaults its
    /// length budget to twice this.
    pub max_train_len: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    vocab: VocabField,
    vocab_sha256: String,
    max_train_len: usize,
    params: BTreeMap<String, TensorRepr>,
}

#[derive(Serialize, Deserialize)]
struct VocabField {
    words: Vec<String>,
}

/// Writes a checkpoint. Identical models yield byte-identical files.
pub fn save_model(path: impl AsRef<Path>, saved: &SavedModel) -> Result<(), ModelError> {
    let path = path.as_ref();
    saved.model.validate()?;
    let params: BTreeMap<String, TensorRepr> = saved
        .model
        .params
        .iter()
        .map(|(name, t)| {
            (
                name.to_string(),
                TensorRepr {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        format: FORMAT_TAG.to_string(),
        config: saved.model.config.clone(),
        vocab: VocabField {
            words: saved.model.vocab.words().to_vec(),
        },
        vocab_sha256: saved.model.vocab.content_hash(),
        max_train_len: saved.max_train_len,
        params,
    };
    let io_err = |source: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let out = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, &file).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Loads and fully validates a checkpoint: format tag, vocabulary hash,
/// and an exact match between stored parameters and the configuration's
/// canonical layout (no missing, extra, or misshapen tensors).
pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel, ModelError> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let parsed: CheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if parsed.format != FORMAT_TAG {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint format `{}` (expected `{FORMAT_TAG}`)",
            parsed.format
        )));
    }
    let vocab = Vocabulary::from_words(parsed.vocab.words);
    if vocab.content_hash() != parsed.vocab_sha256 {
        return Err(ModelError::Checkpoint(
            "vocabulary hash mismatch: checkpoint is corrupt".into(),
        ));
    }
    let mut raw = parsed.params;
    let mut params = ParamStore::new();
    for (name, shape) in parsed.config.param_shapes() {
        let repr = raw
            .remove(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter `{name}`")))?;
        if repr.shape != shape {
            return Err(ModelError::Checkpoint(format!(
                "parameter `{name}` has shape {:?}, expected {:?}",
                repr.shape, shape
            )));
        }
        let tensor = Tensor::new(repr.shape, repr.data)
            .map_err(|e| ModelError::Checkpoint(format!("parameter `{name}`: {e}")))?;
        params
            .insert(name, tensor)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    }
    if let Some(extra) = raw.keys().next() {
        return Err(ModelError::Checkpoint(format!(
            "unexpected parameter `{extra}` in checkpoint"
        )));
    }
    let model = Model {
        config: parsed.config,
        params,
        vocab,
    };
    model.validate()?;
    Ok(SavedModel {
        model,
        max_train_len: parsed.max_train_len,
    })
}
