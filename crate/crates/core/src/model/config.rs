//! Model hyperparameters and parameter construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{ParamStore, Tensor};

/// Canonical parameter names. Grouped by component; the packed LSTM
/// matrices stack the input, forget, output, and candidate gates in that
/// order.
pub mod names {
    pub const ENC_FWD_W: &str = "encoder_fwd.T_e.w";
    pub const ENC_FWD_B: &str = "encoder_fwd.T_e.b";
    pub const ENC_BWD_W: &str = "encoder_bwd.T_e.w";
    pub const ENC_BWD_B: &str = "encoder_bwd.T_e.b";
    pub const ALIGNER_P: &str = "aligner.P";
    pub const ALIGNER_Q: &str = "aligner.q";
    pub const ALIGNER_W: &str = "aligner.W";
    pub const ALIGNER_U: &str = "aligner.U";
    pub const ALIGNER_V: &str = "aligner.v";
    pub const DEC_W: &str = "decoder.T_d.w";
    pub const DEC_B: &str = "decoder.T_d.b";
    pub const DEC_E: &str = "decoder.E";
    pub const DEC_L0: &str = "decoder.L0";
    pub const DEC_LS: &str = "decoder.Ls";
    pub const DEC_LZ: &str = "decoder.Lz";
}

/// Aligner refinement mode: with the coarse-to-fine aligner, a per-record
/// pre-selector gates the per-step attention; the basic aligner uses the
/// attention weights directly and drops the selection regularizer.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignerMode {
    #[serde(rename = "c2f")]
    CoarseToFine,
    Basic,
}

impl std::fmt::Display for AlignerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlignerMode::CoarseToFine => write!(f, "c2f"),
            AlignerMode::Basic => write!(f, "basic"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// LSTM hidden width `H`; also used as the attention width.
    pub hidden: usize,
    /// Word-embedding width `D`.
    pub embed: usize,
    /// Record feature width `F` (from the feature spec).
    pub feat: usize,
    /// Vocabulary size `V`, reserved tokens included.
    pub vocab: usize,
    /// Selection-budget target: the regularizer pulls the summed
    /// pre-selection probabilities toward this value.
    pub gamma: f64,
    pub aligner: AlignerMode,
    /// When false, records feed the aligner directly with no bidirectional
    /// LSTM pass over them.
    pub use_encoder: bool,
}

impl ModelConfig {
    /// Width of a record's aligned representation: raw features plus, with
    /// the encoder, the concatenated bidirectional annotations.
    pub fn repr_dim(&self) -> usize {
        if self.use_encoder {
            self.feat + 2 * self.hidden
        } else {
            self.feat
        }
    }

    /// Attention width (the paper-style single-width choice: same as the
    /// hidden width).
    pub fn attn_dim(&self) -> usize {
        self.hidden
    }

    /// Parameter names and shapes in canonical order for this
    /// configuration.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (h, d, f, v) = (self.hidden, self.embed, self.feat, self.vocab);
        let m = self.repr_dim();
        let a = self.attn_dim();
        let mut shapes = Vec::new();
        if self.use_encoder {
            shapes.push((names::ENC_FWD_W, vec![4 * h, f + h]));
            shapes.push((names::ENC_FWD_B, vec![4 * h]));
            shapes.push((names::ENC_BWD_W, vec![4 * h, f + h]));
            shapes.push((names::ENC_BWD_B, vec![4 * h]));
        }
        if self.aligner == AlignerMode::CoarseToFine {
            shapes.push((names::ALIGNER_P, vec![a, m]));
            shapes.push((names::ALIGNER_Q, vec![a]));
        }
        shapes.push((names::ALIGNER_W, vec![a, h]));
        shapes.push((names::ALIGNER_U, vec![a, m]));
        shapes.push((names::ALIGNER_V, vec![a]));
        shapes.push((names::DEC_W, vec![4 * h, d + h + m]));
        shapes.push((names::DEC_B, vec![4 * h]));
        shapes.push((names::DEC_E, vec![v, d]));
        shapes.push((names::DEC_L0, vec![v, d]));
        shapes.push((names::DEC_LS, vec![d, h]));
        shapes.push((names::DEC_LZ, vec![d, m]));
        shapes
    }

    /// Fresh parameters: weights drawn uniformly from
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero except LSTM forget
    /// gates, which start at 1 so memory persists early in training.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let tensor = if name.ends_with(".b") {
                let mut t = Tensor::zeros(shape);
                // Packed gate order (i, f, o, g): forget-gate slots are the
                // second block.
                let h = t.len() / 4;
                for x in &mut t.data_mut()[h..2 * h] {
                    *x = 1.0;
                }
                t
            } else {
                let (fan_out, fan_in) = match shape.as_slice() {
                    [r, c] => (*r, *c),
                    [n] => (1, *n),
                    other => unreachable!("parameters are vectors or matrices, got {other:?}"),
                };
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                Tensor::new(shape, data).expect("length matches shape by construction")
            };
            store
                .insert(name, tensor)
                .expect("canonical parameter names are unique");
        }
        store
    }

    /// All-zero parameters of the right shapes (useful for probing: with
    /// them, every decoding step is a uniform distribution).
    pub fn zero_params(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            store
                .insert(name, Tensor::zeros(shape))
                .expect("canonical parameter names are unique");
        }
        store
    }

    /// Checks the configuration is usable.
    pub fn validate(&self) -> Result<(), super::ModelError> {
        for (what, v) in [
            ("hidden", self.hidden),
            ("embed", self.embed),
            ("feat", self.feat),
        ] {
            if v == 0 {
                return Err(super::ModelError::BadConfig(format!("{what} must be nonzero")));
            }
        }
        // Reserved tokens alone need 4 slots.
        if self.vocab < 4 {
            return Err(super::ModelError::BadConfig(format!(
                "vocab must cover the 4 reserved tokens, got {}",
                self.vocab
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(super::ModelError::BadConfig(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            embed: 6,
            feat: 10,
            vocab: 20,
            gamma: 2.5,
            aligner: AlignerMode::CoarseToFine,
            use_encoder: true,
        }
    }

    #[test]
    fn shapes_follow_the_configuration() {
        let c = cfg();
        let shapes: std::collections::HashMap<_, _> = c.param_shapes().into_iter().collect();
        assert_eq!(shapes[names::ENC_FWD_W], vec![32, 18]); // 4H x (F+H)
        assert_eq!(shapes[names::ALIGNER_P], vec![8, 26]); // A x (F+2H)
        assert_eq!(shapes[names::DEC_W], vec![32, 40]); // 4H x (D+H+M)
        assert_eq!(shapes[names::DEC_E], vec![20, 6]);
        assert_eq!(shapes[names::DEC_LZ], vec![6, 26]);
    }

    #[test]
    fn basic_mode_has_no_preselector_params() {
        let mut c = cfg();
        c.aligner = AlignerMode::Basic;
        let names_list: Vec<&str> = c.param_shapes().into_iter().map(|(n, _)| n).collect();
        assert!(!names_list.contains(&names::ALIGNER_P));
        assert!(!names_list.contains(&names::ALIGNER_Q));
        assert!(names_list.contains(&names::ALIGNER_W));
    }

    #[test]
    fn no_encoder_shrinks_the_repr() {
        let mut c = cfg();
        c.use_encoder = false;
        assert_eq!(c.repr_dim(), 10);
        let names_list: Vec<&str> = c.param_shapes().into_iter().map(|(n, _)| n).collect();
        assert!(!names_list.contains(&names::ENC_FWD_W));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let c = cfg();
        let a = c.init_params(11);
        let b = c.init_params(11);
        let d = c.init_params(12);
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn init_bounds_and_forget_bias() {
        let c = cfg();
        let p = c.init_params(3);
        let w = p.get(names::ENC_FWD_W).unwrap();
        let bound = (6.0_f64 / (32.0 + 18.0)).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        let b = p.get(names::ENC_FWD_B).unwrap();
        assert!(b.data()[0..8].iter().all(|&v| v == 0.0));
        assert!(b.data()[8..16].iter().all(|&v| v == 1.0));
        assert!(b.data()[16..32].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aligner_mode_serializes_compactly() {
        assert_eq!(serde_json::to_string(&AlignerMode::CoarseToFine).unwrap(), "\"c2f\"");
        assert_eq!(serde_json::to_string(&AlignerMode::Basic).unwrap(), "\"basic\"");
    }

    #[test]
    fn validation_rejects_degenerate_configs() {
        let mut c = cfg();
        c.vocab = 3;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.gamma = -1.0;
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
