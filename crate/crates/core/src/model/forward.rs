//! Tape-free forward computation: encoding, pre-selection, one alignment
//! step, one decoder step.
//!
//! These functions power decoding, where no gradients are needed. The
//! training path records the same mathematics on the autodiff tape
//! (`graph`); unit tests pin the two routes together.

use crate::diff::{ParamStore, Tensor};

use super::config::{names, AlignerMode, ModelConfig};
use super::ModelError;

// ----- small dense helpers (forward only) --------------------------------

fn affine(w: &Tensor, b: Option<&Tensor>, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    debug_assert_eq!(cols, x.len());
    let wd = w.data();
    let mut out = match b {
        Some(b) => b.data().to_vec(),
        None => vec![0.0; rows],
    };
    for (r, o) in out.iter_mut().enumerate() {
        let row = &wd[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// One LSTM cell update from a packed pre-activation `[i f o g]`.
fn lstm_cell(pre: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = c_prev.len();
    debug_assert_eq!(pre.len(), 4 * h);
    let mut hidden = vec![0.0; h];
    let mut cell = vec![0.0; h];
    for k in 0..h {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[h + k]);
        let o = sigmoid(pre[2 * h + k]);
        let g = pre[3 * h + k].tanh();
        cell[k] = f * c_prev[k] + i * g;
        hidden[k] = o * cell[k].tanh();
    }
    (hidden, cell)
}

fn check_features(features: &[Vec<f64>], config: &ModelConfig) -> Result<(), ModelError> {
    if features.is_empty() {
        return Err(ModelError::NoRecords);
    }
    for f in features {
        if f.len() != config.feat {
            return Err(ModelError::FeatureWidth {
                expected: config.feat,
                got: f.len(),
            });
        }
    }
    Ok(())
}

// ----- encoder ------------------------------------------------------------

/// Runs one LSTM direction over the feature sequence, returning all hidden
/// states.
fn lstm_scan(
    w: &Tensor,
    b: &Tensor,
    inputs: impl Iterator<Item = Vec<f64>>,
    hidden: usize,
) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::new();
    for x in inputs {
        let mut joint = x;
        joint.extend_from_slice(&h);
        let pre = affine(w, Some(b), &joint);
        let (nh, nc) = lstm_cell(&pre, &c);
        h = nh;
        c = nc;
        out.push(h.clone());
    }
    out
}

/// Bidirectional annotations `h_j`: forward and backward LSTM states over
/// the record sequence, concatenated per position (width `2H`).
pub fn encode(
    features: &[Vec<f64>],
    params: &ParamStore,
    config: &ModelConfig,
) -> Result<Vec<Vec<f64>>, ModelError> {
    check_features(features, config)?;
    let fw = params.require(names::ENC_FWD_W)?;
    let fb = params.require(names::ENC_FWD_B)?;
    let bw = params.require(names::ENC_BWD_W)?;
    let bb = params.require(names::ENC_BWD_B)?;
    let fwd = lstm_scan(fw, fb, features.iter().cloned(), config.hidden);
    let mut bwd = lstm_scan(bw, bb, features.iter().rev().cloned(), config.hidden);
    bwd.reverse();
    Ok(fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| {
            let mut h = f;
            h.extend(b);
            h
        })
        .collect())
}

/// Per-record representations `m_j` fed to the aligner: raw features
/// concatenated with encoder annotations, or the features alone when the
/// encoder is disabled.
pub fn multi_repr(
    features: &[Vec<f64>],
    params: &ParamStore,
    config: &ModelConfig,
) -> Result<Vec<Vec<f64>>, ModelError> {
    if !config.use_encoder {
        check_features(features, config)?;
        return Ok(features.to_vec());
    }
    let ann = encode(features, params, config)?;
    Ok(features
        .iter()
        .zip(ann)
        .map(|(f, h)| {
            let mut m = f.clone();
            m.extend(h);
            m
        })
        .collect())
}

/// Coarse pre-selection probabilities `p_j = sigmoid(q . tanh(P m_j))`.
pub fn preselect(repr: &[Vec<f64>], params: &ParamStore) -> Result<Vec<f64>, ModelError> {
    let p = params.require(names::ALIGNER_P)?;
    let q = params.require(names::ALIGNER_Q)?;
    Ok(repr
        .iter()
        .map(|m| {
            let t: Vec<f64> = affine(p, None, m).into_iter().map(f64::tanh).collect();
            sigmoid(q.data().iter().zip(&t).map(|(a, b)| a * b).sum())
        })
        .collect())
}

/// One alignment step given the previous decoder state.
#[derive(Clone, Debug)]
pub struct AlignOutput {
    /// Raw attention scores `beta`.
    pub scores: Vec<f64>,
    /// Softmax attention weights `w`.
    pub weights: Vec<f64>,
    /// Refined weights `alpha` (equal to `weights` for the basic aligner).
    pub refined: Vec<f64>,
    /// Attention-weighted sum of record representations `z`.
    pub context: Vec<f64>,
}

pub fn align_step(
    s_prev: &[f64],
    repr: &[Vec<f64>],
    pre: Option<&[f64]>,
    params: &ParamStore,
    config: &ModelConfig,
) -> Result<AlignOutput, ModelError> {
    if s_prev.len() != config.hidden {
        return Err(ModelError::StateWidth {
            expected: config.hidden,
            got: s_prev.len(),
        });
    }
    let w_mat = params.require(names::ALIGNER_W)?;
    let u_mat = params.require(names::ALIGNER_U)?;
    let v = params.require(names::ALIGNER_V)?;
    let ws = affine(w_mat, None, s_prev);
    let scores: Vec<f64> = repr
        .iter()
        .map(|m| {
            let um = affine(u_mat, None, m);
            v.data()
                .iter()
                .zip(ws.iter().zip(um))
                .map(|(vk, (a, b))| vk * (a + b).tanh())
                .sum()
        })
        .collect();
    let weights = softmax(&scores);
    let refined = match (config.aligner, pre) {
        (AlignerMode::CoarseToFine, Some(p)) => {
            let u: Vec<f64> = p.iter().zip(&weights).map(|(a, b)| a * b).collect();
            let denom: f64 = u.iter().sum();
            // Sigmoid and softmax outputs are strictly positive, so the
            // renormalizer cannot vanish on finite inputs.
            assert!(denom > 0.0, "degenerate refined-alignment normalizer");
            u.into_iter().map(|x| x / denom).collect()
        }
        (AlignerMode::Basic, _) => weights.clone(),
        (AlignerMode::CoarseToFine, None) => {
            return Err(ModelError::BadConfig(
                "coarse-to-fine alignment requires pre-selection probabilities".into(),
            ))
        }
    };
    let width = config.repr_dim();
    let mut context = vec![0.0; width];
    for (a, m) in refined.iter().zip(repr) {
        for (cx, mx) in context.iter_mut().zip(m) {
            *cx += a * mx;
        }
    }
    Ok(AlignOutput {
        scores,
        weights,
        refined,
        context,
    })
}

/// One decoder step: consumes the previous token, previous LSTM state, and
/// the aligner context; produces next-token probabilities and the updated
/// state.
#[derive(Clone, Debug)]
pub struct DecodeOutput {
    pub probs: Vec<f64>,
    pub state: Vec<f64>,
    pub cell: Vec<f64>,
}

pub fn decode_step(
    prev_token: usize,
    s_prev: &[f64],
    c_prev: &[f64],
    context: &[f64],
    params: &ParamStore,
    config: &ModelConfig,
) -> Result<DecodeOutput, ModelError> {
    if prev_token >= config.vocab {
        return Err(ModelError::TokenOutOfRange {
            index: prev_token,
            vocab: config.vocab,
        });
    }
    if s_prev.len() != config.hidden || c_prev.len() != config.hidden {
        return Err(ModelError::StateWidth {
            expected: config.hidden,
            got: if s_prev.len() != config.hidden {
                s_prev.len()
            } else {
                c_prev.len()
            },
        });
    }
    let e = params.require(names::DEC_E)?;
    let w = params.require(names::DEC_W)?;
    let b = params.require(names::DEC_B)?;
    let l0 = params.require(names::DEC_L0)?;
    let ls = params.require(names::DEC_LS)?;
    let lz = params.require(names::DEC_LZ)?;

    let d = config.embed;
    let emb = &e.data()[prev_token * d..(prev_token + 1) * d];
    let mut joint = emb.to_vec();
    joint.extend_from_slice(s_prev);
    joint.extend_from_slice(context);
    let pre = affine(w, Some(b), &joint);
    let (state, cell) = lstm_cell(&pre, c_prev);

    // Deep output: logits read the embedding, the new state, and the
    // context through a shared projection.
    let mut inner = emb.to_vec();
    for (i, v) in affine(ls, None, &state).into_iter().enumerate() {
        inner[i] += v;
    }
    for (i, v) in affine(lz, None, context).into_iter().enumerate() {
        inner[i] += v;
    }
    let logits = affine(l0, None, &inner);
    Ok(DecodeOutput {
        probs: softmax(&logits),
        state,
        cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::AlignerMode;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden: 4,
            embed: 3,
            feat: 5,
            vocab: 7,
            gamma: 1.5,
            aligner: AlignerMode::CoarseToFine,
            use_encoder: true,
        }
    }

    fn feats(n: usize, f: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| (0..f).map(|k| ((j * f + k) as f64 * 0.37).sin() * 0.5).collect())
            .collect()
    }

    #[test]
    fn encode_produces_double_width_annotations() {
        let c = cfg();
        let p = c.init_params(5);
        let h = encode(&feats(3, 5), &p, &c).unwrap();
        assert_eq!(h.len(), 3);
        assert!(h.iter().all(|x| x.len() == 8));
    }

    #[test]
    fn zero_params_give_uniform_probs_and_weights() {
        let c = cfg();
        let p = c.zero_params();
        let repr = multi_repr(&feats(3, 5), &p, &c).unwrap();
        let pre = preselect(&repr, &p).unwrap();
        assert!(pre.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let s0 = vec![0.0; 4];
        let a = align_step(&s0, &repr, Some(&pre), &p, &c).unwrap();
        assert!(a.weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-12));
        assert!(a.refined.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-12));
        let d = decode_step(1, &s0, &s0, &a.context, &p, &c).unwrap();
        assert!(d.probs.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-12));
    }

    #[test]
    fn refined_weights_are_a_distribution() {
        let c = cfg();
        let p = c.init_params(9);
        let repr = multi_repr(&feats(4, 5), &p, &c).unwrap();
        let pre = preselect(&repr, &p).unwrap();
        let a = align_step(&[0.1, -0.2, 0.3, 0.0], &repr, Some(&pre), &p, &c).unwrap();
        let s: f64 = a.refined.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(a.refined.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn hand_computed_refinement() {
        // With p = [0.8, 0.2] and w = [0.5, 0.5], the gated weights are
        // [0.4, 0.1]; normalizing gives [0.8, 0.2].
        let p = [0.8, 0.2];
        let w = [0.5, 0.5];
        let u: Vec<f64> = p.iter().zip(&w).map(|(a, b)| a * b).collect();
        let z: f64 = u.iter().sum();
        let alpha: Vec<f64> = u.iter().map(|x| x / z).collect();
        assert!((alpha[0] - 0.8).abs() < 1e-12 && (alpha[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn feature_width_mismatch_is_caught() {
        let c = cfg();
        let p = c.init_params(1);
        let bad = vec![vec![0.0; 4]];
        assert!(matches!(
            multi_repr(&bad, &p, &c),
            Err(ModelError::FeatureWidth { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn token_out_of_range_is_caught() {
        let c = cfg();
        let p = c.init_params(1);
        let s0 = vec![0.0; 4];
        let ctx = vec![0.0; c.repr_dim()];
        assert!(matches!(
            decode_step(7, &s0, &s0, &ctx, &p, &c),
            Err(ModelError::TokenOutOfRange { index: 7, vocab: 7 })
        ));
    }
}
