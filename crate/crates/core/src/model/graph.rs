//! Training-time loss, recorded on the autodiff tape.
//!
//! Builds the full differentiable graph for one scenario: encoder pass,
//! pre-selection, per-step alignment and decoding under teacher forcing,
//! token negative log-likelihood, and (for the coarse-to-fine aligner) the
//! selection regularizer
//!
//! ```text
//! G = (sum_j p_j - gamma)^2 + (1 - max_j p_j)
//! ```
//!
//! which pulls the expected number of selected records toward `gamma`
//! while insisting at least one record is clearly selected.

use crate::diff::{BoundParams, DiffError, Tape, Tensor, Var};

use super::config::{names, AlignerMode, ModelConfig};
use super::ModelError;
use crate::corpus::START;

/// Handles into a recorded loss graph.
pub struct LossGraph {
    /// Total training objective (nll plus regularizer when present).
    pub total: Var,
    /// Summed token negative log-likelihood.
    pub nll: Var,
    /// Selection regularizer, absent for the basic aligner.
    pub reg: Option<Var>,
}

/// Plain-number view of a loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub nll: f64,
    pub reg: f64,
}

fn lstm_step(
    tape: &mut Tape,
    w: Var,
    b: Var,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    hidden: usize,
) -> Result<(Var, Var), DiffError> {
    let joint = tape.concat(&[x, h_prev])?;
    let linear = tape.matvec(w, joint)?;
    let pre = tape.add(linear, b)?;
    let i_raw = tape.slice(pre, 0, hidden)?;
    let f_raw = tape.slice(pre, hidden, hidden)?;
    let o_raw = tape.slice(pre, 2 * hidden, hidden)?;
    let g_raw = tape.slice(pre, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i_raw);
    let f = tape.sigmoid(f_raw);
    let o = tape.sigmoid(o_raw);
    let g = tape.tanh(g_raw);
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let ct = tape.tanh(c);
    let h = tape.mul(o, ct)?;
    Ok((h, c))
}

fn lstm_chain(
    tape: &mut Tape,
    w: Var,
    b: Var,
    inputs: &[Var],
    hidden: usize,
) -> Result<Vec<Var>, DiffError> {
    let mut h = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut c = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (nh, nc) = lstm_step(tape, w, b, x, h, c, hidden)?;
        h = nh;
        c = nc;
        out.push(h);
    }
    Ok(out)
}

/// Records the loss for one scenario on `tape`.
///
/// `targets` is the forced output sequence: the description's token
/// indices with the end-of-sequence index appended. The decoder input at
/// step `t` is the previous target (the start token at `t = 0`).
pub fn build_loss(
    tape: &mut Tape,
    bound: &BoundParams,
    features: &[Vec<f64>],
    targets: &[usize],
    config: &ModelConfig,
) -> Result<LossGraph, ModelError> {
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
    if targets.is_empty() {
        return Err(ModelError::EmptyTargets);
    }
    for &t in targets {
        if t >= config.vocab {
            return Err(ModelError::TokenOutOfRange {
                index: t,
                vocab: config.vocab,
            });
        }
    }

    let hidden = config.hidden;
    let feat_vars: Vec<Var> = features
        .iter()
        .map(|f| tape.leaf(Tensor::vector(f.clone())))
        .collect();

    // Record representations m_j.
    let repr: Vec<Var> = if config.use_encoder {
        let fw = bound.var(names::ENC_FWD_W)?;
        let fb = bound.var(names::ENC_FWD_B)?;
        let bw = bound.var(names::ENC_BWD_W)?;
        let bb = bound.var(names::ENC_BWD_B)?;
        let fwd = lstm_chain(tape, fw, fb, &feat_vars, hidden)?;
        let rev_inputs: Vec<Var> = feat_vars.iter().rev().copied().collect();
        let mut bwd = lstm_chain(tape, bw, bb, &rev_inputs, hidden)?;
        bwd.reverse();
        feat_vars
            .iter()
            .zip(fwd.iter().zip(&bwd))
            .map(|(&r, (&f, &b))| tape.concat(&[r, f, b]))
            .collect::<Result<_, _>>()?
    } else {
        feat_vars
    };

    // Pre-selection probabilities (coarse stage).
    let p_vec: Option<Var> = if config.aligner == AlignerMode::CoarseToFine {
        let p_mat = bound.var(names::ALIGNER_P)?;
        let q = bound.var(names::ALIGNER_Q)?;
        let mut parts = Vec::with_capacity(repr.len());
        for &m in &repr {
            let pm = tape.matvec(p_mat, m)?;
            let th = tape.tanh(pm);
            let d = tape.dot(q, th)?;
            parts.push(tape.sigmoid(d));
        }
        Some(tape.concat(&parts)?)
    } else {
        None
    };

    // Per-record pieces reused at every step: U m_j and the stacked matrix
    // of representations for forming context vectors.
    let u_mat = bound.var(names::ALIGNER_U)?;
    let um: Vec<Var> = repr
        .iter()
        .map(|&m| tape.matvec(u_mat, m))
        .collect::<Result<_, _>>()?;
    let stacked = tape.concat(&repr)?;
    let m_matrix = tape.reshape(stacked, vec![repr.len(), config.repr_dim()])?;

    let w_mat = bound.var(names::ALIGNER_W)?;
    let v_vec = bound.var(names::ALIGNER_V)?;
    let dec_w = bound.var(names::DEC_W)?;
    let dec_b = bound.var(names::DEC_B)?;
    let emb_mat = bound.var(names::DEC_E)?;
    let l0 = bound.var(names::DEC_L0)?;
    let ls = bound.var(names::DEC_LS)?;
    let lz = bound.var(names::DEC_LZ)?;

    let mut s = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut c = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut prev_token = START;
    let mut nll = tape.scalar(0.0);

    for &target in targets {
        // Alignment from the previous state.
        let ws = tape.matvec(w_mat, s)?;
        let mut scores = Vec::with_capacity(repr.len());
        for &umj in &um {
            let lin = tape.add(ws, umj)?;
            let th = tape.tanh(lin);
            scores.push(tape.dot(v_vec, th)?);
        }
        let beta = tape.concat(&scores)?;
        let weights = tape.softmax(beta)?;
        let alpha = match p_vec {
            Some(p) => {
                let gated = tape.mul(p, weights)?;
                let denom = tape.sum(gated)?;
                assert!(
                    tape.value(denom).item() > 0.0,
                    "degenerate refined-alignment normalizer"
                );
                tape.div_scalar(gated, denom)?
            }
            None => weights,
        };
        let z = tape.vecmat(alpha, m_matrix)?;

        // Decoder LSTM update.
        let emb = tape.row(emb_mat, prev_token)?;
        let joint = tape.concat(&[emb, s, z])?;
        let linear = tape.matvec(dec_w, joint)?;
        let pre = tape.add(linear, dec_b)?;
        let i_raw = tape.slice(pre, 0, hidden)?;
        let f_raw = tape.slice(pre, hidden, hidden)?;
        let o_raw = tape.slice(pre, 2 * hidden, hidden)?;
        let g_raw = tape.slice(pre, 3 * hidden, hidden)?;
        let i = tape.sigmoid(i_raw);
        let f = tape.sigmoid(f_raw);
        let o = tape.sigmoid(o_raw);
        let g = tape.tanh(g_raw);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        c = tape.add(fc, ig)?;
        let ct = tape.tanh(c);
        s = tape.mul(o, ct)?;

        // Deep output distribution.
        let lss = tape.matvec(ls, s)?;
        let lzz = tape.matvec(lz, z)?;
        let part = tape.add(emb, lss)?;
        let inner = tape.add(part, lzz)?;
        let logits = tape.matvec(l0, inner)?;
        let probs = tape.softmax(logits)?;
        let pt = tape.pick(probs, target)?;
        let lp = tape.ln(pt);
        nll = tape.sub(nll, lp)?;
        prev_token = target;
    }

    let (total, reg) = match p_vec {
        Some(p) => {
            let reg = selection_penalty(tape, p, config.gamma)?;
            (tape.add(nll, reg)?, Some(reg))
        }
        None => (nll, None),
    };

    Ok(LossGraph { total, nll, reg })
}

/// Records `G = (sum_j p_j - gamma)^2 + (1 - max_j p_j)` on the tape for a
/// vector of pre-selection probabilities.
pub fn selection_penalty(tape: &mut Tape, p: Var, gamma: f64) -> Result<Var, DiffError> {
    let sum_p = tape.sum(p)?;
    let target = tape.scalar(gamma);
    let diff = tape.sub(sum_p, target)?;
    let sq = tape.mul(diff, diff)?;
    let mx = tape.max(p)?;
    let one = tape.scalar(1.0);
    let om = tape.sub(one, mx)?;
    tape.add(sq, om)
}

/// Evaluates the loss for one scenario without keeping the tape around.
pub fn loss(
    features: &[Vec<f64>],
    targets: &[usize],
    params: &crate::diff::ParamStore,
    config: &ModelConfig,
) -> Result<LossBreakdown, ModelError> {
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let graph = build_loss(&mut tape, &bound, features, targets, config)?;
    Ok(LossBreakdown {
        total: tape.value(graph.total).item(),
        nll: tape.value(graph.nll).item(),
        reg: graph.reg.map(|r| tape.value(r).item()).unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;
    use crate::model::config::AlignerMode;
    use crate::model::forward;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden: 4,
            embed: 3,
            feat: 5,
            vocab: 9,
            gamma: 1.5,
            aligner: AlignerMode::CoarseToFine,
            use_encoder: true,
        }
    }

    fn feats(n: usize, f: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| (0..f).map(|k| ((j * f + k) as f64 * 0.61).cos() * 0.4).collect())
            .collect()
    }

    #[test]
    fn uniform_model_pays_log_v_per_target() {
        // All-zero parameters make every step a uniform distribution over
        // the vocabulary, so the nll must be exactly T * ln V.
        let c = cfg();
        let p = c.zero_params();
        let targets = vec![4, 5, 6, EOS];
        let out = loss(&feats(3, 5), &targets, &p, &c).unwrap();
        let expected = targets.len() as f64 * (c.vocab as f64).ln();
        assert!(
            (out.nll - expected).abs() < 1e-9,
            "nll {} vs expected {}",
            out.nll,
            expected
        );
    }

    #[test]
    fn regularizer_is_total_minus_nll_and_nonnegative() {
        let c = cfg();
        let p = c.init_params(21);
        let out = loss(&feats(3, 5), &[4, EOS], &p, &c).unwrap();
        assert!((out.total - (out.nll + out.reg)).abs() < 1e-12);
        assert!(out.reg >= 0.0);
    }

    #[test]
    fn basic_aligner_omits_the_regularizer() {
        let mut c = cfg();
        c.aligner = AlignerMode::Basic;
        let p = c.init_params(21);
        let out = loss(&feats(3, 5), &[4, EOS], &p, &c).unwrap();
        assert_eq!(out.reg, 0.0);
        assert_eq!(out.total, out.nll);
    }

    #[test]
    fn tape_forward_matches_pure_forward() {
        // Step the pure functions by hand under teacher forcing and
        // accumulate the same nll the tape computes.
        let c = cfg();
        let p = c.init_params(33);
        let features = feats(4, 5);
        let targets = vec![5, 7, 4, EOS];

        let repr = forward::multi_repr(&features, &p, &c).unwrap();
        let pre = forward::preselect(&repr, &p).unwrap();
        let mut s = vec![0.0; c.hidden];
        let mut cc = vec![0.0; c.hidden];
        let mut prev = START;
        let mut nll = 0.0;
        for &t in &targets {
            let a = forward::align_step(&s, &repr, Some(&pre), &p, &c).unwrap();
            let d = forward::decode_step(prev, &s, &cc, &a.context, &p, &c).unwrap();
            nll -= d.probs[t].ln();
            s = d.state;
            cc = d.cell;
            prev = t;
        }
        let sum_p: f64 = pre.iter().sum();
        let max_p = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let reg = (sum_p - c.gamma).powi(2) + (1.0 - max_p);

        let out = loss(&features, &targets, &p, &c).unwrap();
        assert!((out.nll - nll).abs() < 1e-12, "{} vs {}", out.nll, nll);
        assert!((out.reg - reg).abs() < 1e-12);
    }

    #[test]
    fn no_encoder_variant_also_evaluates() {
        let mut c = cfg();
        c.use_encoder = false;
        let p = c.init_params(2);
        let out = loss(&feats(3, 5), &[4, EOS], &p, &c).unwrap();
        assert!(out.total.is_finite());
    }

    #[test]
    fn bad_targets_are_rejected() {
        let c = cfg();
        let p = c.zero_params();
        assert!(matches!(
            loss(&feats(2, 5), &[], &p, &c),
            Err(ModelError::EmptyTargets)
        ));
        assert!(matches!(
            loss(&feats(2, 5), &[9], &p, &c),
            Err(ModelError::TokenOutOfRange { .. })
        ));
    }
}
