//! Greedy and beam search over a [`SequenceModel`].

use serde::{Deserialize, Serialize};

use crate::corpus::{EOS, START};
use crate::model::ModelError;

use super::{AlignmentTrace, SequenceModel};

/// How to decode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize },
    /// Beam search followed by nearest-neighbour reranking of the surviving
    /// hypotheses.
    Knn { width: usize, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    /// Hard cap on emitted tokens; hypotheses still open at the cap are
    /// marked truncated.
    pub max_length: usize,
}

/// One decoded candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens (the end-of-sequence marker is consumed, not kept).
    pub tokens: Vec<usize>,
    /// Sum of per-step token log-probabilities, including the final
    /// end-of-sequence step for finished hypotheses.
    pub log_prob: f64,
    /// True once the model emitted the end-of-sequence token.
    pub finished: bool,
    /// True when decoding hit the length cap instead of finishing.
    pub truncated: bool,
    /// Refined alignment weights for each emitted token.
    pub alpha_rows: Vec<Vec<f64>>,
}

/// Greedy decoding: always take the most probable token (ties resolve to
/// the lowest index) until end-of-sequence or the length cap.
pub fn greedy_decode<M: SequenceModel>(
    model: &M,
    max_length: usize,
) -> Result<(Hypothesis, AlignmentTrace), ModelError> {
    let mut state = model.start();
    let mut prev = START;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        truncated: false,
        alpha_rows: Vec::new(),
    };
    let mut trace = AlignmentTrace {
        preselect: model.preselect_probs(),
        steps: Vec::new(),
    };
    loop {
        if hyp.tokens.len() >= max_length {
            hyp.truncated = true;
            break;
        }
        let out = model.step(&state, prev)?;
        let mut best = 0;
        for (i, &p) in out.probs.iter().enumerate() {
            if p > out.probs[best] {
                best = i;
            }
        }
        hyp.log_prob += out.probs[best].ln();
        if best == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(best);
        if let Some(step) = out.align {
            hyp.alpha_rows.push(step.refined.clone());
            trace.steps.push(step);
        }
        state = out.next;
        prev = best;
    }
    Ok((hyp, trace))
}

/// Re-walks a fixed token sequence (teacher-forced) and collects the full
/// alignment trace for it. Beam search and reranking return hypotheses
/// without traces; this reconstructs one for the chosen hypothesis, and on
/// the tokens greedy decoding emits it reproduces the greedy trace.
pub fn trace_for_tokens<M: SequenceModel>(
    model: &M,
    tokens: &[usize],
) -> Result<AlignmentTrace, ModelError> {
    let mut trace = AlignmentTrace {
        preselect: model.preselect_probs(),
        steps: Vec::new(),
    };
    let mut state = model.start();
    let mut prev = START;
    for &tok in tokens {
        let out = model.step(&state, prev)?;
        if let Some(step) = out.align {
            trace.steps.push(step);
        }
        state = out.next;
        prev = tok;
    }
    Ok(trace)
}

struct BeamItem<S> {
    hyp: Hypothesis,
    state: S,
}

/// Beam search with `width` live hypotheses.
///
/// Each round, every open hypothesis proposes its `width` best extensions;
/// finished hypotheses compete in the same pool with no length
/// normalization. Ordering is by log-probability (descending) with ties
/// broken by lexicographically smaller token sequences, which makes the
/// search deterministic and makes `width = 1` coincide exactly with greedy
/// decoding. Returns surviving hypotheses, best first.
pub fn beam_decode<M: SequenceModel>(
    model: &M,
    width: usize,
    max_length: usize,
) -> Result<Vec<Hypothesis>, ModelError> {
    if width == 0 {
        return Err(ModelError::BadConfig("beam width must be at least 1".into()));
    }
    let mut beam: Vec<BeamItem<M::State>> = vec![BeamItem {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
            truncated: false,
            alpha_rows: Vec::new(),
        },
        state: model.start(),
    }];

    for _ in 0..max_length {
        if beam.iter().all(|b| b.hyp.finished) {
            break;
        }
        let mut pool: Vec<BeamItem<M::State>> = Vec::new();
        for item in beam {
            if item.hyp.finished {
                pool.push(item);
                continue;
            }
            let prev = item.hyp.tokens.last().copied().unwrap_or(START);
            let out = model.step(&item.state, prev)?;
            // Rank this hypothesis's candidate continuations; only the
            // top `width` can survive the global cut.
            let mut ranked: Vec<(usize, f64)> = out
                .probs
                .iter()
                .enumerate()
                .map(|(tok, &p)| (tok, p.ln()))
                .collect();
            ranked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            });
            for &(tok, lp) in ranked.iter().take(width) {
                let mut hyp = item.hyp.clone();
                hyp.log_prob += lp;
                if tok == EOS {
                    hyp.finished = true;
                } else {
                    hyp.tokens.push(tok);
                    if let Some(step) = &out.align {
                        hyp.alpha_rows.push(step.refined.clone());
                    }
                }
                pool.push(BeamItem {
                    hyp,
                    state: out.next.clone(),
                });
            }
        }
        sort_items(&mut pool);
        pool.truncate(width);
        beam = pool;
    }

    let mut out: Vec<Hypothesis> = beam
        .into_iter()
        .map(|mut item| {
            if !item.hyp.finished {
                item.hyp.truncated = true;
            }
            item.hyp
        })
        .collect();
    out.sort_by(|a, b| {
        b.log_prob
            .partial_cmp(&a.log_prob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    Ok(out)
}

fn sort_items<S>(items: &mut [BeamItem<S>]) {
    items.sort_by(|a, b| {
        b.hyp
            .log_prob
            .partial_cmp(&a.hyp.log_prob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.hyp.tokens.cmp(&b.hyp.tokens))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::StepOutput;

    /// A fixed-table model: the distribution depends only on the previous
    /// token. Vocabulary: 0..n with the usual reserved indices.
    struct TableModel {
        table: Vec<Vec<f64>>,
    }

    impl SequenceModel for TableModel {
        type State = ();
        fn vocab_len(&self) -> usize {
            self.table[0].len()
        }
        fn start(&self) {}
        fn step(&self, _: &(), prev: usize) -> Result<StepOutput<()>, ModelError> {
            Ok(StepOutput {
                probs: self.table[prev].clone(),
                next: (),
                align: None,
            })
        }
    }

    fn model() -> TableModel {
        // Vocab of 5: pad, start, eos, unk, "x".
        // From start: x with 0.9; from x: eos with 0.8.
        TableModel {
            table: vec![
                vec![0.2, 0.2, 0.2, 0.2, 0.2],
                vec![0.025, 0.025, 0.025, 0.025, 0.9],
                vec![0.2, 0.2, 0.2, 0.2, 0.2],
                vec![0.25, 0.25, 0.25, 0.25, 0.0],
                vec![0.05, 0.05, 0.8, 0.05, 0.05],
            ],
        }
    }

    #[test]
    fn greedy_follows_the_argmax_path() {
        let (hyp, _) = greedy_decode(&model(), 10).unwrap();
        assert_eq!(hyp.tokens, vec![4]);
        assert!(hyp.finished && !hyp.truncated);
        let expected = 0.9f64.ln() + 0.8f64.ln();
        assert!((hyp.log_prob - expected).abs() < 1e-12);
    }

    #[test]
    fn greedy_truncates_at_the_cap() {
        // From start, token 4 loops to eos... instead make a looping table.
        let m = TableModel {
            table: vec![
                vec![0.2, 0.2, 0.2, 0.2, 0.2],
                vec![0.0, 0.0, 0.0, 0.0, 1.0],
                vec![0.2, 0.2, 0.2, 0.2, 0.2],
                vec![0.25, 0.25, 0.25, 0.25, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 1.0],
            ],
        };
        let (hyp, _) = greedy_decode(&m, 3).unwrap();
        assert_eq!(hyp.tokens, vec![4, 4, 4]);
        assert!(hyp.truncated && !hyp.finished);
    }

    #[test]
    fn beam_width_one_equals_greedy() {
        let m = model();
        let (greedy, _) = greedy_decode(&m, 10).unwrap();
        let beam = beam_decode(&m, 1, 10).unwrap();
        assert_eq!(beam.len(), 1);
        assert_eq!(beam[0].tokens, greedy.tokens);
        assert!((beam[0].log_prob - greedy.log_prob).abs() < 1e-12);
    }

    #[test]
    fn beam_finds_the_best_path_greedy_misses() {
        // From start: token 3 is slightly better than 4, but 3 leads to a
        // dead end (low-prob continuations) while 4 finishes strongly.
        let m = TableModel {
            table: vec![
                vec![0.2; 5],
                vec![0.02, 0.02, 0.02, 0.48, 0.46],
                vec![0.2; 5],
                vec![0.3, 0.3, 0.2, 0.1, 0.1],
                vec![0.02, 0.02, 0.9, 0.02, 0.04],
            ],
        };
        let (greedy, _) = greedy_decode(&m, 4).unwrap();
        assert_eq!(greedy.tokens[0], 3);
        let beam = beam_decode(&m, 3, 4).unwrap();
        // Best finished hypothesis starts with 4 and ends immediately:
        // ln(0.46 * 0.9) > any path through 3.
        assert_eq!(beam[0].tokens, vec![4]);
        assert!(beam[0].finished);
        assert!(beam[0].log_prob > greedy.log_prob || !greedy.finished);
    }

    #[test]
    fn beam_orders_by_logprob_then_lexicographic() {
        // Symmetric model: tokens 3 and 4 equally likely, then eos.
        let m = TableModel {
            table: vec![
                vec![0.2; 5],
                vec![0.0, 0.0, 0.0, 0.5, 0.5],
                vec![0.2; 5],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
            ],
        };
        let beam = beam_decode(&m, 2, 5).unwrap();
        assert_eq!(beam.len(), 2);
        assert_eq!(beam[0].tokens, vec![3]);
        assert_eq!(beam[1].tokens, vec![4]);
        assert!((beam[0].log_prob - beam[1].log_prob).abs() < 1e-12);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(beam_decode(&model(), 0, 5).is_err());
    }
}
