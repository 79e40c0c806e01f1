//! Decoding a concrete scenario with one model or an ensemble.

use crate::model::forward::{align_step, decode_step, multi_repr, preselect};
use crate::model::{AlignerMode, Model, ModelError};

use super::decode::{beam_decode, greedy_decode, DecodeConfig, DecodeMode, Hypothesis};
use super::{AlignmentTrace, SequenceModel, StepOutput, TraceStep};

struct Member<'a> {
    model: &'a Model,
    repr: Vec<Vec<f64>>,
    pre: Option<Vec<f64>>,
}

/// A scenario prepared for decoding: per-member record representations and
/// pre-selection probabilities are computed once, then reused every step.
///
/// With several members (an ensemble), each step averages the members'
/// next-token distributions arithmetically; alignment diagnostics are
/// averaged the same way. A single member reduces to the plain model.
pub struct ScenarioDecoder<'a> {
    members: Vec<Member<'a>>,
}

impl<'a> ScenarioDecoder<'a> {
    pub fn new(models: &'a [Model], features: &[Vec<f64>]) -> Result<Self, ModelError> {
        if models.is_empty() {
            return Err(ModelError::BadConfig("no models to decode with".into()));
        }
        let first = &models[0];
        for m in models {
            if m.vocab != first.vocab {
                return Err(ModelError::BadConfig(
                    "ensemble members disagree on the vocabulary".into(),
                ));
            }
        }
        let members = models
            .iter()
            .map(|model| {
                let repr = multi_repr(features, &model.params, &model.config)?;
                let pre = match model.config.aligner {
                    AlignerMode::CoarseToFine => Some(preselect(&repr, &model.params)?),
                    AlignerMode::Basic => None,
                };
                Ok(Member { model, repr, pre })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(ScenarioDecoder { members })
    }

    pub fn vocab(&self) -> &crate::corpus::Vocabulary {
        &self.members[0].model.vocab
    }

    fn record_count(&self) -> usize {
        self.members[0].repr.len()
    }
}

/// Per-member decoder LSTM state.
#[derive(Clone)]
pub struct EnsembleState {
    cells: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> SequenceModel for ScenarioDecoder<'a> {
    type State = EnsembleState;

    fn vocab_len(&self) -> usize {
        self.members[0].model.config.vocab
    }

    fn start(&self) -> EnsembleState {
        EnsembleState {
            cells: self
                .members
                .iter()
                .map(|m| {
                    let h = m.model.config.hidden;
                    (vec![0.0; h], vec![0.0; h])
                })
                .collect(),
        }
    }

    fn step(
        &self,
        state: &EnsembleState,
        prev_token: usize,
    ) -> Result<StepOutput<EnsembleState>, ModelError> {
        let k = self.members.len() as f64;
        let n = self.record_count();
        let v = self.vocab_len();
        let mut probs = vec![0.0; v];
        let mut scores = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut refined = vec![0.0; n];
        let mut context_mean: Option<Vec<f64>> = None;
        let mut next = Vec::with_capacity(self.members.len());
        for (member, (s, c)) in self.members.iter().zip(&state.cells) {
            let align = align_step(
                s,
                &member.repr,
                member.pre.as_deref(),
                &member.model.params,
                &member.model.config,
            )?;
            let out = decode_step(
                prev_token,
                s,
                c,
                &align.context,
                &member.model.params,
                &member.model.config,
            )?;
            for (acc, p) in probs.iter_mut().zip(&out.probs) {
                *acc += p / k;
            }
            for (acc, x) in scores.iter_mut().zip(&align.scores) {
                *acc += x / k;
            }
            for (acc, x) in weights.iter_mut().zip(&align.weights) {
                *acc += x / k;
            }
            for (acc, x) in refined.iter_mut().zip(&align.refined) {
                *acc += x / k;
            }
            // Context widths can differ across members (e.g. mixed
            // encoder settings), so only average them when they agree.
            match &mut context_mean {
                Some(cm) if cm.len() == align.context.len() => {
                    for (acc, x) in cm.iter_mut().zip(&align.context) {
                        *acc += x / k;
                    }
                }
                Some(_) => {}
                None => {
                    context_mean = Some(align.context.iter().map(|x| x / k).collect());
                }
            }
            next.push((out.state, out.cell));
        }
        Ok(StepOutput {
            probs,
            next: EnsembleState { cells: next },
            align: Some(TraceStep {
                scores,
                weights,
                refined,
                context: context_mean.unwrap_or_default(),
            }),
        })
    }

    fn preselect_probs(&self) -> Option<Vec<f64>> {
        let k = self.members.len() as f64;
        let n = self.record_count();
        let mut acc = vec![0.0; n];
        let mut any = false;
        for m in &self.members {
            if let Some(pre) = &m.pre {
                any = true;
                for (a, p) in acc.iter_mut().zip(pre) {
                    *a += p / k;
                }
            }
        }
        any.then_some(acc)
    }
}

/// Decodes a scenario restricted to a subset of its records: the model
/// sees only the chosen records, so the description is conditioned on that
/// selection. Returns the best hypothesis, its trace, and the attended
/// record indices mapped back to the original numbering.
pub fn conditional_decode(
    models: &[Model],
    features: &[Vec<f64>],
    subset: &[usize],
    config: &DecodeConfig,
) -> Result<(Hypothesis, AlignmentTrace, Vec<usize>), ModelError> {
    if subset.is_empty() {
        return Err(ModelError::BadConfig(
            "conditional decoding needs a non-empty record subset".into(),
        ));
    }
    let mut picked: Vec<usize> = subset.to_vec();
    picked.sort_unstable();
    picked.dedup();
    let mut sub_features = Vec::with_capacity(picked.len());
    for &i in &picked {
        let f = features.get(i).ok_or(ModelError::BadConfig(format!(
            "record index {i} is out of range for a scenario with {} records",
            features.len()
        )))?;
        sub_features.push(f.clone());
    }
    let decoder = ScenarioDecoder::new(models, &sub_features)?;
    let (hyp, trace) = match config.mode {
        DecodeMode::Greedy => greedy_decode(&decoder, config.max_length)?,
        DecodeMode::Beam { width } => {
            let all = beam_decode(&decoder, width, config.max_length)?;
            let best = all.into_iter().next().ok_or(ModelError::BadConfig(
                "beam search returned no hypotheses".into(),
            ))?;
            (best, AlignmentTrace::default())
        }
        DecodeMode::Knn { .. } => {
            return Err(ModelError::BadConfig(
                "conditional decoding supports greedy and beam modes only".into(),
            ))
        }
    };
    let selected: Vec<usize> = super::selected_records(&hyp.alpha_rows)
        .into_iter()
        .map(|local| picked[local])
        .collect();
    Ok((hyp, trace, selected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::model::ModelConfig;

    fn vocab(n: usize) -> Vocabulary {
        let mut words: Vec<String> = ["<pad>", "<s>", "</s>", "<unk>"]
            .map(String::from)
            .to_vec();
        for i in 0..n.saturating_sub(4) {
            words.push(format!("w{i}"));
        }
        Vocabulary::from_words(words)
    }

    fn model(seed: u64) -> Model {
        let config = ModelConfig {
            hidden: 4,
            embed: 3,
            feat: 5,
            vocab: 9,
            gamma: 1.5,
            aligner: AlignerMode::CoarseToFine,
            use_encoder: true,
        };
        Model::init(config, vocab(9), seed).unwrap()
    }

    fn feats(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| (0..5).map(|k| ((j * 5 + k) as f64 * 0.83).sin()).collect())
            .collect()
    }

    #[test]
    fn identical_members_average_to_the_single_model() {
        let m = model(3);
        let duo = vec![m.clone(), m.clone()];
        let single = vec![m];
        let f = feats(4);
        let d1 = ScenarioDecoder::new(&single, &f).unwrap();
        let d2 = ScenarioDecoder::new(&duo, &f).unwrap();
        let o1 = d1.step(&d1.start(), 1).unwrap();
        let o2 = d2.step(&d2.start(), 1).unwrap();
        for (a, b) in o1.probs.iter().zip(&o2.probs) {
            assert!((a - b).abs() < 1e-12);
        }
        let s1: f64 = o1.probs.iter().sum();
        let s2: f64 = o2.probs.iter().sum();
        assert!((s1 - 1.0).abs() < 1e-12 && (s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_ensemble_probs_still_sum_to_one() {
        let models = vec![model(3), model(4), model(5)];
        let f = feats(4);
        let d = ScenarioDecoder::new(&models, &f).unwrap();
        let out = d.step(&d.start(), 1).unwrap();
        let s: f64 = out.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let align = out.align.unwrap();
        let sr: f64 = align.refined.iter().sum();
        assert!((sr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_on_full_set_matches_unconditioned() {
        let models = vec![model(7)];
        let f = feats(5);
        let cfg = DecodeConfig {
            mode: DecodeMode::Greedy,
            max_length: 12,
        };
        let d = ScenarioDecoder::new(&models, &f).unwrap();
        let (plain, _) = greedy_decode(&d, 12).unwrap();
        let (cond, _, _) = conditional_decode(&models, &f, &[0, 1, 2, 3, 4], &cfg).unwrap();
        assert_eq!(plain.tokens, cond.tokens);
    }

    #[test]
    fn conditional_selection_maps_back_to_original_indices() {
        let models = vec![model(7)];
        let f = feats(5);
        let cfg = DecodeConfig {
            mode: DecodeMode::Greedy,
            max_length: 12,
        };
        let (_, _, selected) = conditional_decode(&models, &f, &[4, 2], &cfg).unwrap();
        assert!(selected.iter().all(|&i| i == 2 || i == 4));
    }

    #[test]
    fn conditional_rejects_bad_subsets() {
        let models = vec![model(7)];
        let f = feats(3);
        let cfg = DecodeConfig {
            mode: DecodeMode::Greedy,
            max_length: 5,
        };
        assert!(conditional_decode(&models, &f, &[], &cfg).is_err());
        assert!(conditional_decode(&models, &f, &[9], &cfg).is_err());
    }

    #[test]
    fn retracing_greedy_tokens_reproduces_the_greedy_trace() {
        let models = vec![model(11)];
        let f = feats(4);
        let d = ScenarioDecoder::new(&models, &f).unwrap();
        let (hyp, trace) = greedy_decode(&d, 10).unwrap();
        let retraced = crate::inference::trace_for_tokens(&d, &hyp.tokens).unwrap();
        assert_eq!(retraced, trace);
        assert_eq!(retraced.steps.len(), hyp.tokens.len());
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let a = model(3);
        let mut b = model(4);
        b.vocab = vocab(9);
        // Same words -> fine; different words -> error.
        let mut words = b.vocab.words().to_vec();
        words[4] = "different".into();
        b.vocab = Vocabulary::from_words(words);
        let f = feats(3);
        assert!(ScenarioDecoder::new(&[a, b], &f).is_err());
    }
}
