//! Nearest-neighbour reranking of beam candidates.
//!
//! Over-selection shows up as beam hypotheses that mention too many
//! records. Reranking scores each surviving hypothesis against the
//! descriptions of the `k` training scenarios whose record signatures are
//! most similar to the input's, and keeps the hypothesis with the highest
//! token-overlap score; the training neighbours act as a length and
//! content prior.

use crate::corpus::{FeatureSpec, Scenario, Vocabulary};
use crate::evaluation::sbleu_multi;
use crate::model::ModelError;

use super::Hypothesis;

/// Training-corpus index for neighbour lookup: one mean-feature signature
/// and the reference description per scenario.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    signatures: Vec<Vec<f64>>,
    texts: Vec<Vec<String>>,
}

impl NeighborIndex {
    pub fn build(corpus: &[Scenario], spec: &FeatureSpec) -> Result<Self, crate::corpus::CorpusError> {
        let mut signatures = Vec::with_capacity(corpus.len());
        let mut texts = Vec::with_capacity(corpus.len());
        for s in corpus {
            signatures.push(spec.mean_feature(s)?);
            texts.push(s.text.clone());
        }
        Ok(NeighborIndex { signatures, texts })
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Indices of the `k` nearest entries by cosine similarity, ties
    /// resolved toward lower training indices.
    pub fn nearest(&self, signature: &[f64], k: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f64)> = self
            .signatures
            .iter()
            .map(|s| cosine(signature, s))
            .enumerate()
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.into_iter().take(k).map(|(i, _)| i).collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Result of reranking.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    /// Index into the candidate list of the chosen hypothesis.
    pub chosen: usize,
    /// Training indices of the neighbours used for scoring (empty on
    /// fallback).
    pub neighbors: Vec<usize>,
    /// True when the input signature had zero norm and the highest
    /// log-probability candidate was returned unscored.
    pub fallback: bool,
}

/// Picks the beam candidate whose tokens best match the descriptions of
/// the input's `k` nearest training scenarios.
///
/// Ties on the overlap score resolve toward the higher log-probability
/// candidate (then the earlier candidate). A zero-norm input signature
/// cannot be compared, so the highest log-probability candidate is
/// returned with `fallback` set.
pub fn knn_beam_filter(
    signature: &[f64],
    candidates: &[Hypothesis],
    index: &NeighborIndex,
    k: usize,
    vocab: &Vocabulary,
) -> Result<FilterOutcome, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::BadConfig(
            "nearest-neighbour reranking needs at least one candidate".into(),
        ));
    }
    if k == 0 {
        return Err(ModelError::BadConfig(
            "nearest-neighbour reranking needs k >= 1".into(),
        ));
    }
    if index.is_empty() {
        return Err(ModelError::BadConfig(
            "nearest-neighbour reranking needs a non-empty training index".into(),
        ));
    }
    if signature.iter().all(|&x| x == 0.0) {
        let chosen = best_by_logprob(candidates);
        return Ok(FilterOutcome {
            chosen,
            neighbors: Vec::new(),
            fallback: true,
        });
    }
    let neighbors = index.nearest(signature, k);
    let refs: Vec<Vec<String>> = neighbors.iter().map(|&i| index.texts[i].clone()).collect();

    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        let tokens = vocab.decode(&cand.tokens);
        let report = sbleu_multi(&[tokens], std::slice::from_ref(&refs))
            .map_err(|e| ModelError::BadConfig(format!("scoring failed: {e}")))?;
        let score = report.score;
        let better = score > best_score
            || (score == best_score && cand.log_prob > candidates[best].log_prob);
        if better {
            best = i;
            best_score = score;
        }
    }
    Ok(FilterOutcome {
        chosen: best,
        neighbors,
        fallback: false,
    })
}

fn best_by_logprob(candidates: &[Hypothesis]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.log_prob > candidates[best].log_prob {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_generate, SynthConfig};

    fn hyp(tokens: Vec<usize>, log_prob: f64) -> Hypothesis {
        Hypothesis {
            tokens,
            log_prob,
            finished: true,
            truncated: false,
            alpha_rows: vec![],
        }
    }

    fn index() -> (NeighborIndex, crate::corpus::FeatureSpec, Vec<Scenario>) {
        let (scenarios, spec) = synth_generate(&SynthConfig {
            scenarios: 10,
            records_per_scenario: 6,
            salient_count: 2,
            noise: 0.0,
            seed: 42,
        })
        .unwrap();
        let idx = NeighborIndex::build(&scenarios, &spec).unwrap();
        (idx, spec, scenarios)
    }

    #[test]
    fn single_candidate_is_always_chosen() {
        let (idx, spec, scenarios) = index();
        let vocab = Vocabulary::build(&scenarios, 1);
        let sig = spec.mean_feature(&scenarios[0]).unwrap();
        let cand = hyp(vocab.encode(&scenarios[0].text), -1.0);
        let out = knn_beam_filter(&sig, &[cand], &idx, 1, &vocab).unwrap();
        assert_eq!(out.chosen, 0);
        assert!(!out.fallback);
        assert_eq!(out.neighbors.len(), 1);
    }

    #[test]
    fn candidate_matching_the_neighbour_text_wins() {
        let (idx, spec, scenarios) = index();
        let vocab = Vocabulary::build(&scenarios, 1);
        let sig = spec.mean_feature(&scenarios[3]).unwrap();
        // Nearest neighbour of scenario 3's own signature is scenario 3.
        let good = hyp(vocab.encode(&scenarios[3].text), -50.0);
        let bad = hyp(vocab.encode(&scenarios[7].text), -1.0);
        let out = knn_beam_filter(&sig, &[bad, good], &idx, 1, &vocab).unwrap();
        assert_eq!(out.neighbors[0], 3);
        assert_eq!(out.chosen, 1, "text overlap must beat log-probability");
    }

    #[test]
    fn score_ties_fall_back_to_logprob() {
        let (idx, spec, scenarios) = index();
        let vocab = Vocabulary::build(&scenarios, 1);
        let sig = vec![1.0; spec.width()]; // nonzero, arbitrary
        // Two identical candidates: identical scores; higher log-prob wins.
        let a = hyp(vocab.encode(&scenarios[0].text), -5.0);
        let b = hyp(vocab.encode(&scenarios[0].text), -2.0);
        let out = knn_beam_filter(&sig[..], &[a, b], &idx, 2, &vocab).unwrap();
        assert_eq!(out.chosen, 1);
    }

    #[test]
    fn zero_signature_falls_back_to_best_logprob() {
        let (idx, spec, scenarios) = index();
        let vocab = Vocabulary::build(&scenarios, 1);
        let sig = vec![0.0; spec.width()];
        let a = hyp(vocab.encode(&scenarios[0].text), -5.0);
        let b = hyp(vocab.encode(&scenarios[1].text), -2.0);
        let out = knn_beam_filter(&sig, &[a, b], &idx, 1, &vocab).unwrap();
        assert!(out.fallback);
        assert_eq!(out.chosen, 1);
        assert!(out.neighbors.is_empty());
    }

    #[test]
    fn cosine_ties_choose_the_lower_training_index() {
        let idx = NeighborIndex {
            signatures: vec![vec![2.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            texts: vec![vec![], vec![], vec![]],
        };
        // Entries 0 and 1 have identical cosine to the query.
        let near = idx.nearest(&[1.0, 0.0], 2);
        assert_eq!(near, vec![0, 1]);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let (idx, spec, scenarios) = index();
        let vocab = Vocabulary::build(&scenarios, 1);
        let sig = vec![1.0; spec.width()];
        assert!(knn_beam_filter(&sig, &[], &idx, 1, &vocab).is_err());
        let cand = hyp(vec![4], -1.0);
        assert!(knn_beam_filter(&sig, &[cand.clone()], &idx, 0, &vocab).is_err());
        let empty = NeighborIndex {
            signatures: vec![],
            texts: vec![],
        };
        assert!(knn_beam_filter(&sig, &[cand], &empty, 1, &vocab).is_err());
    }
}
