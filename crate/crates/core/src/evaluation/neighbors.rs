//! Nearest neighbours in the learned word-embedding space.

use crate::model::{names, Model};

use super::EvalError;

/// The `k` corpus words closest to `word` by cosine similarity between
/// embedding rows. Reserved tokens are excluded both as queries and as
/// neighbours; ties order alphabetically. Asking for more neighbours than
/// exist returns what there is.
pub fn embedding_neighbors(
    model: &Model,
    word: &str,
    k: usize,
) -> Result<Vec<(String, f64)>, EvalError> {
    let vocab = &model.vocab;
    let id = match vocab.words().iter().position(|w| w == word) {
        Some(i) => i,
        None => return Err(EvalError::OutOfVocabulary(word.to_string())),
    };
    if vocab.is_reserved(id) {
        return Err(EvalError::ReservedWord(word.to_string()));
    }
    let emb = model
        .params
        .get(names::DEC_E)
        .expect("validated models always carry an embedding matrix");
    let d = emb.cols();
    let row = |i: usize| &emb.data()[i * d..(i + 1) * d];
    let query = row(id);
    let mut scored: Vec<(String, f64)> = (0..vocab.len())
        .filter(|&i| i != id && !vocab.is_reserved(i))
        .map(|i| (vocab.word(i).to_string(), cosine(query, row(i))))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(scored)
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::model::{AlignerMode, ModelConfig};

    /// A model whose embedding rows are planted so the neighbour order is
    /// known in advance.
    fn planted_model() -> Model {
        let config = ModelConfig {
            hidden: 2,
            embed: 2,
            feat: 3,
            vocab: 8,
            gamma: 1.0,
            aligner: AlignerMode::CoarseToFine,
            use_encoder: false,
        };
        let vocab = Vocabulary::from_words(
            ["<pad>", "<s>", "</s>", "<unk>", "gust", "gusts", "rain", "sun"]
                .map(String::from)
                .to_vec(),
        );
        let mut model = Model::init(config, vocab, 1).unwrap();
        // Rows: gust=(1,0); gusts=(0.9,0.1); rain=(0,1); sun=(-1,0).
        let rows = [
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [0.9, 0.1],
            [0.0, 1.0],
            [-1.0, 0.0],
        ];
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let at = model
            .params
            .names()
            .position(|n| n == names::DEC_E)
            .unwrap();
        let e = model.params.value_at_mut(at);
        e.data_mut().copy_from_slice(&flat);
        model
    }

    #[test]
    fn neighbours_come_back_in_similarity_order() {
        let m = planted_model();
        let out = embedding_neighbors(&m, "gusts", 3).unwrap();
        let names: Vec<&str> = out.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(names, ["gust", "rain", "sun"]);
        assert!(out[0].1 > out[1].1 && out[1].1 > out[2].1);
    }

    #[test]
    fn reserved_tokens_are_excluded_from_results() {
        let m = planted_model();
        let out = embedding_neighbors(&m, "gust", 10).unwrap();
        assert_eq!(out.len(), 3, "only the 3 other corpus words qualify");
        assert!(out.iter().all(|(w, _)| !w.starts_with('<')));
    }

    #[test]
    fn k_zero_is_empty_and_oversized_k_is_clamped() {
        let m = planted_model();
        assert!(embedding_neighbors(&m, "gust", 0).unwrap().is_empty());
        assert_eq!(embedding_neighbors(&m, "gust", 99).unwrap().len(), 3);
    }

    #[test]
    fn unknown_and_reserved_queries_are_errors() {
        let m = planted_model();
        assert!(matches!(
            embedding_neighbors(&m, "tornado", 2),
            Err(EvalError::OutOfVocabulary(_))
        ));
        assert!(matches!(
            embedding_neighbors(&m, "<s>", 2),
            Err(EvalError::ReservedWord(_))
        ));
    }
}
