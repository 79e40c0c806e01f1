//! Token vocabulary with reserved indices.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::Scenario;

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Bidirectional token/index mapping. Indices 0..=3 are reserved for
/// padding, sequence start, sequence end, and unknown tokens; data tokens
/// follow, ordered by descending corpus frequency with lexicographic
/// tie-breaking, so vocabulary construction is deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "VocabRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Serialized form: just the word list; the reverse index is rebuilt on
/// load.
#[derive(Deserialize)]
struct VocabRepr {
    words: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(repr: VocabRepr) -> Self {
        Vocabulary::from_words(repr.words)
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
    }
}

impl Vocabulary {
    /// Builds a vocabulary from training text. Tokens appearing fewer than
    /// `min_count` times map to `<unk>`.
    pub fn build(scenarios: &[Scenario], min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in scenarios {
            for tok in &s.text {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        words.extend(entries.into_iter().map(|(w, _)| w.to_string()));
        Vocabulary::from_words(words)
    }

    /// Rebuilds a vocabulary from its word list (for checkpoint loading).
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index for a token; unseen tokens map to `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token for an index (panics on out-of-range; indices come from the
    /// model whose vocabulary size matches by construction).
    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < RESERVED.len()
    }

    /// Encodes a token sequence (no implicit start/end markers).
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Decodes indices back to tokens.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.word(i).to_string()).collect()
    }

    /// SHA-256 of the word list, newline-joined; identifies the vocabulary
    /// in checkpoints.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let joined = self.words.join("\n");
        hex::encode(Sha256::digest(joined.as_bytes()))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(tokens: &[&str]) -> Scenario {
        Scenario {
            records: vec![],
            text: tokens.iter().map(|s| s.to_string()).collect(),
            gold_selection: None,
        }
    }

    #[test]
    fn reserved_indices_are_fixed() {
        let v = Vocabulary::build(&[scenario(&["x"])], 1);
        assert_eq!(v.word(PAD), "<pad>");
        assert_eq!(v.word(START), "<s>");
        assert_eq!(v.word(EOS), "</s>");
        assert_eq!(v.word(UNK), "<unk>");
        assert_eq!(v.id("x"), 4);
    }

    #[test]
    fn ordering_is_frequency_then_lexicographic() {
        let v = Vocabulary::build(
            &[scenario(&["b", "b", "c", "a", "a", "z"])],
            1,
        );
        // a and b both occur twice -> lexicographic; then c and z once each.
        assert_eq!(v.words()[4..], ["a", "b", "c", "z"].map(String::from));
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let v = Vocabulary::build(&[scenario(&["hi", "hi", "rare"])], 2);
        assert_eq!(v.id("hi"), 4);
        assert_eq!(v.id("rare"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn serde_round_trip_rebuilds_lookup() {
        let v = Vocabulary::build(&[scenario(&["low", "around"])], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("low"), v.id("low"));
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        let a = Vocabulary::from_words(vec!["<pad>".into(), "x".into()]);
        let b = Vocabulary::from_words(vec!["<pad>".into(), "x".into()]);
        let c = Vocabulary::from_words(vec!["<pad>".into(), "y".into()]);
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }
}
