//! Corpus-level BLEU, in two flavours.
//!
//! * [`sbleu`] — standard BLEU-4: clipped n-gram precision, geometric mean,
//!   brevity penalty, no smoothing.
//! * [`cbleu`] — customized BLEU for data-to-text: integer tokens within a
//!   slack of a reference integer also count as matches, so a forecast
//!   saying `58` against a reference saying `60` is not punished as a
//!   total miss.
//!
//! Orders longer than every candidate (zero n-gram total) are excluded
//! from the geometric mean rather than zeroing the score, so short
//! sentences are scored over the orders they actually have.

use std::collections::HashMap;

use serde::Serialize;

use super::EvalError;

/// Corpus BLEU with per-order precisions and the brevity penalty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    /// 0–100.
    pub score: f64,
    /// Precision per n-gram order (0 where the order had no n-grams).
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

/// Standard BLEU-4 with one reference per candidate.
pub fn sbleu(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<BleuReport, EvalError> {
    let wrapped: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![r.clone()]).collect();
    corpus_bleu(candidates, &wrapped, 0)
}

/// Standard BLEU-4 with several references per candidate.
pub fn sbleu_multi(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<BleuReport, EvalError> {
    corpus_bleu(candidates, references, 0)
}

/// Customized BLEU: single reference per candidate; integer tokens within
/// `slack` of a reference integer count as matching. With `slack = 0` this
/// is exactly [`sbleu`].
pub fn cbleu(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    slack: i64,
) -> Result<BleuReport, EvalError> {
    if slack < 0 {
        return Err(EvalError::BadSlack(slack));
    }
    let wrapped: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![r.clone()]).collect();
    corpus_bleu(candidates, &wrapped, slack)
}

fn corpus_bleu(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    slack: i64,
) -> Result<BleuReport, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            cands: candidates.len(),
            refs: references.len(),
        });
    }
    for (i, refs) in references.iter().enumerate() {
        if refs.is_empty() {
            return Err(EvalError::NoReferences { index: i });
        }
    }

    let mut matched = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), refs);
        for n in 1..=4 {
            let total = cand.len().saturating_sub(n - 1);
            totals[n - 1] += total;
            if total == 0 {
                continue;
            }
            matched[n - 1] += if slack > 0 {
                // The slack predicate is defined against a single
                // reference; cbleu guarantees exactly one.
                matches_with_slack(cand, &refs[0], n, slack)
            } else {
                clipped_matches(cand, refs, n)
            };
        }
    }

    let mut precisions = [0.0f64; 4];
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    let mut zero_defined_order = false;
    for n in 0..4 {
        if totals[n] == 0 {
            continue;
        }
        precisions[n] = matched[n] as f64 / totals[n] as f64;
        orders += 1;
        if matched[n] == 0 {
            zero_defined_order = true;
        } else {
            log_sum += precisions[n].ln();
        }
    }

    let brevity_penalty = if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    let score = if cand_len == 0 || orders == 0 || zero_defined_order {
        0.0
    } else {
        100.0 * brevity_penalty * (log_sum / orders as f64).exp()
    };
    Ok(BleuReport {
        score,
        precisions,
        brevity_penalty,
        candidate_len: cand_len,
        reference_len: ref_len,
    })
}

/// Reference length closest to the candidate length (ties -> shorter).
fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    let mut best = refs[0].len();
    for r in refs.iter().skip(1) {
        let d_new = r.len().abs_diff(cand_len);
        let d_old = best.abs_diff(cand_len);
        if d_new < d_old || (d_new == d_old && r.len() < best) {
            best = r.len();
        }
    }
    best
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n)
}

/// Standard clipped n-gram matching: each candidate n-gram type counts up
/// to the maximum number of times it appears in any single reference.
fn clipped_matches(cand: &[String], refs: &[Vec<String>], n: usize) -> usize {
    let mut cand_counts: HashMap<&[String], usize> = HashMap::new();
    for g in ngrams(cand, n) {
        *cand_counts.entry(g).or_insert(0) += 1;
    }
    let mut total = 0;
    for (g, c) in cand_counts {
        let clip = refs
            .iter()
            .map(|r| ngrams(r, n).filter(|rg| *rg == g).count())
            .max()
            .unwrap_or(0);
        total += c.min(clip);
    }
    total
}

/// Slack-aware matching against a single reference, in two passes.
///
/// Exact matches are claimed first (reproducing the clipped count), then
/// each still-unmatched candidate n-gram, scanned left to right, consumes
/// the first remaining reference n-gram it matches under the slack
/// predicate. Claiming exact matches first guarantees the result is never
/// below the exact clipped count, so widening the slack can only help.
fn matches_with_slack(cand: &[String], reference: &[String], n: usize, slack: i64) -> usize {
    let cand_grams: Vec<&[String]> = ngrams(cand, n).collect();
    let mut ref_free: Vec<(&[String], bool)> = ngrams(reference, n).map(|g| (g, true)).collect();
    let mut cand_open = vec![true; cand_grams.len()];
    let mut matched = 0;

    for (ci, g) in cand_grams.iter().enumerate() {
        if let Some(slot) = ref_free.iter_mut().find(|(rg, free)| *free && rg == g) {
            slot.1 = false;
            cand_open[ci] = false;
            matched += 1;
        }
    }
    for (ci, g) in cand_grams.iter().enumerate() {
        if !cand_open[ci] {
            continue;
        }
        if let Some(slot) = ref_free
            .iter_mut()
            .find(|(rg, free)| *free && fuzzy_eq(g, rg, slack))
        {
            slot.1 = false;
            matched += 1;
        }
    }
    matched
}

/// Tokens match when equal, or when both parse as integers no more than
/// `slack` apart.
fn fuzzy_eq(a: &[String], b: &[String], slack: i64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x == y
                || match (x.parse::<i64>(), y.parse::<i64>()) {
                    (Ok(xi), Ok(yi)) => (xi - yi).abs() <= slack,
                    _ => false,
                }
        })
}
