//! Record-selection precision/recall/F1.

use std::collections::BTreeSet;

use serde::Serialize;

use super::EvalError;

/// Micro-averaged selection quality over a corpus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Scenarios that contributed (had gold selections).
    pub scored: usize,
    /// Scenarios skipped for missing gold selections.
    pub missing_gold: usize,
}

/// Compares predicted record selections against gold selections,
/// micro-averaged: true/false positives and false negatives are summed
/// over scenarios before computing the ratios. Scenarios without gold
/// selections are skipped and counted; if none have gold, that is an
/// error.
pub fn selection_f1(
    predicted: &[BTreeSet<usize>],
    gold: &[Option<BTreeSet<usize>>],
) -> Result<SelectionReport, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            cands: predicted.len(),
            refs: gold.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut scored = 0usize;
    let mut missing = 0usize;
    for (pred, gold) in predicted.iter().zip(gold) {
        match gold {
            None => missing += 1,
            Some(g) => {
                scored += 1;
                tp += pred.intersection(g).count();
                fp += pred.difference(g).count();
                fn_ += g.difference(pred).count();
            }
        }
    }
    if scored == 0 {
        return Err(EvalError::NoGold);
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SelectionReport {
        precision,
        recall,
        f1,
        scored,
        missing_gold: missing,
    })
}
