//! Selective generation from structured records.
//!
//! This crate implements a complete neural data-to-text pipeline: records
//! are encoded with a bidirectional LSTM, a coarse-to-fine aligner selects
//! which records to talk about at each step, and an LSTM decoder emits the
//! description one token at a time. Around the model sit a reverse-mode
//! autodiff core ([`diff`]), a corpus data model with a synthetic-weather
//! generator ([`corpus`]), Adam training with early stopping and ensembles
//! ([`training`]), greedy/beam/nearest-neighbour decoding ([`inference`]),
//! and evaluation metrics ([`evaluation`]).

pub mod corpus;
pub mod diff;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod training;
