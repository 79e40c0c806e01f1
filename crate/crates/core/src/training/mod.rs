//! Mini-batch training with Adam, periodic dev evaluation, early stopping,
//! and ensembles.

mod adam;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, FeatureSpec, Scenario, EOS};
use crate::diff::{ParamStore, Tape};
use crate::evaluation::{cbleu, sbleu, selection_f1, EvalError};
use crate::inference::{greedy_decode, selected_records, ScenarioDecoder};
use crate::model::{build_loss, Model, ModelError, SavedModel};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("gradient store does not match the parameter layout")]
    GradientLayout,
    #[error("training diverged (non-finite loss) at iteration {iteration}; the last good model is attached")]
    Diverged {
        iteration: usize,
        last_good: Box<SavedModel>,
    },
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Iterations between dev evaluations (an evaluation always runs on
    /// the final iteration too).
    pub eval_every: usize,
    /// Stop after this many consecutive evaluations without a strict
    /// improvement in dev sBLEU.
    pub patience: usize,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    /// Seeds mini-batch sampling (and, by convention, parameter init).
    pub seed: u64,
    pub adam: AdamConfig,
    /// Worker threads for per-example gradients and dev decoding; results
    /// are reduced in deterministic order regardless of the count.
    pub workers: usize,
    /// Slack for the dev cbleu diagnostic.
    pub cbleu_slack: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            max_epochs: 30,
            eval_every: 100,
            patience: 5,
            clip_norm: 5.0,
            seed: 1,
            adam: AdamConfig::default(),
            workers: 1,
            cbleu_slack: 5,
        }
    }
}

/// One dev evaluation during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub epoch: usize,
    /// Mean per-example token nll over the batches since the previous
    /// evaluation.
    pub train_nll: f64,
    /// Mean regularizer over the same window (0 for the basic aligner).
    pub train_reg: f64,
    pub dev_sbleu: f64,
    pub dev_cbleu: f64,
    /// Selection F1 against dev gold selections, when any exist.
    pub dev_f1: Option<f64>,
    /// Seconds since training started. Excluded from serialization so
    /// identical runs produce identical logs.
    #[serde(skip)]
    pub wall_secs: f64,
}

/// The full evaluation history of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub evals: Vec<EvalRecord>,
    pub stopped_early: bool,
    /// Iteration whose evaluation produced the selected model.
    pub best_iteration: usize,
}

/// A finished run: the dev-best model and its history.
pub struct TrainOutcome {
    pub saved: SavedModel,
    pub log: TrainLog,
    pub best_dev_sbleu: f64,
}

struct Prepared {
    features: Vec<Vec<f64>>,
    targets: Vec<usize>,
}

/// Featurizes a scenario and builds its forced decoding targets (token
/// indices with the end-of-sequence marker appended).
fn prepare(
    scenario: &Scenario,
    spec: &FeatureSpec,
    model: &Model,
) -> Result<Prepared, TrainError> {
    let features = spec.featurize_scenario(scenario)?;
    let mut targets = model.vocab.encode(&scenario.text);
    targets.push(EOS);
    Ok(Prepared { features, targets })
}

fn mean_grads(
    model: &Model,
    batch: &[&Prepared],
    pool: &rayon::ThreadPool,
) -> Result<(ParamStore, f64, f64), TrainError> {
    let per_example: Vec<(ParamStore, f64, f64)> = pool.install(|| {
        batch
            .par_iter()
            .map(|ex| {
                let mut tape = Tape::new();
                let bound = tape.bind_params(&model.params);
                let graph = build_loss(&mut tape, &bound, &ex.features, &ex.targets, &model.config)?;
                tape.backward(graph.total).map_err(ModelError::from)?;
                let grads = tape.param_gradients(&bound);
                let nll = tape.value(graph.nll).item();
                let reg = graph.reg.map(|r| tape.value(r).item()).unwrap_or(0.0);
                Ok((grads, nll, reg))
            })
            .collect::<Result<Vec<_>, TrainError>>()
    })?;

    let scale = 1.0 / batch.len() as f64;
    let mut iter = per_example.into_iter();
    let (mut acc, mut nll, mut reg) = iter.next().expect("batch is non-empty");
    for (g, n, r) in iter {
        for (a, b) in acc.values_mut().zip(g.values()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        nll += n;
        reg += r;
    }
    for t in acc.values_mut() {
        for x in t.data_mut() {
            *x *= scale;
        }
    }
    Ok((acc, nll * scale, reg * scale))
}

struct DevSet {
    features: Vec<Vec<Vec<f64>>>,
    texts: Vec<Vec<String>>,
    gold: Vec<Option<BTreeSet<usize>>>,
}

/// Decodes the dev set greedily and scores it.
fn evaluate_dev(
    model: &Model,
    dev: &DevSet,
    max_length: usize,
    slack: i64,
    pool: &rayon::ThreadPool,
) -> Result<(f64, f64, Option<f64>), TrainError> {
    let decoded: Vec<(Vec<String>, BTreeSet<usize>)> = pool.install(|| {
        dev.features
            .par_iter()
            .map(|features| {
                let decoder = ScenarioDecoder::new(std::slice::from_ref(model), features)?;
                let (hyp, _) = greedy_decode(&decoder, max_length)?;
                let words = model.vocab.decode(&hyp.tokens);
                let selected = selected_records(&hyp.alpha_rows);
                Ok((words, selected))
            })
            .collect::<Result<Vec<_>, TrainError>>()
    })?;
    let cands: Vec<Vec<String>> = decoded.iter().map(|(w, _)| w.clone()).collect();
    let preds: Vec<BTreeSet<usize>> = decoded.into_iter().map(|(_, s)| s).collect();
    let s = sbleu(&cands, &dev.texts)?.score;
    let c = cbleu(&cands, &dev.texts, slack)?.score;
    let f1 = match selection_f1(&preds, &dev.gold) {
        Ok(report) => Some(report.f1),
        Err(EvalError::NoGold) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((s, c, f1))
}

/// Trains one model.
///
/// Mini-batches are sampled with replacement from a seeded generator, so a
/// given `(corpus, config, seed)` triple always produces the same
/// checkpoints and the same [`TrainLog`]. The returned model is the one
/// with the best dev sBLEU, not the last one.
pub fn train(
    train_set: &[Scenario],
    dev_set: &[Scenario],
    spec: &FeatureSpec,
    mut model: Model,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyCorpus("training"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptyCorpus("dev"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.eval_every == 0 {
        return Err(TrainError::BadConfig(
            "batch_size, max_epochs, and eval_every must be positive".into(),
        ));
    }
    if spec.width() != model.config.feat {
        return Err(TrainError::BadConfig(format!(
            "feature spec width {} does not match model feat {}",
            spec.width(),
            model.config.feat
        )));
    }
    model.validate()?;

    let prepared: Vec<Prepared> = train_set
        .iter()
        .map(|s| prepare(s, spec, &model))
        .collect::<Result<_, _>>()?;
    let max_train_len = train_set.iter().map(|s| s.text.len()).max().unwrap_or(0);
    let decode_cap = (2 * max_train_len).max(4);

    let dev = DevSet {
        features: dev_set
            .iter()
            .map(|s| spec.featurize_scenario(s).map_err(TrainError::from))
            .collect::<Result<_, _>>()?,
        texts: dev_set.iter().map(|s| s.text.clone()).collect(),
        gold: dev_set.iter().map(|s| s.gold_set()).collect(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| TrainError::BadConfig(format!("worker pool: {e}")))?;

    let n = prepared.len();
    let iters_per_epoch = n.div_ceil(cfg.batch_size);
    let total_iters = cfg.max_epochs * iters_per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params, cfg.adam);

    let mut log = TrainLog::default();
    let mut best_params = model.params.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let mut window_nll = 0.0;
    let mut window_reg = 0.0;
    let mut window_batches = 0usize;
    let started = Instant::now();

    for iteration in 1..=total_iters {
        let batch: Vec<&Prepared> = (0..cfg.batch_size)
            .map(|_| &prepared[rng.random_range(0..n)])
            .collect();
        let (mut grads, nll, reg) = mean_grads(&model, &batch, &pool)?;
        if !(nll + reg).is_finite() {
            return Err(TrainError::Diverged {
                iteration,
                last_good: Box::new(SavedModel {
                    model: Model {
                        config: model.config.clone(),
                        params: best_params,
                        vocab: model.vocab.clone(),
                    },
                    max_train_len,
                }),
            });
        }
        window_nll += nll;
        window_reg += reg;
        window_batches += 1;
        clip_global_norm(&mut grads, cfg.clip_norm);
        adam_step(&mut model.params, &grads, &mut adam)?;

        if iteration % cfg.eval_every == 0 || iteration == total_iters {
            let (dev_sbleu, dev_cbleu, dev_f1) =
                evaluate_dev(&model, &dev, decode_cap, cfg.cbleu_slack, &pool)?;
            log.evals.push(EvalRecord {
                iteration,
                epoch: iteration.div_ceil(iters_per_epoch),
                train_nll: window_nll / window_batches as f64,
                train_reg: window_reg / window_batches as f64,
                dev_sbleu,
                dev_cbleu,
                dev_f1,
                wall_secs: started.elapsed().as_secs_f64(),
            });
            window_nll = 0.0;
            window_reg = 0.0;
            window_batches = 0;
            if dev_sbleu > best_score {
                best_score = dev_sbleu;
                best_params = model.params.clone();
                log.best_iteration = iteration;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        saved: SavedModel {
            model: Model {
                config: model.config.clone(),
                params: best_params,
                vocab: model.vocab,
            },
            max_train_len,
        },
        log,
        best_dev_sbleu: best_score,
    })
}

/// Trains `count` models differing only in their seed (`seed + 0 ..
/// seed + count - 1` for both parameter init and batch sampling). The
/// returned outcomes are decoded together as an ensemble by averaging
/// their per-step distributions.
pub fn ensemble_train(
    train_set: &[Scenario],
    dev_set: &[Scenario],
    spec: &FeatureSpec,
    config: &crate::model::ModelConfig,
    vocab: &crate::corpus::Vocabulary,
    cfg: &TrainConfig,
    count: usize,
) -> Result<Vec<TrainOutcome>, TrainError> {
    if count == 0 {
        return Err(TrainError::BadConfig("ensemble size must be at least 1".into()));
    }
    let mut outcomes = Vec::with_capacity(count);
    for i in 0..count {
        let seed = cfg.seed + i as u64;
        let model = Model::init(config.clone(), vocab.clone(), seed)?;
        let member_cfg = TrainConfig { seed, ..*cfg };
        outcomes.push(train(train_set, dev_set, spec, model, &member_cfg)?);
    }
    Ok(outcomes)
}
