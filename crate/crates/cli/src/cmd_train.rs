//! `selgen train` — fit one model or an ensemble and write checkpoints,
//! training logs, and the resolved run configuration.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use selgen_core::corpus::{load_scenarios, FeatureSpec, Vocabulary};
use selgen_core::model::{save_model, AlignerMode, ModelConfig};
use selgen_core::training::{ensemble_train, AdamConfig, TrainConfig, TrainError, TrainOutcome};

use crate::util::{ensure_dir, write_json, write_run_config, CliError};

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum AlignerChoice {
    C2f,
    Basic,
}

impl From<AlignerChoice> for AlignerMode {
    fn from(c: AlignerChoice) -> Self {
        match c {
            AlignerChoice::C2f => AlignerMode::CoarseToFine,
            AlignerChoice::Basic => AlignerMode::Basic,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus (.jsonl).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dev corpus for model selection and early stopping (.jsonl).
    #[arg(long)]
    pub dev: PathBuf,
    /// Feature specification (.json).
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Desk-scale preset: batch 10, hidden 64, embed 32, eval every 20.
    /// Explicit flags still win over the preset.
    #[arg(long)]
    pub desk: bool,
    /// Hidden width (default 500; 64 under --desk).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Word-embedding width (default 100; 32 under --desk).
    #[arg(long)]
    pub embed: Option<usize>,
    /// Target number of pre-selected records for the selection regularizer.
    #[arg(long, default_value_t = 8.5)]
    pub gamma: f64,
    /// Aligner: coarse-to-fine (pre-selector + refiner) or basic soft
    /// attention.
    #[arg(long, value_enum, default_value_t = AlignerChoice::C2f)]
    pub aligner: AlignerChoice,
    /// Drop the bidirectional encoder; records are represented by raw
    /// features only.
    #[arg(long)]
    pub no_encoder: bool,
    /// Scenarios per mini-batch (default 100; 10 under --desk).
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    /// Iterations between dev evaluations (default 100; 20 under --desk).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Evaluations without dev-sBLEU improvement before stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Train K models with consecutive seeds; `--ensemble` alone uses the
    /// standard size of 5.
    #[arg(long, num_args = 0..=1, default_value_t = 1, default_missing_value = "5")]
    pub ensemble: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Words rarer than this in the training corpus become <unk>.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Worker threads for gradients and dev decoding (deterministic
    /// regardless of the count).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let hidden = args.hidden.unwrap_or(if args.desk { 64 } else { 500 });
    let embed = args.embed.unwrap_or(if args.desk { 32 } else { 100 });
    let batch_size = args.batch_size.unwrap_or(if args.desk { 10 } else { 100 });
    let eval_every = args.eval_every.unwrap_or(if args.desk { 20 } else { 100 });

    let train_set = load_scenarios(&args.corpus)?;
    let dev_set = load_scenarios(&args.dev)?;
    let spec = FeatureSpec::load(&args.features)?;
    let vocab = Vocabulary::build(&train_set, args.min_count);

    let model_config = ModelConfig {
        hidden,
        embed,
        feat: spec.width(),
        vocab: vocab.len(),
        gamma: args.gamma,
        aligner: args.aligner.into(),
        use_encoder: !args.no_encoder,
    };
    let train_config = TrainConfig {
        batch_size,
        max_epochs: args.max_epochs,
        eval_every,
        patience: args.patience,
        clip_norm: args.clip_norm,
        seed: args.seed,
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        workers: args.workers,
        cbleu_slack: 5,
    };

    ensure_dir(&args.out)?;
    let outcomes = match ensemble_train(
        &train_set,
        &dev_set,
        &spec,
        &model_config,
        &vocab,
        &train_config,
        args.ensemble,
    ) {
        Ok(outcomes) => outcomes,
        Err(TrainError::Diverged {
            iteration,
            last_good,
        }) => {
            // Keep the last model that evaluated cleanly for post-mortems.
            let rescue = args.out.join("model-diverged.json");
            save_model(&rescue, &last_good)?;
            return Err(crate::util::runtime(format!(
                "training diverged (non-finite loss) at iteration {iteration}; \
                 last good model saved to {}",
                rescue.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let mut checkpoint_paths = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        let (model_name, log_name) = if args.ensemble == 1 {
            ("model.json".to_string(), "train-log.json".to_string())
        } else {
            (format!("model-{i}.json"), format!("train-log-{i}.json"))
        };
        let model_path = args.out.join(&model_name);
        save_model(&model_path, &outcome.saved)?;
        write_json(
            &args.out.join(&log_name),
            &serde_json::to_value(&outcome.log)?,
        )?;
        checkpoint_paths.push(model_path.display().to_string());
        report_member(i, outcome, args.ensemble);
    }

    write_run_config(
        &args.out,
        &json!({
            "command": "train",
            "corpus": args.corpus.display().to_string(),
            "dev": args.dev.display().to_string(),
            "features": args.features.display().to_string(),
            "out": args.out.display().to_string(),
            "checkpoints": checkpoint_paths,
            "model": serde_json::to_value(&model_config)?,
            "training": serde_json::to_value(&train_config)?,
            "ensemble": args.ensemble,
            "min_count": args.min_count,
            "desk": args.desk,
            "vocab_size": vocab.len(),
        }),
    )
}

fn report_member(i: usize, outcome: &TrainOutcome, ensemble: usize) {
    let prefix = if ensemble == 1 {
        String::new()
    } else {
        format!("member {i}: ")
    };
    let evals = outcome.log.evals.len();
    let stopped = if outcome.log.stopped_early {
        " (stopped early)"
    } else {
        ""
    };
    println!(
        "{prefix}best dev sBLEU {:.2} at iteration {} after {evals} evaluations{stopped}",
        outcome.best_dev_sbleu, outcome.log.best_iteration
    );
    if let Some(last) = outcome.log.evals.last() {
        println!(
            "{prefix}final: train nll {:.3}, reg {:.3}, dev sBLEU {:.2}, dev cBLEU {:.2}{}",
            last.train_nll,
            last.train_reg,
            last.dev_sbleu,
            last.dev_cbleu,
            match last.dev_f1 {
                Some(f1) => format!(", dev F1 {f1:.3}"),
                None => String::new(),
            }
        );
    }
}
