//! `selgen generate` / `selgen filter` — decode descriptions for a corpus
//! from one or more checkpoints.

use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde_json::json;

use selgen_core::corpus::{load_scenarios, FeatureSpec, Scenario};
use selgen_core::evaluation::{export_alignment, render_alignment_svg};
use selgen_core::inference::{
    beam_decode, conditional_decode, greedy_decode, knn_beam_filter, selected_records,
    trace_for_tokens, AlignmentTrace, DecodeConfig, DecodeMode, Hypothesis, NeighborIndex,
    ScenarioDecoder,
};
use selgen_core::model::{load_model, Model, SavedModel};

use crate::util::{
    decode_mode_json, ensure_dir, parse_decode, record_label, runtime, usage, write_json,
    write_lines, write_run_config, CliError,
};

#[derive(Args)]
pub struct CommonGen {
    /// Checkpoint path; repeatable — several checkpoints decode as an
    /// ensemble (per-step distributions averaged).
    #[arg(long = "checkpoint", required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// Corpus to describe (.jsonl).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Feature specification (.json).
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Cap on emitted tokens (default: twice the longest training
    /// description seen by the checkpoint).
    #[arg(long)]
    pub max_length: Option<usize>,
    /// Training corpus backing the nearest-neighbor index (knn mode only).
    #[arg(long)]
    pub knn_corpus: Option<PathBuf>,
    /// Condition each decode on the scenario's gold record selection.
    #[arg(long)]
    pub gold_selection: bool,
    /// Also write per-scenario selected record sets to selections.json.
    #[arg(long)]
    pub select: bool,
    /// Also write per-scenario alignment heat maps (TSV + SVG) under
    /// alignments/.
    #[arg(long)]
    pub alignments: bool,
    /// Worker threads for per-scenario decoding (output order is fixed).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonGen,
    /// Decoding mode: `greedy`, `beam M`, or `knn M K` (knn defaults to
    /// its tuned setting, M=2 K=1).
    #[arg(long, num_args = 1..=3, default_values_t = ["greedy".to_string()])]
    pub decode: Vec<String>,
}

#[derive(Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub common: CommonGen,
    /// Beam width producing the candidate pool.
    #[arg(long, default_value_t = 2)]
    pub width: usize,
    /// Nearest training scenarios whose descriptions score the candidates.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

pub fn run(args: GenerateArgs) -> Result<(), CliError> {
    let mode = parse_decode(&args.decode)?;
    execute(args.common, mode)
}

pub fn run_filter(args: FilterArgs) -> Result<(), CliError> {
    execute(
        args.common,
        DecodeMode::Knn {
            width: args.width,
            k: args.k,
        },
    )
}

struct ScenarioOutput {
    words: Vec<String>,
    selected: Vec<usize>,
    log_prob: f64,
    finished: bool,
    truncated: bool,
    neighbors: Option<Vec<usize>>,
    fallback: Option<bool>,
    trace: Option<AlignmentTrace>,
}

fn execute(args: CommonGen, mode: DecodeMode) -> Result<(), CliError> {
    if matches!(mode, DecodeMode::Knn { .. }) {
        if args.gold_selection {
            return Err(usage(
                "--gold-selection works with greedy or beam decoding, not knn",
            ));
        }
        if args.knn_corpus.is_none() {
            return Err(usage(
                "knn decoding needs --knn-corpus (the training corpus searched for neighbors)",
            ));
        }
    }
    if args.gold_selection && args.alignments {
        return Err(usage(
            "--alignments cannot be combined with --gold-selection: heat-map \
             columns would not cover the scenario's full record set",
        ));
    }

    let saved: Vec<SavedModel> = args
        .checkpoint
        .iter()
        .map(load_model)
        .collect::<Result<_, _>>()?;
    let models: Vec<Model> = saved.iter().map(|s| s.model.clone()).collect();
    let max_train_len = saved.iter().map(|s| s.max_train_len).max().unwrap_or(0);
    let max_length = args.max_length.unwrap_or((2 * max_train_len).max(4));

    let scenarios = load_scenarios(&args.corpus)?;
    let spec = FeatureSpec::load(&args.features)?;
    let knn_index = match (&mode, &args.knn_corpus) {
        (DecodeMode::Knn { .. }, Some(path)) => {
            let train = load_scenarios(path)?;
            Some(NeighborIndex::build(&train, &spec)?)
        }
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.max(1))
        .build()
        .map_err(|e| runtime(format!("worker pool: {e}")))?;
    let results: Vec<ScenarioOutput> = pool.install(|| {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                decode_one(
                    i,
                    s,
                    &models,
                    &spec,
                    mode,
                    max_length,
                    args.gold_selection,
                    args.alignments,
                    knn_index.as_ref(),
                )
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    ensure_dir(&args.out)?;
    let lines: Vec<String> = results.iter().map(|r| r.words.join(" ")).collect();
    let generated_path = args.out.join("generated.txt");
    write_lines(&generated_path, &lines)?;
    println!(
        "wrote {} descriptions to {}",
        lines.len(),
        generated_path.display()
    );

    if args.select {
        let selections: Vec<&Vec<usize>> = results.iter().map(|r| &r.selected).collect();
        let path = args.out.join("selections.json");
        write_json(&path, &serde_json::to_value(&selections)?)?;
        println!("wrote record selections to {}", path.display());
    }

    if args.alignments {
        let dir = args.out.join("alignments");
        ensure_dir(&dir)?;
        for (i, (r, s)) in results.iter().zip(&scenarios).enumerate() {
            let trace = r
                .trace
                .as_ref()
                .expect("alignment traces are collected when --alignments is set");
            let labels: Vec<String> = s
                .records
                .iter()
                .enumerate()
                .map(|(j, rec)| record_label(j, rec))
                .collect();
            export_alignment(trace, &r.words, &labels, dir.join(format!("scenario-{i}.tsv")))?;
            render_alignment_svg(trace, &r.words, &labels, dir.join(format!("scenario-{i}.svg")))?;
        }
        println!("wrote {} alignment heat maps to {}", results.len(), dir.display());
    }

    let config = &models[0].config;
    let report = json!({
        "model": {
            "aligner": config.aligner.to_string(),
            "use_encoder": config.use_encoder,
            "hidden": config.hidden,
            "embed": config.embed,
            "vocab": config.vocab,
            "gamma": config.gamma,
            "ensemble": models.len(),
            "max_train_len": max_train_len,
        },
        "decode": {
            "mode": decode_mode_json(mode),
            "max_length": max_length,
            "gold_selection": args.gold_selection,
        },
        "scenarios": results.iter().enumerate().map(|(i, r)| {
            let mut entry = json!({
                "index": i,
                "text": r.words.join(" "),
                "log_prob": r.log_prob,
                "finished": r.finished,
                "truncated": r.truncated,
                "selected": r.selected,
            });
            if let Some(n) = &r.neighbors {
                entry["neighbors"] = json!(n);
            }
            if let Some(f) = r.fallback {
                entry["fallback"] = json!(f);
            }
            entry
        }).collect::<Vec<_>>(),
    });
    write_json(&args.out.join("decode-report.json"), &report)?;

    write_run_config(
        &args.out,
        &json!({
            "command": "generate",
            "checkpoints": args.checkpoint.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "corpus": args.corpus.display().to_string(),
            "features": args.features.display().to_string(),
            "out": args.out.display().to_string(),
            "decode": decode_mode_json(mode),
            "max_length": max_length,
            "knn_corpus": args.knn_corpus.as_ref().map(|p| p.display().to_string()),
            "gold_selection": args.gold_selection,
            "select": args.select,
            "alignments": args.alignments,
            "workers": args.workers,
            "model": serde_json::to_value(config)?,
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn decode_one(
    index: usize,
    scenario: &Scenario,
    models: &[Model],
    spec: &FeatureSpec,
    mode: DecodeMode,
    max_length: usize,
    gold_selection: bool,
    want_trace: bool,
    knn_index: Option<&NeighborIndex>,
) -> Result<ScenarioOutput, CliError> {
    let features = spec.featurize_scenario(scenario)?;
    let vocab = &models[0].vocab;

    let mut neighbors = None;
    let mut fallback = None;
    let (hyp, trace, selected): (Hypothesis, Option<AlignmentTrace>, Vec<usize>) =
        if gold_selection {
            let subset = scenario.gold_selection.as_deref().ok_or_else(|| {
                runtime(format!(
                    "scenario {index} has no gold_selection; --gold-selection needs one on every scenario"
                ))
            })?;
            let cfg = DecodeConfig { mode, max_length };
            let (hyp, _, selected) = conditional_decode(models, &features, subset, &cfg)?;
            (hyp, None, selected)
        } else {
            let decoder = ScenarioDecoder::new(models, &features)?;
            match mode {
                DecodeMode::Greedy => {
                    let (hyp, trace) = greedy_decode(&decoder, max_length)?;
                    let selected = selected_records(&hyp.alpha_rows).into_iter().collect();
                    (hyp, want_trace.then_some(trace), selected)
                }
                DecodeMode::Beam { width } => {
                    let all = beam_decode(&decoder, width, max_length)?;
                    let hyp = all
                        .into_iter()
                        .next()
                        .ok_or_else(|| runtime("beam search returned no hypotheses"))?;
                    let selected = selected_records(&hyp.alpha_rows).into_iter().collect();
                    let trace = if want_trace {
                        Some(trace_for_tokens(&decoder, &hyp.tokens)?)
                    } else {
                        None
                    };
                    (hyp, trace, selected)
                }
                DecodeMode::Knn { width, k } => {
                    let candidates = beam_decode(&decoder, width, max_length)?;
                    let signature = spec.mean_feature(scenario)?;
                    let index_ref =
                        knn_index.expect("knn mode is validated to carry an index");
                    let outcome =
                        knn_beam_filter(&signature, &candidates, index_ref, k, vocab)?;
                    let hyp = candidates[outcome.chosen].clone();
                    neighbors = Some(outcome.neighbors);
                    fallback = Some(outcome.fallback);
                    let selected = selected_records(&hyp.alpha_rows).into_iter().collect();
                    let trace = if want_trace {
                        Some(trace_for_tokens(&decoder, &hyp.tokens)?)
                    } else {
                        None
                    };
                    (hyp, trace, selected)
                }
            }
        };

    Ok(ScenarioOutput {
        words: vocab.decode(&hyp.tokens),
        selected,
        log_prob: hyp.log_prob,
        finished: hyp.finished,
        truncated: hyp.truncated,
        neighbors,
        fallback,
        trace,
    })
}
