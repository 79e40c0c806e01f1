//! `selgen inspect` — look inside a checkpoint: nearest embedding
//! neighbors, alignment heat-map export, and parameter statistics.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use selgen_core::corpus::{load_scenarios, FeatureSpec};
use selgen_core::evaluation::{embedding_neighbors, export_alignment, render_alignment_svg};
use selgen_core::inference::{greedy_decode, ScenarioDecoder};
use selgen_core::model::load_model;

use crate::util::{ensure_dir, record_label, runtime, usage, CliError};

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// WORD [K] — print the K nearest vocabulary words by embedding cosine
    /// similarity (K defaults to 5).
    #[arg(long, num_args = 1..=2)]
    pub neighbors: Option<Vec<String>>,
    /// Scenario index whose alignment heat map to export (needs --corpus,
    /// --features, and --out).
    #[arg(long)]
    pub alignment: Option<usize>,
    /// Corpus for --alignment (.jsonl).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Feature specification for --alignment (.json).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output directory for --alignment exports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print a per-parameter-group summary (tensors, size, L2 norm).
    #[arg(long)]
    pub stats: bool,
    /// Token cap for the --alignment decode (default: twice the longest
    /// training description).
    #[arg(long)]
    pub max_length: Option<usize>,
}

pub fn run(args: InspectArgs) -> Result<(), CliError> {
    if args.neighbors.is_none() && args.alignment.is_none() && !args.stats {
        return Err(usage(
            "inspect needs at least one of --neighbors, --alignment, --stats",
        ));
    }
    let saved = load_model(&args.checkpoint)?;

    if let Some(spec) = &args.neighbors {
        let word = &spec[0];
        let k = match spec.get(1) {
            Some(raw) => raw
                .parse::<usize>()
                .map_err(|_| usage(format!("--neighbors count must be an integer, got `{raw}`")))?,
            None => 5,
        };
        let rows = embedding_neighbors(&saved.model, word, k)?;
        println!("nearest to `{word}`:");
        for (w, sim) in rows {
            println!("  {w}\t{sim:.4}");
        }
    }

    if args.stats {
        print_stats(&saved.model.params);
    }

    if let Some(index) = args.alignment {
        let corpus = args
            .corpus
            .as_ref()
            .ok_or_else(|| usage("--alignment needs --corpus"))?;
        let features = args
            .features
            .as_ref()
            .ok_or_else(|| usage("--alignment needs --features"))?;
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| usage("--alignment needs --out"))?;
        let scenarios = load_scenarios(corpus)?;
        let scenario = scenarios.get(index).ok_or_else(|| {
            runtime(format!(
                "scenario index {index} is out of range (corpus has {})",
                scenarios.len()
            ))
        })?;
        let spec = FeatureSpec::load(features)?;
        let feats = spec.featurize_scenario(scenario)?;
        let models = std::slice::from_ref(&saved.model);
        let decoder = ScenarioDecoder::new(models, &feats)?;
        let max_length = args.max_length.unwrap_or((2 * saved.max_train_len).max(4));
        let (hyp, trace) = greedy_decode(&decoder, max_length)?;
        let words = saved.model.vocab.decode(&hyp.tokens);
        let labels: Vec<String> = scenario
            .records
            .iter()
            .enumerate()
            .map(|(j, r)| record_label(j, r))
            .collect();
        ensure_dir(out)?;
        let tsv = out.join(format!("alignment-{index}.tsv"));
        let svg = out.join(format!("alignment-{index}.svg"));
        export_alignment(&trace, &words, &labels, &tsv)?;
        render_alignment_svg(&trace, &words, &labels, &svg)?;
        println!("wrote {} and {}", tsv.display(), svg.display());
    }

    Ok(())
}

/// Prints one line per parameter group (an affine map's weights and bias
/// count as one group).
fn print_stats(params: &selgen_core::diff::ParamStore) {
    let mut groups: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for (name, tensor) in params.iter() {
        let group = name
            .strip_suffix(".w")
            .or_else(|| name.strip_suffix(".b"))
            .unwrap_or(name);
        let entry = groups.entry(group.to_string()).or_default();
        entry.0 += 1;
        entry.1 += tensor.len();
        entry.2 += tensor.data().iter().map(|v| v * v).sum::<f64>();
    }
    println!("{:<20} {:>7} {:>9} {:>12}", "group", "tensors", "coords", "l2");
    for (group, (tensors, coords, sumsq)) in &groups {
        println!(
            "{:<20} {:>7} {:>9} {:>12.4}",
            group,
            tensors,
            coords,
            sumsq.sqrt()
        );
    }
    println!("{} parameter groups", groups.len());
}
