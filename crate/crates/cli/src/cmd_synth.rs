//! `selgen synth` — write a synthetic corpus as train/dev/test splits.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use selgen_core::corpus::{save_scenarios, synth_generate, SynthConfig};

use crate::util::{ensure_dir, write_run_config, CliError};

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (train.jsonl, dev.jsonl, test.jsonl, features.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Training scenarios.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Dev scenarios.
    #[arg(long, default_value_t = 20)]
    pub dev: usize,
    /// Test scenarios.
    #[arg(long, default_value_t = 20)]
    pub test: usize,
    /// Records per scenario.
    #[arg(long, default_value_t = 12)]
    pub records: usize,
    /// Salient records per scenario (the gold selection size).
    #[arg(long, default_value_t = 4)]
    pub salient: usize,
    /// Probability of appending distractor tokens to a description.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Base seed; the three splits use seed, seed+1, seed+2.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    ensure_dir(&args.out)?;
    let splits = [("train", args.n, 0u64), ("dev", args.dev, 1), ("test", args.test, 2)];
    let mut spec_saved = false;
    for (name, size, offset) in splits {
        let cfg = SynthConfig {
            scenarios: size,
            records_per_scenario: args.records,
            salient_count: args.salient,
            noise: args.noise,
            seed: args.seed + offset,
        };
        let (scenarios, spec) = synth_generate(&cfg)?;
        let path = args.out.join(format!("{name}.jsonl"));
        save_scenarios(&path, &scenarios)?;
        println!("wrote {size} scenarios to {}", path.display());
        if !spec_saved {
            spec.save(args.out.join("features.json"))?;
            spec_saved = true;
        }
    }
    write_run_config(
        &args.out,
        &json!({
            "command": "synth",
            "out": args.out.display().to_string(),
            "n": args.n,
            "dev": args.dev,
            "test": args.test,
            "records": args.records,
            "salient": args.salient,
            "noise": args.noise,
            "seed": args.seed,
        }),
    )
}
