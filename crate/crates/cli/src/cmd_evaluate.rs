//! `selgen evaluate` — score generated descriptions against a reference
//! corpus: BLEU, slack BLEU, and record-selection F1.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use selgen_core::corpus::load_scenarios;
use selgen_core::evaluation::{cbleu, sbleu, selection_f1, EvalError};

use crate::util::{
    ensure_dir, read_token_lines, runtime, usage, write_json, write_run_config, CliError,
};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Generated descriptions, one whitespace-tokenized line per scenario.
    #[arg(long)]
    pub generated: PathBuf,
    /// Reference corpus (.jsonl); texts are the references, gold_selection
    /// fields back the f1 metric.
    #[arg(long)]
    pub references: PathBuf,
    /// Predicted record selections (selections.json from `generate
    /// --select`); required for f1.
    #[arg(long)]
    pub selections: Option<PathBuf>,
    /// Integer tokens within this distance of a reference integer still
    /// count as matches for cbleu.
    #[arg(long, default_value_t = 5)]
    pub slack: i64,
    /// Comma-separated subset of sbleu,cbleu,f1 (default: sbleu,cbleu,
    /// plus f1 when --selections is given).
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
    /// Directory for report.json; the report prints to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let candidates = read_token_lines(&args.generated)?;
    let references = load_scenarios(&args.references)?;
    let ref_texts: Vec<Vec<String>> = references.iter().map(|s| s.text.clone()).collect();

    let metrics: Vec<String> = if args.metric.is_empty() {
        let mut m = vec!["sbleu".to_string(), "cbleu".to_string()];
        if args.selections.is_some() {
            m.push("f1".to_string());
        }
        m
    } else {
        for m in &args.metric {
            if !matches!(m.as_str(), "sbleu" | "cbleu" | "f1") {
                return Err(usage(format!(
                    "unknown metric `{m}` (expected sbleu, cbleu, or f1)"
                )));
            }
        }
        args.metric.clone()
    };

    let mut report = serde_json::Map::new();
    for metric in &metrics {
        match metric.as_str() {
            "sbleu" => {
                let r = sbleu(&candidates, &ref_texts)?;
                report.insert("sbleu".into(), serde_json::to_value(&r)?);
            }
            "cbleu" => {
                let r = cbleu(&candidates, &ref_texts, args.slack)?;
                report.insert("cbleu".into(), serde_json::to_value(&r)?);
            }
            "f1" => {
                let path = args.selections.as_ref().ok_or_else(|| {
                    usage("--metric f1 needs --selections (written by `selgen generate --select`)")
                })?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
                let predicted: Vec<Vec<usize>> = serde_json::from_str(&text)
                    .map_err(|e| runtime(format!("{} is not a selections file: {e}", path.display())))?;
                let predicted: Vec<BTreeSet<usize>> =
                    predicted.into_iter().map(BTreeSet::from_iter).collect();
                let gold: Vec<Option<BTreeSet<usize>>> =
                    references.iter().map(|s| s.gold_set()).collect();
                let r = match selection_f1(&predicted, &gold) {
                    Err(EvalError::NoGold) => {
                        return Err(runtime(
                            "gold selection unavailable: no scenario in the reference \
                             corpus carries a gold_selection field",
                        ))
                    }
                    other => other?,
                };
                report.insert("f1".into(), serde_json::to_value(&r)?);
            }
            _ => unreachable!("metrics are validated above"),
        }
    }
    let report = serde_json::Value::Object(report);

    match &args.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_json(&dir.join("report.json"), &report)?;
            write_run_config(
                dir,
                &json!({
                    "command": "evaluate",
                    "generated": args.generated.display().to_string(),
                    "references": args.references.display().to_string(),
                    "selections": args.selections.as_ref().map(|p| p.display().to_string()),
                    "slack": args.slack,
                    "metric": metrics,
                    "out": dir.display().to_string(),
                }),
            )?;
            print_summary(&report);
            println!("wrote report to {}", dir.join("report.json").display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn print_summary(report: &serde_json::Value) {
    for key in ["sbleu", "cbleu"] {
        if let Some(score) = report.get(key).and_then(|v| v.get("score")).and_then(|v| v.as_f64()) {
            println!("{key} {score:.2}");
        }
    }
    if let Some(f1) = report.get("f1").and_then(|v| v.get("f1")).and_then(|v| v.as_f64()) {
        println!("f1 {f1:.4}");
    }
}
