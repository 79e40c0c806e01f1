//! Shared plumbing: error-to-exit-code mapping, JSON writing, decode-mode
//! parsing, and record labels.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use selgen_core::corpus::Record;
use selgen_core::inference::DecodeMode;

/// Every failure is either a usage error (exit 2) or a runtime error
/// (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

// Library errors are runtime failures by default; commands that want usage
// semantics construct `CliError::Usage` explicitly. (`CliError` itself does
// not implement `std::error::Error`, which keeps this blanket impl legal.)
impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| runtime(format!("cannot create directory {}: {e}", path.display())))
}

/// Writes pretty JSON with a trailing newline. Key order is sorted by
/// serde_json, so identical values produce identical bytes.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| runtime(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| runtime(format!("cannot serialize {}: {e}", path.display())))?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Serializes the fully-resolved settings of a run next to its outputs.
pub fn write_run_config(dir: &Path, config: &serde_json::Value) -> Result<(), CliError> {
    write_json(&dir.join("run-config.json"), config)
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| runtime(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Reads whitespace-tokenized lines (one description per line).
pub fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

/// Parses the words after `--decode`: `greedy`, `beam M`, or `knn [M [K]]`
/// (the reranking mode defaults to its tuned setting, M=2 and K=1).
pub fn parse_decode(words: &[String]) -> Result<DecodeMode, CliError> {
    let parse_num = |w: &String, what: &str| {
        w.parse::<usize>()
            .map_err(|_| usage(format!("--decode {what} must be a positive integer, got `{w}`")))
    };
    match words {
        [kind] if kind == "greedy" => Ok(DecodeMode::Greedy),
        [kind, m] if kind == "beam" => Ok(DecodeMode::Beam {
            width: parse_num(m, "beam width")?,
        }),
        [kind] if kind == "beam" => Err(usage("--decode beam needs a width, e.g. `--decode beam 4`")),
        [kind] if kind == "knn" => Ok(DecodeMode::Knn { width: 2, k: 1 }),
        [kind, m] if kind == "knn" => Ok(DecodeMode::Knn {
            width: parse_num(m, "beam width")?,
            k: 1,
        }),
        [kind, m, k] if kind == "knn" => Ok(DecodeMode::Knn {
            width: parse_num(m, "beam width")?,
            k: parse_num(k, "neighbor count")?,
        }),
        _ => Err(usage(format!(
            "--decode expects `greedy`, `beam M`, or `knn M K`, got `{}`",
            words.join(" ")
        ))),
    }
}

pub fn decode_mode_json(mode: DecodeMode) -> serde_json::Value {
    serde_json::to_value(mode).expect("decode mode serializes")
}

/// Short column label for a record in exported heat maps: index, type, and
/// (when present) the time window or mode.
pub fn record_label(index: usize, record: &Record) -> String {
    let mut label = format!("{index}:{}", record.rtype);
    if let Some((b, e)) = record.time {
        label.push_str(&format!("[{b}-{e}]"));
    }
    if let Some(mode) = &record.mode {
        label.push_str(&format!("={mode}"));
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_parsing_covers_all_modes() {
        let w = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(parse_decode(&w(&["greedy"])).unwrap(), DecodeMode::Greedy);
        assert_eq!(
            parse_decode(&w(&["beam", "4"])).unwrap(),
            DecodeMode::Beam { width: 4 }
        );
        assert_eq!(
            parse_decode(&w(&["knn"])).unwrap(),
            DecodeMode::Knn { width: 2, k: 1 }
        );
        assert_eq!(
            parse_decode(&w(&["knn", "3"])).unwrap(),
            DecodeMode::Knn { width: 3, k: 1 }
        );
        assert_eq!(
            parse_decode(&w(&["knn", "3", "2"])).unwrap(),
            DecodeMode::Knn { width: 3, k: 2 }
        );
        assert!(matches!(
            parse_decode(&w(&["beam"])),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse_decode(&w(&["beam", "x"])),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse_decode(&w(&["sample"])),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn record_labels_include_time_and_mode() {
        let r: Record = serde_json::from_str(
            r#"{"type":"windDir","time":[6,21],"attrs":{},"mode":"SSE"}"#,
        )
        .unwrap();
        assert_eq!(record_label(3, &r), "3:windDir[6-21]=SSE");
    }
}
