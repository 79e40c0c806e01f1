//! Records, scenarios, and JSON-lines persistence.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One structured fact: a typed record with an optional time span, numeric
/// attributes, and an optional categorical mode.
///
/// JSON shape:
/// `{"type":"temperature","time":[6,21],"attrs":{"max":55,"mean":48,"min":41},"mode":null}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    #[serde(rename = "type")]
    pub rtype: String,
    pub time: Option<(i64, i64)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, i64>,
    pub mode: Option<String>,
}

/// A set of records paired with its textual description and, when known,
/// the indices of the records the text actually talks about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub records: Vec<Record>,
    pub text: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_selection: Option<Vec<usize>>,
}

impl Scenario {
    /// Gold selection as a sorted set, if present.
    pub fn gold_set(&self) -> Option<std::collections::BTreeSet<usize>> {
        self.gold_selection
            .as_ref()
            .map(|v| v.iter().copied().collect())
    }
}

/// Reads scenarios from a JSON-lines file (one scenario per line, blank
/// lines ignored). Errors carry the file path and 1-based line number.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let scenario: Scenario =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        out.push(scenario);
    }
    Ok(out)
}

/// Writes scenarios as JSON lines. Output is deterministic: attribute maps
/// are ordered, and field order is fixed by the types.
pub fn save_scenarios(path: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for s in scenarios {
        let line = serde_json::to_string(s)?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Scenario {
        Scenario {
            records: vec![
                Record {
                    rtype: "temperature".into(),
                    time: Some((6, 21)),
                    attrs: [("min".to_string(), 41), ("mean".to_string(), 48), ("max".to_string(), 55)]
                        .into_iter()
                        .collect(),
                    mode: None,
                },
                Record {
                    rtype: "windDir".into(),
                    time: None,
                    attrs: BTreeMap::new(),
                    mode: Some("SE".into()),
                },
            ],
            text: ["a", "low", "around", "41"].map(String::from).to_vec(),
            gold_selection: Some(vec![0]),
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let s = sample();
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        // And textual identity: serializing the reparsed value reproduces
        // the original bytes.
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn documented_shape_parses() {
        let line = r#"{"records":[{"type":"temperature","time":[6,21],"attrs":{"max":55,"mean":48,"min":41},"mode":null}],"text":["a","low","around","41"],"gold_selection":[0]}"#;
        let s: Scenario = serde_json::from_str(line).unwrap();
        assert_eq!(s.records[0].attrs["min"], 41);
        assert_eq!(serde_json::to_string(&s).unwrap(), line);
    }

    #[test]
    fn jsonl_save_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("selgen-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corpus.jsonl");
        let scenarios = vec![sample(), sample()];
        save_scenarios(&path, &scenarios).unwrap();
        let back = load_scenarios(&path).unwrap();
        assert_eq!(back, scenarios);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn parse_error_names_path_and_line() {
        let dir = std::env::temp_dir().join(format!("selgen-badline-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        std::fs::write(&path, "{\"records\":[],\"text\":[]}\nnot json\n").unwrap();
        let err = load_scenarios(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.jsonl") && msg.contains(":2"), "{msg}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
