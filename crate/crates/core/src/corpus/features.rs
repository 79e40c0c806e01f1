//! Fixed-width record featurization.
//!
//! A [`FeatureSpec`] fixes the feature layout for a dataset:
//!
//! ```text
//! [ one-hot record type | per-type blocks ......................... | time ]
//!                         type 0: numeric fields, then mode one-hot
//!                         type 1: numeric fields, then mode one-hot
//!                         ...
//! ```
//!
//! Numeric attributes are scaled to `[0, 1]` by their declared bounds and
//! clipped; the trailing two slots hold `begin/24` and `end/24` of the time
//! span (zeros when absent). Records of different types therefore occupy
//! disjoint nonzero slots apart from the shared time slots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Record, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericFieldSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Categorical mode slot: the list of admissible values, one-hot encoded in
/// listed order.
pub type ModeSpec = Vec<String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub name: String,
    #[serde(default)]
    pub numeric: Vec<NumericFieldSpec>,
    #[serde(default)]
    pub modes: ModeSpec,
}

impl TypeSpec {
    fn block_len(&self) -> usize {
        self.numeric.len() + self.modes.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub types: Vec<TypeSpec>,
}

impl FeatureSpec {
    /// Total feature width `F`.
    pub fn width(&self) -> usize {
        self.types.len() + self.types.iter().map(TypeSpec::block_len).sum::<usize>() + 2
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    /// Checks bounds are non-degenerate.
    pub fn validate(&self) -> Result<(), CorpusError> {
        for t in &self.types {
            for f in &t.numeric {
                if !(f.hi > f.lo) {
                    return Err(CorpusError::EmptyRange {
                        rtype: t.name.clone(),
                        field: f.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Encodes one record as a fixed-width vector in `[0, 1]`.
    pub fn featurize(&self, r: &Record) -> Result<Vec<f64>, CorpusError> {
        let ti = self
            .type_index(&r.rtype)
            .ok_or_else(|| CorpusError::UnknownRecordType(r.rtype.clone()))?;
        let mut out = vec![0.0; self.width()];
        out[ti] = 1.0;

        let mut offset = self.types.len();
        for t in &self.types[..ti] {
            offset += t.block_len();
        }
        let tspec = &self.types[ti];
        for f in &tspec.numeric {
            let raw = *r
                .attrs
                .get(&f.name)
                .ok_or_else(|| CorpusError::MissingAttribute {
                    rtype: r.rtype.clone(),
                    attr: f.name.clone(),
                })? as f64;
            out[offset] = ((raw - f.lo) / (f.hi - f.lo)).clamp(0.0, 1.0);
            offset += 1;
        }
        if !tspec.modes.is_empty() {
            let mode = r.mode.as_ref().ok_or_else(|| CorpusError::MissingAttribute {
                rtype: r.rtype.clone(),
                attr: "mode".to_string(),
            })?;
            let mi = tspec
                .modes
                .iter()
                .position(|m| m == mode)
                .ok_or_else(|| CorpusError::UnknownMode {
                    rtype: r.rtype.clone(),
                    mode: mode.clone(),
                })?;
            out[offset + mi] = 1.0;
        } else if let Some(mode) = &r.mode {
            return Err(CorpusError::UnknownMode {
                rtype: r.rtype.clone(),
                mode: mode.clone(),
            });
        }

        let w = self.width();
        if let Some((begin, end)) = r.time {
            out[w - 2] = (begin as f64 / 24.0).clamp(0.0, 1.0);
            out[w - 1] = (end as f64 / 24.0).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Feature vectors for every record of a scenario, in record order.
    pub fn featurize_scenario(&self, s: &Scenario) -> Result<Vec<Vec<f64>>, CorpusError> {
        if s.records.is_empty() {
            return Err(CorpusError::EmptyScenario);
        }
        s.records.iter().map(|r| self.featurize(r)).collect()
    }

    /// Mean of the record feature vectors; the scenario's signature for
    /// nearest-neighbour lookup.
    pub fn mean_feature(&self, s: &Scenario) -> Result<Vec<f64>, CorpusError> {
        let feats = self.featurize_scenario(s)?;
        let n = feats.len() as f64;
        let mut mean = vec![0.0; self.width()];
        for f in &feats {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n;
            }
        }
        Ok(mean)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: FeatureSpec = serde_json::from_reader(BufReader::new(file))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn spec() -> FeatureSpec {
        FeatureSpec {
            types: vec![
                TypeSpec {
                    name: "temperature".into(),
                    numeric: vec![
                        NumericFieldSpec { name: "min".into(), lo: 0.0, hi: 100.0 },
                        NumericFieldSpec { name: "max".into(), lo: 0.0, hi: 100.0 },
                    ],
                    modes: vec![],
                },
                TypeSpec {
                    name: "windDir".into(),
                    numeric: vec![],
                    modes: vec!["N".into(), "S".into()],
                },
            ],
        }
    }

    fn temp_record() -> Record {
        Record {
            rtype: "temperature".into(),
            time: Some((6, 21)),
            attrs: BTreeMap::from([("min".to_string(), 30), ("max".to_string(), 50)]),
            mode: None,
        }
    }

    #[test]
    fn width_counts_all_sections() {
        // 2 type slots + (2 numeric) + (2 modes) + 2 time slots.
        assert_eq!(spec().width(), 8);
    }

    #[test]
    fn layout_matches_hand_computed_vector() {
        let f = spec().featurize(&temp_record()).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.3, 0.5, 0.0, 0.0, 0.25, 0.875]);
    }

    #[test]
    fn different_types_use_disjoint_slots_apart_from_time() {
        let s = spec();
        let a = s.featurize(&temp_record()).unwrap();
        let wind = Record {
            rtype: "windDir".into(),
            time: Some((6, 21)),
            attrs: BTreeMap::new(),
            mode: Some("S".into()),
        };
        let b = s.featurize(&wind).unwrap();
        let time_slots = [s.width() - 2, s.width() - 1];
        for i in 0..s.width() {
            if time_slots.contains(&i) {
                continue;
            }
            assert!(
                !(a[i] != 0.0 && b[i] != 0.0),
                "slot {i} is nonzero for both record types"
            );
        }
    }

    #[test]
    fn out_of_range_values_are_clipped() {
        let mut r = temp_record();
        r.attrs.insert("min".into(), -20);
        r.attrs.insert("max".into(), 140);
        let f = spec().featurize(&r).unwrap();
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 1.0);
    }

    #[test]
    fn missing_time_leaves_zeros() {
        let mut r = temp_record();
        r.time = None;
        let f = spec().featurize(&r).unwrap();
        assert_eq!(&f[6..8], &[0.0, 0.0]);
    }

    #[test]
    fn unknown_type_and_mode_are_errors() {
        let s = spec();
        let mut r = temp_record();
        r.rtype = "tide".into();
        assert!(matches!(
            s.featurize(&r),
            Err(CorpusError::UnknownRecordType(_))
        ));
        let wind = Record {
            rtype: "windDir".into(),
            time: None,
            attrs: BTreeMap::new(),
            mode: Some("SSW".into()),
        };
        assert!(matches!(s.featurize(&wind), Err(CorpusError::UnknownMode { .. })));
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let s = spec();
        let mut r = temp_record();
        r.attrs.remove("max");
        assert!(matches!(
            s.featurize(&r),
            Err(CorpusError::MissingAttribute { .. })
        ));
    }

    #[test]
    fn mean_feature_averages_rows() {
        let s = spec();
        let scenario = Scenario {
            records: vec![temp_record(), temp_record()],
            text: vec![],
            gold_selection: None,
        };
        let mean = s.mean_feature(&scenario).unwrap();
        let single = s.featurize(&temp_record()).unwrap();
        for (m, v) in mean.iter().zip(&single) {
            assert!((m - v).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_bounds_fail_validation() {
        let mut s = spec();
        s.types[0].numeric[0].hi = s.types[0].numeric[0].lo;
        assert!(matches!(s.validate(), Err(CorpusError::EmptyRange { .. })));
    }
}
