//! Alignment heat-map export.
//!
//! The tab-separated format puts record labels on the header row, the
//! pre-selection probabilities (when present) on a `p` row, and one row
//! per generated token with that step's refined alignment weights, all to
//! six decimal places:
//!
//! ```text
//!         temperature.1   windSpeed.1 ...
//! p       0.993412        0.871003    ...
//! a       0.712345        0.101234    ...
//! low     0.845678        0.023456    ...
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::inference::AlignmentTrace;

use super::EvalError;

fn check(
    trace: &AlignmentTrace,
    tokens: &[String],
    record_labels: &[String],
) -> Result<(), EvalError> {
    if trace.steps.len() != tokens.len() {
        return Err(EvalError::TraceMismatch {
            rows: trace.steps.len(),
            tokens: tokens.len(),
        });
    }
    let widths = trace
        .steps
        .iter()
        .map(|s| s.refined.len())
        .chain(trace.preselect.as_ref().map(|p| p.len()));
    for w in widths {
        if w != record_labels.len() {
            return Err(EvalError::LabelMismatch {
                row: w,
                labels: record_labels.len(),
            });
        }
    }
    Ok(())
}

/// Writes the trace as a TSV heat map.
pub fn export_alignment(
    trace: &AlignmentTrace,
    tokens: &[String],
    record_labels: &[String],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    check(trace, tokens, record_labels)?;
    let path = path.as_ref();
    let io_err = |source: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "\t{}", record_labels.join("\t")).map_err(io_err)?;
    if let Some(pre) = &trace.preselect {
        writeln!(w, "p\t{}", row(pre)).map_err(io_err)?;
    }
    for (tok, step) in tokens.iter().zip(&trace.steps) {
        writeln!(w, "{tok}\t{}", row(&step.refined)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join("\t")
}

/// Renders the trace as an SVG heat map: one column per record, one row
/// per token (plus the pre-selection row), darker cells for higher
/// weights.
pub fn render_alignment_svg(
    trace: &AlignmentTrace,
    tokens: &[String],
    record_labels: &[String],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    check(trace, tokens, record_labels)?;
    let path = path.as_ref();
    let io_err = |source: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source,
    };

    const CELL: usize = 22;
    const LEFT: usize = 90;
    const TOP: usize = 90;
    let cols = record_labels.len();
    let mut rows: Vec<(&str, &[f64])> = Vec::new();
    if let Some(pre) = &trace.preselect {
        rows.push(("p", pre));
    }
    for (tok, step) in tokens.iter().zip(&trace.steps) {
        rows.push((tok.as_str(), &step.refined));
    }
    let width = LEFT + cols * CELL + 10;
    let height = TOP + rows.len() * CELL + 10;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"10\">\n"
    ));
    for (j, label) in record_labels.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-60 {x} {})\" text-anchor=\"start\">{}</text>\n",
            TOP - 6,
            TOP - 6,
            escape(label)
        ));
    }
    for (i, (label, values)) in rows.iter().enumerate() {
        let y = TOP + i * CELL;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6,
            y + CELL / 2 + 4,
            escape(label)
        ));
        for (j, v) in values.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"rgb({shade},{shade},{shade})\" stroke=\"#ccc\"/>\n",
                LEFT + j * CELL
            ));
        }
    }
    svg.push_str("</svg>\n");

    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(svg.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::TraceStep;

    fn trace() -> AlignmentTrace {
        AlignmentTrace {
            preselect: Some(vec![0.9, 0.1]),
            steps: vec![
                TraceStep {
                    scores: vec![1.0, -1.0],
                    weights: vec![0.88, 0.12],
                    refined: vec![0.984615, 0.015385],
                    context: vec![0.0; 3],
                },
                TraceStep {
                    scores: vec![-1.0, 1.0],
                    weights: vec![0.12, 0.88],
                    refined: vec![0.5, 0.5],
                    context: vec![0.0; 3],
                },
            ],
        }
    }

    fn labels() -> Vec<String> {
        vec!["temperature.1".into(), "windSpeed.1".into()]
    }

    fn tokens() -> Vec<String> {
        vec!["a".into(), "low".into()]
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("selgen-align-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn tsv_round_trips_to_six_decimals() {
        let path = tmp("heat.tsv");
        export_alignment(&trace(), &tokens(), &labels(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "\ttemperature.1\twindSpeed.1");
        assert_eq!(lines[1], "p\t0.900000\t0.100000");
        // Parse back and compare to 1e-6.
        let cells: Vec<f64> = lines[2]
            .split('\t')
            .skip(1)
            .map(|c| c.parse().unwrap())
            .collect();
        for (parsed, original) in cells.iter().zip(&trace().steps[0].refined) {
            assert!((parsed - original).abs() <= 1e-6);
        }
        assert!(lines[3].starts_with("low\t"));
    }

    #[test]
    fn preselect_row_is_omitted_without_a_preselector() {
        let mut t = trace();
        t.preselect = None;
        let path = tmp("nopre.tsv");
        export_alignment(&t, &tokens(), &labels(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.lines().any(|l| l.starts_with("p\t")));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let path = tmp("bad.tsv");
        let err = export_alignment(&trace(), &tokens()[..1].to_vec(), &labels(), &path).unwrap_err();
        assert!(matches!(err, EvalError::TraceMismatch { .. }));
        let err =
            export_alignment(&trace(), &tokens(), &labels()[..1].to_vec(), &path).unwrap_err();
        assert!(matches!(err, EvalError::LabelMismatch { .. }));
    }

    #[test]
    fn svg_contains_a_cell_per_value() {
        let path = tmp("heat.svg");
        render_alignment_svg(&trace(), &tokens(), &labels(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<rect").count(), 6); // 3 rows x 2 records
        assert!(text.contains("temperature.1"));
        assert!(text.starts_with("<svg"));
    }
}
