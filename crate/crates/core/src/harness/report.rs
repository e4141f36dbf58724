//! Report files: per-record JSON lines, summary JSON/CSV, and WER-bin
//! breakdowns in long format.
//!
//! `summary.csv` columns:
//! `source,shots,n,errored,f1,em,accuracy,question_wer,options_per_word`.
//! `wer_bins.csv` columns:
//! `grouping,source,shots,bin,lower,upper,count,metric,value`.
//! Absent values are empty cells; numbers carry six decimals.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::{EvalRecord, Summary};
use crate::prompting::TranscriptSource;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to report")]
    EmptyRecords,
    #[error("bin edges must be positive and strictly increasing: {0:?}")]
    BadEdges(Vec<f64>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "source",
    "shots",
    "n",
    "errored",
    "f1",
    "em",
    "accuracy",
    "question_wer",
    "options_per_word",
];

pub const LONG_COLUMNS: [&str; 9] = [
    "grouping", "source", "shots", "bin", "lower", "upper", "count", "metric", "value",
];

pub const DEFAULT_BIN_EDGES: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

pub const GROUP_WER_BIN: &str = "wer_bin";
pub const GROUP_SPLIT: &str = "asr_error_split";
pub const WITHOUT_ERRORS: &str = "without_asr_errors";
pub const WITH_ERRORS: &str = "with_asr_errors";
const UNKNOWN: &str = "unknown";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(io(path))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn records_jsonl(records: &[EvalRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn summary_csv(summary: &Summary) -> String {
    let rows: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|r| {
            vec![
                r.source.to_string(),
                r.shots.to_string(),
                r.n.to_string(),
                r.errored.to_string(),
                cell(r.f1),
                cell(r.em),
                cell(r.accuracy),
                cell(r.question_wer),
                cell(r.options_per_word),
            ]
        })
        .collect();
    csv_text(&SUMMARY_COLUMNS, &rows)
}

/// Writes `records.jsonl`, `summary.json` and `summary.csv` into `dir`.
pub fn emit_report(dir: &Path, records: &[EvalRecord], summary: &Summary) -> Result<(), ReportError> {
    if records.is_empty() || summary.rows.is_empty() {
        return Err(ReportError::EmptyRecords);
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    write(&dir.join("records.jsonl"), &records_jsonl(records))?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write(&dir.join("summary.json"), &json)?;
    write(&dir.join("summary.csv"), &summary_csv(summary))
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn load_summary(path: impl AsRef<Path>) -> Result<Summary, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub grouping: String,
    pub source: TranscriptSource,
    pub shots: u8,
    pub bin: String,
    /// Exclusive lower bound (inclusive for the zero bin).
    pub lower: Option<f64>,
    /// Inclusive upper bound; none for the overflow bin.
    pub upper: Option<f64>,
    pub count: usize,
    pub metrics: Vec<MetricValue>,
}

impl BinRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == name).and_then(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerBinReport {
    pub edges: Vec<f64>,
    pub rows: Vec<BinRow>,
}

struct BinSpec {
    label: String,
    lower: Option<f64>,
    upper: Option<f64>,
}

fn bin_specs(edges: &[f64]) -> Vec<BinSpec> {
    let mut out = vec![BinSpec {
        label: "0".into(),
        lower: Some(0.0),
        upper: Some(0.0),
    }];
    let mut prev = 0.0;
    for &e in edges {
        out.push(BinSpec {
            label: format!("({prev},{e}]"),
            lower: Some(prev),
            upper: Some(e),
        });
        prev = e;
    }
    out.push(BinSpec {
        label: format!(">{prev}"),
        lower: Some(prev),
        upper: None,
    });
    out
}

fn bin_index(w: f64, edges: &[f64]) -> usize {
    if w <= 0.0 {
        return 0;
    }
    edges.iter().position(|&e| w <= e).map_or(edges.len() + 1, |i| i + 1)
}

fn metric_names(group: &[&EvalRecord]) -> Vec<&'static str> {
    let mut names = Vec::new();
    if group.iter().any(|r| r.f1.is_some()) {
        names.extend(["f1", "em"]);
    }
    if group.iter().any(|r| r.correct.is_some()) {
        names.push("accuracy");
    }
    if group.iter().any(|r| r.options_per_word.is_some()) {
        names.push("options_per_word");
    }
    names
}

fn metric_of(r: &EvalRecord, name: &str) -> Option<f64> {
    match name {
        "f1" => r.f1,
        "em" => r.em.map(f64::from),
        "accuracy" => r.correct.map(|c| f64::from(u8::from(c))),
        "options_per_word" => r.options_per_word,
        _ => None,
    }
}

fn row(
    grouping: &str,
    key: (TranscriptSource, u8),
    spec: &BinSpec,
    members: &[&EvalRecord],
    names: &[&str],
) -> BinRow {
    BinRow {
        grouping: grouping.to_string(),
        source: key.0,
        shots: key.1,
        bin: spec.label.clone(),
        lower: spec.lower,
        upper: spec.upper,
        count: members.len(),
        metrics: names
            .iter()
            .map(|&n| {
                let vals: Vec<f64> = members.iter().filter_map(|r| metric_of(r, n)).collect();
                MetricValue {
                    metric: n.to_string(),
                    value: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                }
            })
            .collect(),
    }
}

/// Per (source, shots): one row per WER bin, then the two-way split into
/// examples whose spoken input was recognized without errors and the rest.
/// Records with no known WER go to an extra `unknown` row in each grouping.
pub fn wer_bin_report(records: &[EvalRecord], edges: &[f64]) -> Result<WerBinReport, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyRecords);
    }
    let valid = edges.iter().all(|e| e.is_finite() && *e > 0.0) && edges.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(ReportError::BadEdges(edges.to_vec()));
    }
    let mut keys: Vec<(TranscriptSource, u8)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.source, r.shots)) {
            keys.push((r.source, r.shots));
        }
    }
    let specs = bin_specs(edges);
    let unknown = BinSpec {
        label: UNKNOWN.into(),
        lower: None,
        upper: None,
    };
    let mut rows = Vec::new();
    for key in keys {
        let group: Vec<&EvalRecord> = records
            .iter()
            .filter(|r| (r.source, r.shots) == key)
            .collect();
        let names = metric_names(&group);
        let missing: Vec<&EvalRecord> = group
            .iter()
            .copied()
            .filter(|r| r.binning_wer().is_none())
            .collect();

        for (i, spec) in specs.iter().enumerate() {
            let members: Vec<&EvalRecord> = group
                .iter()
                .copied()
                .filter(|r| r.binning_wer().is_some_and(|w| bin_index(w, edges) == i))
                .collect();
            rows.push(row(GROUP_WER_BIN, key, spec, &members, &names));
        }
        if !missing.is_empty() {
            rows.push(row(GROUP_WER_BIN, key, &unknown, &missing, &names));
        }

        let split = [
            (WITHOUT_ERRORS, Some(0.0), Some(0.0), true),
            (WITH_ERRORS, Some(0.0), None, false),
        ];
        for (label, lower, upper, clean) in split {
            let members: Vec<&EvalRecord> = group
                .iter()
                .copied()
                .filter(|r| r.binning_wer().is_some_and(|w| (w <= 0.0) == clean))
                .collect();
            let spec = BinSpec {
                label: label.into(),
                lower,
                upper,
            };
            rows.push(row(GROUP_SPLIT, key, &spec, &members, &names));
        }
        if !missing.is_empty() {
            rows.push(row(GROUP_SPLIT, key, &unknown, &missing, &names));
        }
    }
    Ok(WerBinReport {
        edges: edges.to_vec(),
        rows,
    })
}

impl WerBinReport {
    /// One line per (row, metric); a row without metrics still gets a
    /// `count` line so empty bins stay visible.
    pub fn to_long_csv(&self) -> String {
        let mut lines = Vec::new();
        for r in &self.rows {
            let base = [
                r.grouping.clone(),
                r.source.to_string(),
                r.shots.to_string(),
                r.bin.clone(),
                cell(r.lower),
                cell(r.upper),
                r.count.to_string(),
            ];
            lines.push(
                base.iter()
                    .cloned()
                    .chain(["count".to_string(), cell(Some(r.count as f64))])
                    .collect(),
            );
            for m in &r.metrics {
                lines.push(
                    base.iter()
                        .cloned()
                        .chain([m.metric.clone(), cell(m.value)])
                        .collect(),
                );
            }
        }
        csv_text(&LONG_COLUMNS, &lines)
    }

    pub fn rows_for<'a>(&'a self, grouping: &'a str) -> impl Iterator<Item = &'a BinRow> + 'a {
        self.rows.iter().filter(move |r| r.grouping == grouping)
    }

    /// Writes `wer_bins.json` and `wer_bins.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        write(&dir.join("wer_bins.json"), &json)?;
        write(&dir.join("wer_bins.csv"), &self.to_long_csv())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io(path))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}
