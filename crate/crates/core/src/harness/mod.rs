//! Evaluation harness: dataset loading, the run matrix, and reports.

pub mod dataset;
pub mod report;
pub mod run;

pub use dataset::{load_dataset, load_labels, parse_dataset, Dataset, DatasetError, Example, IcExample, SqaExample, TaskKind};
pub use report::{emit_report, load_records, load_summary, wer_bin_report, BinRow, ReportError, WerBinReport, DEFAULT_BIN_EDGES};
pub use run::{run_eval, summarize, ErrorKind, EvalError, EvalOptions, EvalOutput, EvalRecord, RunEnv, RunMetadata, Summary, SummaryRow};
