//! JSON-lines datasets for spoken QA and intent classification.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{parse_lattice, Lattice, LatticeError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("example {id}: {source}")]
    Lattice { id: String, source: LatticeError },
    #[error("example {id}: {path}: {source}")]
    LatticeFile {
        id: String,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sqa,
    Ic,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Sqa => "sqa",
            TaskKind::Ic => "ic",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqa" => Ok(TaskKind::Sqa),
            "ic" => Ok(TaskKind::Ic),
            other => Err(format!("unknown task {other:?} (expected sqa or ic)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SqaExample {
    pub id: String,
    pub context: String,
    pub question_gold: String,
    pub answers: Vec<String>,
    pub lattice: Option<Lattice>,
}

#[derive(Debug, Clone)]
pub struct IcExample {
    pub id: String,
    pub command_gold: String,
    pub intent: String,
    pub lattice: Option<Lattice>,
}

#[derive(Debug, Clone)]
pub enum Example {
    Sqa(SqaExample),
    Ic(IcExample),
}

impl Example {
    pub fn id(&self) -> &str {
        match self {
            Example::Sqa(e) => &e.id,
            Example::Ic(e) => &e.id,
        }
    }

    /// The spoken part: the question or the command.
    pub fn spoken_gold(&self) -> &str {
        match self {
            Example::Sqa(e) => &e.question_gold,
            Example::Ic(e) => &e.command_gold,
        }
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        match self {
            Example::Sqa(e) => e.lattice.as_ref(),
            Example::Ic(e) => e.lattice.as_ref(),
        }
    }

    /// Answer shown when the example is used in context.
    pub fn demo_answer(&self) -> &str {
        match self {
            Example::Sqa(e) => e.answers.first().map(String::as_str).unwrap_or(""),
            Example::Ic(e) => &e.intent,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: TaskKind,
    pub examples: Vec<Example>,
    /// Sorted, unique intent labels; empty for SQA.
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SqaLine {
    id: String,
    context: String,
    #[serde(alias = "question_gold")]
    question: String,
    answers: Vec<String>,
    lattice: Option<String>,
    lattice_slf: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IcLine {
    id: String,
    #[serde(alias = "command_gold")]
    command: String,
    intent: String,
    lattice: Option<String>,
    lattice_slf: Option<String>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One label per line; blank lines and `#` comments are skipped. The result
/// is sorted and deduplicated.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>, DatasetError> {
    let set: BTreeSet<String> = read(path.as_ref())?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    Ok(set.into_iter().collect())
}

fn load_lattice(
    id: &str,
    file: Option<String>,
    inline: Option<String>,
    base: &Path,
    line: usize,
) -> Result<Option<Lattice>, DatasetError> {
    let text = match (file, inline) {
        (Some(_), Some(_)) => {
            return Err(DatasetError::Schema {
                line,
                reason: "give either lattice or lattice_slf, not both".into(),
            })
        }
        (Some(f), None) => {
            let p = base.join(f);
            std::fs::read_to_string(&p).map_err(|source| DatasetError::LatticeFile {
                id: id.to_string(),
                path: p.clone(),
                source,
            })?
        }
        (None, Some(s)) => s,
        (None, None) => return Ok(None),
    };
    parse_lattice(&text)
        .map(Some)
        .map_err(|source| DatasetError::Lattice {
            id: id.to_string(),
            source,
        })
}

/// Parses a dataset. Lattice paths are relative to `base`. For intent
/// classification, `labels` fixes the label set; without it the set is
/// collected from the data.
pub fn parse_dataset(
    text: &str,
    task: TaskKind,
    base: &Path,
    labels: Option<&[String]>,
) -> Result<Dataset, DatasetError> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema = |reason: String| DatasetError::Schema { line, reason };
        let ex = match task {
            TaskKind::Sqa => {
                let l: SqaLine = serde_json::from_str(raw).map_err(|e| schema(e.to_string()))?;
                if l.answers.iter().all(|a| a.trim().is_empty()) {
                    return Err(schema("at least one answer is required".into()));
                }
                let lattice = load_lattice(&l.id, l.lattice, l.lattice_slf, base, line)?;
                Example::Sqa(SqaExample {
                    id: l.id,
                    context: l.context,
                    question_gold: l.question,
                    answers: l.answers,
                    lattice,
                })
            }
            TaskKind::Ic => {
                let l: IcLine = serde_json::from_str(raw).map_err(|e| schema(e.to_string()))?;
                if let Some(set) = labels {
                    if !set.contains(&l.intent) {
                        return Err(schema(format!("intent {:?} is not in the label set", l.intent)));
                    }
                }
                let lattice = load_lattice(&l.id, l.lattice, l.lattice_slf, base, line)?;
                Example::Ic(IcExample {
                    id: l.id,
                    command_gold: l.command,
                    intent: l.intent,
                    lattice,
                })
            }
        };
        if ex.id().is_empty() {
            return Err(schema("empty id".into()));
        }
        if !seen.insert(ex.id().to_string()) {
            return Err(schema(format!("duplicate id {:?}", ex.id())));
        }
        examples.push(ex);
    }
    if examples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let labels = match task {
        TaskKind::Sqa => Vec::new(),
        TaskKind::Ic => match labels {
            Some(l) => l.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
            None => examples
                .iter()
                .filter_map(|e| match e {
                    Example::Ic(x) => Some(x.intent.clone()),
                    Example::Sqa(_) => None,
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        },
    };
    Ok(Dataset {
        task,
        examples,
        labels,
    })
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    task: TaskKind,
    labels: Option<&[String]>,
) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    parse_dataset(&read(path)?, task, base, labels)
}
