//! Prompt construction for spoken question answering and intent
//! classification, and rendering of transcripts from each source.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confnet::{self, ConfnetError, OptionOrder, Separator, WcnRenderOptions};
use crate::lattice::{best_path, nbest, Lattice, LatticeError, Scales};
use crate::metrics::{select_oracle, transcript_tokens, MetricsError};

pub const DEFAULT_TEMPLATES: &str = include_str!("../templates/default.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("intent labels must be unique and sorted alphabetically")]
    UnsortedLabels,
    #[error("in-context example uses {example} but the test input uses {test}")]
    SourceMismatch {
        example: TranscriptSource,
        test: TranscriptSource,
    },
    #[error("transcript source {0} needs a lattice")]
    MissingLattice(TranscriptSource),
    #[error("n-best oracle needs a reference transcript")]
    MissingReference,
    #[error("template: {0}")]
    Template(String),
    #[error("bad transcript source {0:?}")]
    BadSource(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Confnet(#[from] ConfnetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Which rendering of the spoken input goes into the prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TranscriptSource {
    GroundTruth,
    OneBest,
    NBestOracle,
    Wcn { separator: Separator, threshold: f64 },
}

impl TranscriptSource {
    pub fn wcn(separator: Separator, threshold: f64) -> Result<Self, PromptError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(PromptError::BadSource(format!("threshold {threshold}")));
        }
        Ok(TranscriptSource::Wcn {
            separator,
            threshold,
        })
    }

    pub fn separator(&self) -> Option<Separator> {
        match self {
            TranscriptSource::Wcn { separator, .. } => Some(*separator),
            _ => None,
        }
    }

    pub fn needs_lattice(&self) -> bool {
        !matches!(self, TranscriptSource::GroundTruth)
    }
}

impl fmt::Display for TranscriptSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranscriptSource::GroundTruth => f.write_str("ground-truth"),
            TranscriptSource::OneBest => f.write_str("one-best"),
            TranscriptSource::NBestOracle => f.write_str("nbest-oracle"),
            TranscriptSource::Wcn {
                separator,
                threshold,
            } => {
                if *threshold == 0.0 {
                    write!(f, "wcn[{separator}]")
                } else {
                    write!(f, "wcn[{separator},{threshold}]")
                }
            }
        }
    }
}

impl FromStr for TranscriptSource {
    type Err = PromptError;

    /// `ground-truth`, `one-best`, `nbest-oracle`, `wcn[|]`, `wcn[/,0.3]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PromptError::BadSource(s.to_string());
        match s.trim() {
            "ground-truth" | "gt" => Ok(TranscriptSource::GroundTruth),
            "one-best" | "1best" => Ok(TranscriptSource::OneBest),
            "nbest-oracle" | "oracle" => Ok(TranscriptSource::NBestOracle),
            other => {
                let inner = other
                    .strip_prefix("wcn[")
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(bad)?;
                let (sep, thr) = match inner.split_once(',') {
                    Some((s, t)) => (s, t.trim().parse::<f64>().map_err(|_| bad())?),
                    None => (inner, 0.0),
                };
                let separator = sep.trim().parse().map_err(|_| bad())?;
                TranscriptSource::wcn(separator, thr)
            }
        }
    }
}

impl Serialize for TranscriptSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TranscriptSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings shared by every transcript rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub scales: Scales,
    pub nbest_k: usize,
    pub order: OptionOrder,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            scales: Scales::default(),
            nbest_k: 10,
            order: OptionOrder::Lattice,
        }
    }
}

/// What a source needs to be rendered.
#[derive(Debug, Clone, Copy)]
pub struct TranscriptInputs<'a> {
    pub gold: Option<&'a str>,
    pub lattice: Option<&'a Lattice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTranscript {
    pub text: String,
    /// Single-hypothesis reading used for WER (top word per bin for WCNs).
    pub words: Vec<String>,
    pub options_per_word: Option<f64>,
}

pub fn render_transcript_detailed(
    inputs: TranscriptInputs<'_>,
    source: TranscriptSource,
    settings: &RenderSettings,
) -> Result<RenderedTranscript, PromptError> {
    let lattice = || inputs.lattice.ok_or(PromptError::MissingLattice(source));
    match source {
        TranscriptSource::GroundTruth => {
            let gold = inputs.gold.ok_or(PromptError::MissingReference)?.trim();
            Ok(RenderedTranscript {
                text: gold.to_string(),
                words: transcript_tokens(gold),
                options_per_word: None,
            })
        }
        TranscriptSource::OneBest => {
            let best = best_path(lattice()?, settings.scales)?;
            Ok(RenderedTranscript {
                text: best.text(),
                words: best.words,
                options_per_word: None,
            })
        }
        TranscriptSource::NBestOracle => {
            let lat = lattice()?;
            let gold = inputs.gold.ok_or(PromptError::MissingReference)?;
            let list = nbest(lat, settings.nbest_k, settings.scales, true)?;
            let oracle = select_oracle(&list, &transcript_tokens(gold))?;
            Ok(RenderedTranscript {
                text: oracle.text(),
                words: oracle.words.clone(),
                options_per_word: None,
            })
        }
        TranscriptSource::Wcn {
            separator,
            threshold,
        } => {
            let cn = confnet::filtered_wcn(lattice()?, settings.scales, threshold)?;
            let mut opts = WcnRenderOptions::new(separator, threshold)?;
            opts.order = settings.order;
            let text = confnet::flatten_wcn(&cn, &opts)?;
            Ok(RenderedTranscript {
                text,
                words: cn.top_words(),
                options_per_word: confnet::wcn_stats(&cn).ok().map(|s| s.options_per_word),
            })
        }
    }
}

pub fn render_transcript(
    inputs: TranscriptInputs<'_>,
    source: TranscriptSource,
    settings: &RenderSettings,
) -> Result<String, PromptError> {
    render_transcript_detailed(inputs, source, settings).map(|r| r.text)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Sqa { context: String },
    IntentClassification { labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InContextExample {
    /// SQA only: the example's own context paragraph.
    pub context: Option<String>,
    pub input: String,
    pub answer: String,
    pub source: TranscriptSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub task: Task,
    /// Separator to explain, when the instruction is included.
    pub wcn_instruction: Option<Separator>,
    pub example: Option<InContextExample>,
    pub test_input: String,
    pub test_source: TranscriptSource,
    /// Lets the in-context example use a different source than the test input.
    pub icl_source_override: bool,
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("wcn_instruction", &["separator"]),
    ("sqa", &["wcn_instruction", "example_block", "context", "question"]),
    ("sqa_example", &["context", "question", "answer"]),
    ("ic", &["labels", "wcn_instruction", "example_block", "command"]),
    ("ic_example", &["command", "intent"]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    sections: BTreeMap<String, String>,
    digest: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::parse(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

fn placeholders(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
                    out.push(name);
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

impl PromptTemplates {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let t = line.trim();
            if t.starts_with('[') && t.ends_with(']') && t.len() > 2 && !t.contains(' ') {
                let name = t[1..t.len() - 1].to_string();
                if sections.contains_key(&name) {
                    return Err(PromptError::Template(format!("duplicate section [{name}]")));
                }
                sections.insert(name.clone(), Vec::new());
                current = Some(name);
                continue;
            }
            match &current {
                Some(name) => sections.get_mut(name).expect("inserted").push(line),
                None if t.is_empty() || t.starts_with('#') => {}
                None => {
                    return Err(PromptError::Template(format!(
                        "text before the first section: {t:?}"
                    )))
                }
            }
        }
        let mut out = BTreeMap::new();
        for (name, allowed) in SECTIONS {
            let lines = sections
                .remove(name)
                .ok_or_else(|| PromptError::Template(format!("missing section [{name}]")))?;
            let body = lines.join("\n").trim_matches('\n').to_string();
            for p in placeholders(&body) {
                if !allowed.contains(&p) {
                    return Err(PromptError::Template(format!(
                        "unknown placeholder {{{p}}} in [{name}]"
                    )));
                }
            }
            out.insert(name.to_string(), body);
        }
        if let Some(extra) = sections.keys().next() {
            return Err(PromptError::Template(format!("unknown section [{extra}]")));
        }
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(PromptTemplates {
            sections: out,
            digest,
        })
    }

    /// SHA-256 of the template source, recorded in run metadata.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn section(&self, name: &str) -> &str {
        &self.sections[name]
    }
}

/// Expands `{name}` placeholders. A line holding only a placeholder that
/// expands to the empty string is dropped.
fn expand(body: &str, values: &[(&str, &str)]) -> String {
    let lookup = |name: &str| values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
    let mut lines = Vec::new();
    for line in body.split('\n') {
        let t = line.trim();
        if t.len() > 2 && t.starts_with('{') && t.ends_with('}') {
            if let Some("") = lookup(&t[1..t.len() - 1]) {
                continue;
            }
        }
        let mut out = String::with_capacity(line.len());
        let mut rest = line;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}').and_then(|c| lookup(&after[..c]).map(|v| (c, v))) {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        lines.push(out);
    }
    lines.join("\n")
}

pub fn wcn_instruction_text(separator: Separator, templates: &PromptTemplates) -> String {
    let sep = separator.as_char().to_string();
    expand(templates.section("wcn_instruction"), &[("separator", &sep)])
}

fn check_labels(labels: &[String]) -> Result<(), PromptError> {
    if labels.is_empty() || labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PromptError::UnsortedLabels);
    }
    Ok(())
}

pub fn build_prompt(spec: &PromptSpec, templates: &PromptTemplates) -> Result<String, PromptError> {
    if let Some(ex) = &spec.example {
        if ex.source != spec.test_source && !spec.icl_source_override {
            return Err(PromptError::SourceMismatch {
                example: ex.source,
                test: spec.test_source,
            });
        }
    }
    let instruction = spec
        .wcn_instruction
        .map(|s| wcn_instruction_text(s, templates))
        .unwrap_or_default();
    match &spec.task {
        Task::Sqa { context } => {
            let example_block = match &spec.example {
                Some(ex) => {
                    let block = expand(
                        templates.section("sqa_example"),
                        &[
                            ("context", ex.context.as_deref().unwrap_or("")),
                            ("question", &ex.input),
                            ("answer", &ex.answer),
                        ],
                    );
                    block + "\n"
                }
                None => String::new(),
            };
            Ok(expand(
                templates.section("sqa"),
                &[
                    ("wcn_instruction", &instruction),
                    ("example_block", &example_block),
                    ("context", context),
                    ("question", &spec.test_input),
                ],
            ))
        }
        Task::IntentClassification { labels } => {
            check_labels(labels)?;
            let example_block = match &spec.example {
                Some(ex) => {
                    expand(
                        templates.section("ic_example"),
                        &[("command", &ex.input), ("intent", &ex.answer)],
                    ) + "\n"
                }
                None => String::new(),
            };
            let label_list = labels.join(", ");
            Ok(expand(
                templates.section("ic"),
                &[
                    ("labels", &label_list),
                    ("wcn_instruction", &instruction),
                    ("example_block", &example_block),
                    ("command", &spec.test_input),
                ],
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqa_spec(source: TranscriptSource, instr: Option<Separator>, example: Option<InContextExample>) -> PromptSpec {
        PromptSpec {
            task: Task::Sqa {
                context: "Denver gained 517 total yards.".into(),
            },
            wcn_instruction: instr,
            example,
            test_input: "how many total yards did denver game|gain?".into(),
            test_source: source,
            icl_source_override: false,
        }
    }

    #[test]
    fn source_round_trip() {
        for s in ["ground-truth", "one-best", "nbest-oracle", "wcn[|]", "wcn[/,0.3]"] {
            let src: TranscriptSource = s.parse().unwrap();
            assert_eq!(src.to_string(), s);
        }
        assert!("wcn[x]".parse::<TranscriptSource>().is_err());
        assert!("wcn[|,1.5]".parse::<TranscriptSource>().is_err());
        assert!("n-best".parse::<TranscriptSource>().is_err());
    }

    #[test]
    fn instruction_differs_only_at_separator() {
        let t = PromptTemplates::default();
        let pipe = wcn_instruction_text(Separator::Pipe, &t);
        let slash = wcn_instruction_text(Separator::Slash, &t);
        assert_eq!(pipe.len(), slash.len());
        assert!(pipe.contains("game|gain"));
        let diffs: Vec<(char, char)> = pipe
            .chars()
            .zip(slash.chars())
            .filter(|(a, b)| a != b)
            .collect();
        assert!(!diffs.is_empty());
        assert!(diffs.iter().all(|&d| d == ('|', '/')));
        assert_eq!(pipe, wcn_instruction_text(Separator::Pipe, &t));
    }

    #[test]
    fn zero_shot_sqa_layout() {
        let t = PromptTemplates::default();
        let mut spec = sqa_spec(TranscriptSource::GroundTruth, None, None);
        spec.test_input = "how many total yards did denver gain?".into();
        let p = build_prompt(&spec, &t).unwrap();
        assert_eq!(
            p,
            "Answer the question using a short span of words copied from the context.\n\
             Context: Denver gained 517 total yards.\n\
             Question: how many total yards did denver gain?\n\
             Answer:"
        );
    }

    #[test]
    fn one_shot_wcn_contains_instruction_and_example() {
        let t = PromptTemplates::default();
        let src = TranscriptSource::wcn(Separator::Pipe, 0.3).unwrap();
        let ex = InContextExample {
            context: Some("Teachers do not teach by rote.".into()),
            input: "what do these teachers knocked|knock do?".into(),
            answer: "teach by rote".into(),
            source: src,
        };
        let p = build_prompt(&sqa_spec(src, Some(Separator::Pipe), Some(ex)), &t).unwrap();
        let instr = wcn_instruction_text(Separator::Pipe, &t);
        let i_instr = p.find(&instr).unwrap();
        let i_example = p.find("Answer: teach by rote").unwrap();
        let i_test = p.find("Question: how many").unwrap();
        assert!(i_instr < i_example && i_example < i_test);
        assert_eq!(p.matches("Answer: ").count(), 1);
        assert!(p.ends_with("Answer:"));
    }

    #[test]
    fn mismatched_example_source_needs_override() {
        let t = PromptTemplates::default();
        let src = TranscriptSource::wcn(Separator::Pipe, 0.3).unwrap();
        let ex = InContextExample {
            context: Some("c".into()),
            input: "q".into(),
            answer: "a".into(),
            source: TranscriptSource::GroundTruth,
        };
        let mut spec = sqa_spec(src, Some(Separator::Pipe), Some(ex));
        assert!(matches!(
            build_prompt(&spec, &t),
            Err(PromptError::SourceMismatch { .. })
        ));
        spec.icl_source_override = true;
        assert!(build_prompt(&spec, &t).is_ok());
    }

    #[test]
    fn ic_labels_listed_alphabetically() {
        let t = PromptTemplates::default();
        let labels: Vec<String> = ["abbreviation", "airfare", "flight"].map(String::from).to_vec();
        let spec = PromptSpec {
            task: Task::IntentClassification { labels },
            wcn_instruction: None,
            example: None,
            test_input: "show me flights to boston".into(),
            test_source: TranscriptSource::OneBest,
            icl_source_override: false,
        };
        let p = build_prompt(&spec, &t).unwrap();
        assert!(p.contains("list: abbreviation, airfare, flight."));
        assert!(p.ends_with("Command: show me flights to boston\nIntent:"));

        let mut bad = spec.clone();
        bad.task = Task::IntentClassification {
            labels: vec!["flight".into(), "airfare".into()],
        };
        assert_eq!(build_prompt(&bad, &t).unwrap_err(), PromptError::UnsortedLabels);
    }

    #[test]
    fn templates_are_free_of_separators() {
        let t = PromptTemplates::default();
        for (name, _) in SECTIONS {
            let body = t.section(name);
            assert!(!body.contains('|') && !body.contains('/'), "[{name}]");
        }
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplates::parse("[sqa]\nx\n"),
            Err(PromptError::Template(_))
        ));
        let bad = DEFAULT_TEMPLATES.replace("Context: {context}\nQuestion: {question}\nAnswer:", "{bogus}");
        assert!(matches!(PromptTemplates::parse(&bad), Err(PromptError::Template(_))));
    }

    #[test]
    fn values_are_not_re_expanded() {
        assert_eq!(expand("Q: {question}", &[("question", "{context}")]), "Q: {context}");
    }

    #[test]
    fn wcn_on_single_path_equals_one_best() {
        let lat = Lattice::linear(&["who", "did", "denver", "beat"]).unwrap();
        let inputs = TranscriptInputs {
            gold: None,
            lattice: Some(&lat),
        };
        let s = RenderSettings::default();
        let wcn = render_transcript(inputs, TranscriptSource::wcn(Separator::Pipe, 0.3).unwrap(), &s).unwrap();
        let one = render_transcript(inputs, TranscriptSource::OneBest, &s).unwrap();
        assert_eq!(wcn, one);
        assert_eq!(
            render_transcript(
                TranscriptInputs {
                    gold: None,
                    lattice: None
                },
                TranscriptSource::OneBest,
                &s
            )
            .unwrap_err(),
            PromptError::MissingLattice(TranscriptSource::OneBest)
        );
        assert_eq!(
            render_transcript(inputs, TranscriptSource::NBestOracle, &s).unwrap_err(),
            PromptError::MissingReference
        );
    }
}
