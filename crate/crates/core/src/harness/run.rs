//! Evaluation matrix: every example under every transcript source, zero- or
//! one-shot, scored against the gold answers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{Dataset, Example, TaskKind};
use crate::config::{Config, ConfigError};
use crate::confnet::OptionOrder;
use crate::lattice::{best_path, Scales};
use crate::llm::{prompt_hash, CompletionRequest, LlmClient, LlmError};
use crate::metrics::{
    best_over_golds, match_intent, transcript_tokens, wer, AnswerNormalization, IntentMatch,
    IntentMatching, MetricsError,
};
use crate::prompting::{
    build_prompt, render_transcript_detailed, InContextExample, PromptError, PromptSpec,
    PromptTemplates, RenderSettings, RenderedTranscript, Task, TranscriptInputs, TranscriptSource,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no transcript sources given")]
    NoSources,
    #[error("shots must be 0 or 1, got {0}")]
    BadShots(u8),
    #[error("in-context pool has no usable example")]
    EmptyPool,
    #[error("in-context pool is for {pool} but the evaluation task is {eval}")]
    PoolTask { pool: TaskKind, eval: TaskKind },
}

/// Why a single record failed.
#[derive(Debug, Error)]
enum RecordError {
    #[error("render: {0}")]
    Prompt(#[from] PromptError),
    #[error("backend: {0}")]
    Llm(#[from] LlmError),
    #[error("scoring: {0}")]
    Metrics(#[from] MetricsError),
}

impl RecordError {
    fn kind(&self) -> ErrorKind {
        match self {
            RecordError::Prompt(_) => ErrorKind::Render,
            RecordError::Llm(_) => ErrorKind::Backend,
            RecordError::Metrics(_) => ErrorKind::Scoring,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Render,
    Backend,
    Scoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub source: TranscriptSource,
    pub shots: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icl_example_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icl_source: Option<TranscriptSource>,
    pub rendered_input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// WER of the rendered input against the gold transcript, in percent.
    pub question_wer: Option<f64>,
    /// WER of the lattice's best path, the same for every source.
    pub one_best_wer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options_per_word: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
}

impl EvalRecord {
    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }

    /// WER used for binning: the ASR error rate of the spoken input.
    pub fn binning_wer(&self) -> Option<f64> {
        self.one_best_wer.or(self.question_wer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub sources: Vec<TranscriptSource>,
    /// Each entry is 0 or 1; the matrix is run once per entry.
    pub shots: Vec<u8>,
    /// Explain the separator in zero-shot WCN prompts.
    pub wcn_instruction: bool,
    /// One-shot WCN prompts always carry the separator explanation.
    pub force_instruction_one_shot: bool,
    /// Render in-context examples with this source instead of the test one.
    pub icl_source_override: Option<TranscriptSource>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            sources: Vec::new(),
            shots: vec![0],
            wcn_instruction: false,
            force_instruction_one_shot: true,
            icl_source_override: None,
            seed: 0,
        }
    }
}

/// Everything besides the data that a run depends on.
#[derive(Debug, Clone)]
pub struct RunEnv {
    pub templates: PromptTemplates,
    pub settings: RenderSettings,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub append_question_mark: bool,
    pub normalization: AnswerNormalization,
    pub intent_matching: IntentMatching,
}

impl Default for RunEnv {
    fn default() -> Self {
        RunEnv {
            templates: PromptTemplates::default(),
            settings: RenderSettings::default(),
            model_id: "mock".into(),
            max_tokens: 32,
            temperature: 0.0,
            append_question_mark: true,
            normalization: AnswerNormalization::default(),
            intent_matching: IntentMatching::default(),
        }
    }
}

impl RunEnv {
    pub fn from_config(cfg: &Config) -> Result<Self, ConfigError> {
        Ok(RunEnv {
            templates: cfg.templates()?,
            settings: cfg.render_settings(),
            model_id: cfg.backend.model_id.clone(),
            max_tokens: cfg.backend.max_tokens,
            temperature: cfg.backend.temperature,
            append_question_mark: cfg.prompt.append_question_mark,
            normalization: cfg.metrics.normalization,
            intent_matching: cfg.metrics.intent_matching,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: TranscriptSource,
    pub shots: u8,
    pub n: usize,
    pub errored: usize,
    pub f1: Option<f64>,
    pub em: Option<f64>,
    pub accuracy: Option<f64>,
    pub question_wer: Option<f64>,
    pub options_per_word: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub task: TaskKind,
    pub dataset_size: usize,
    pub sources: Vec<TranscriptSource>,
    pub shots: Vec<u8>,
    pub seed: u64,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub template_digest: String,
    pub wcn_instruction: bool,
    pub force_instruction_one_shot: bool,
    pub icl_source_override: Option<TranscriptSource>,
    pub icl_pool_size: usize,
    /// Filtered bins keep their original posteriors.
    pub posterior_renormalized: bool,
    pub option_order: OptionOrder,
    pub scales: Scales,
    pub nbest_k: usize,
    pub append_question_mark: bool,
    pub normalization: AnswerNormalization,
    pub intent_matching: IntentMatching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metadata: RunMetadata,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub records: Vec<EvalRecord>,
    pub summary: Summary,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per (source, shots) means, in order of first appearance.
pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(TranscriptSource, u8)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.source, r.shots)) {
            keys.push((r.source, r.shots));
        }
    }
    keys.into_iter()
        .map(|(source, shots)| {
            let group: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.source == source && r.shots == shots)
                .collect();
            SummaryRow {
                source,
                shots,
                n: group.len(),
                errored: group.iter().filter(|r| r.is_errored()).count(),
                f1: mean(group.iter().filter_map(|r| r.f1)),
                em: mean(group.iter().filter_map(|r| r.em.map(f64::from))),
                accuracy: mean(
                    group
                        .iter()
                        .filter_map(|r| r.correct.map(|c| f64::from(u8::from(c)))),
                ),
                question_wer: mean(group.iter().filter_map(|r| r.question_wer)),
                options_per_word: mean(group.iter().filter_map(|r| r.options_per_word)),
            }
        })
        .collect()
}

fn spoken_rendering(
    ex: &Example,
    source: TranscriptSource,
    env: &RunEnv,
) -> Result<RenderedTranscript, PromptError> {
    let inputs = TranscriptInputs {
        gold: Some(ex.spoken_gold()),
        lattice: ex.lattice(),
    };
    let mut r = render_transcript_detailed(inputs, source, &env.settings)?;
    if matches!(ex, Example::Sqa(_)) && env.append_question_mark && !r.text.ends_with('?') {
        r.text.push('?');
    }
    Ok(r)
}

/// First non-empty line of the completion, without an echoed cue.
fn extract_prediction(text: &str) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    ["Answer:", "Intent:"]
        .iter()
        .find_map(|cue| line.strip_prefix(cue))
        .unwrap_or(line)
        .trim()
        .to_string()
}

struct Job {
    example: usize,
    source: usize,
    shots: u8,
    icl: Option<usize>,
}

struct Runner<'a> {
    data: &'a Dataset,
    pool: &'a Dataset,
    opts: &'a EvalOptions,
    env: &'a RunEnv,
    client: &'a LlmClient,
    one_best_wer: Vec<Option<f64>>,
}

impl Runner<'_> {
    fn evaluate(&self, job: &Job) -> EvalRecord {
        let ex = &self.data.examples[job.example];
        let source = self.opts.sources[job.source];
        let icl_source = job.icl.map(|_| self.opts.icl_source_override.unwrap_or(source));
        let mut rec = EvalRecord {
            id: ex.id().to_string(),
            source,
            shots: job.shots,
            icl_example_id: job.icl.map(|i| self.pool.examples[i].id().to_string()),
            icl_source: icl_source.filter(|s| *s != source),
            rendered_input: String::new(),
            prompt_sha256: None,
            prediction: String::new(),
            f1: None,
            em: None,
            predicted_label: None,
            correct: None,
            question_wer: None,
            one_best_wer: self.one_best_wer[job.example],
            options_per_word: None,
            error: None,
            error_kind: None,
        };
        if let Err(e) = self.fill(job, icl_source, &mut rec) {
            rec.error = Some(e.to_string());
            rec.error_kind = Some(e.kind());
            match ex {
                Example::Sqa(_) => {
                    rec.f1 = Some(0.0);
                    rec.em = Some(0);
                }
                Example::Ic(_) => rec.correct = Some(false),
            }
        }
        rec
    }

    fn fill(
        &self,
        job: &Job,
        icl_source: Option<TranscriptSource>,
        rec: &mut EvalRecord,
    ) -> Result<(), RecordError> {
        let ex = &self.data.examples[job.example];
        let rendered = spoken_rendering(ex, rec.source, self.env)?;
        rec.rendered_input = rendered.text.clone();
        rec.options_per_word = rendered.options_per_word;
        rec.question_wer = wer(&rendered.words, &transcript_tokens(ex.spoken_gold())).ok();

        let example = match (job.icl, icl_source) {
            (Some(i), Some(src)) => {
                let demo = &self.pool.examples[i];
                Some(InContextExample {
                    context: match demo {
                        Example::Sqa(s) => Some(s.context.clone()),
                        Example::Ic(_) => None,
                    },
                    input: spoken_rendering(demo, src, self.env)?.text,
                    answer: demo.demo_answer().to_string(),
                    source: src,
                })
            }
            _ => None,
        };
        let explain = self.opts.wcn_instruction
            || (job.shots == 1 && self.opts.force_instruction_one_shot);
        let spec = PromptSpec {
            task: match ex {
                Example::Sqa(s) => Task::Sqa {
                    context: s.context.clone(),
                },
                Example::Ic(_) => Task::IntentClassification {
                    labels: self.data.labels.clone(),
                },
            },
            wcn_instruction: rec.source.separator().filter(|_| explain),
            icl_source_override: example.is_some() && self.opts.icl_source_override.is_some(),
            example,
            test_input: rendered.text,
            test_source: rec.source,
        };
        let prompt = build_prompt(&spec, &self.env.templates)?;
        rec.prompt_sha256 = Some(prompt_hash(&prompt));
        let request = CompletionRequest {
            prompt,
            max_tokens: self.env.max_tokens,
            temperature: self.env.temperature,
            model_id: self.env.model_id.clone(),
        };
        let completion = self.client.complete(&request)?;
        rec.prediction = extract_prediction(&completion.text);

        match ex {
            Example::Sqa(s) => {
                let (f1, em) = best_over_golds(&rec.prediction, &s.answers, self.env.normalization);
                rec.f1 = Some(f1);
                rec.em = Some(em);
            }
            Example::Ic(c) => {
                let m = match_intent(&rec.prediction, &self.data.labels, self.env.intent_matching)?;
                let correct = matches!(&m, IntentMatch::Label(l) if *l == c.intent);
                rec.predicted_label = match m {
                    IntentMatch::Label(l) => Some(l),
                    IntentMatch::Unmatched => None,
                };
                rec.correct = Some(correct);
            }
        }
        Ok(())
    }
}

/// Runs the matrix. `pool` supplies in-context examples; without it they
/// are drawn from `data`, never using the test example itself.
pub fn run_eval(
    data: &Dataset,
    pool: Option<&Dataset>,
    opts: &EvalOptions,
    env: &RunEnv,
    client: &LlmClient,
) -> Result<EvalOutput, EvalError> {
    if opts.sources.is_empty() {
        return Err(EvalError::NoSources);
    }
    if let Some(&s) = opts.shots.iter().find(|&&s| s > 1) {
        return Err(EvalError::BadShots(s));
    }
    let pool = pool.unwrap_or(data);
    if pool.task != data.task {
        return Err(EvalError::PoolTask {
            pool: pool.task,
            eval: data.task,
        });
    }

    // one draw per example, shared by every source so the sources stay comparable
    let picks: Vec<Option<usize>> = if opts.shots.contains(&1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        data.examples
            .iter()
            .map(|ex| {
                let candidates: Vec<usize> = (0..pool.len())
                    .filter(|&i| pool.examples[i].id() != ex.id())
                    .collect();
                if candidates.is_empty() {
                    return Err(EvalError::EmptyPool);
                }
                let k = rng.gen_range(0..candidates.len() as u64) as usize;
                Ok(Some(candidates[k]))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; data.len()]
    };

    let one_best_wer = data
        .examples
        .iter()
        .map(|ex| {
            let best = best_path(ex.lattice()?, env.settings.scales).ok()?;
            wer(&best.words, &transcript_tokens(ex.spoken_gold())).ok()
        })
        .collect();

    let mut jobs = Vec::new();
    for &shots in &opts.shots {
        for (example, &pick) in picks.iter().enumerate() {
            for source in 0..opts.sources.len() {
                jobs.push(Job {
                    example,
                    source,
                    shots,
                    icl: if shots == 1 { pick } else { None },
                });
            }
        }
    }

    let runner = Runner {
        data,
        pool,
        opts,
        env,
        client,
        one_best_wer,
    };
    let slots: Mutex<Vec<Option<EvalRecord>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = client.in_flight_limit().min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let rec = runner.evaluate(job);
                slots.lock().expect("record slots")[i] = Some(rec);
            });
        }
    });
    let mut keyed: Vec<(u8, String, usize, EvalRecord)> = jobs
        .iter()
        .zip(slots.into_inner().expect("record slots"))
        .map(|(job, rec)| {
            let rec = rec.expect("every job yields a record");
            (job.shots, rec.id.clone(), job.source, rec)
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, &a.1, a.2).cmp(&(b.0, &b.1, b.2)));
    let records: Vec<EvalRecord> = keyed.into_iter().map(|(.., r)| r).collect();

    let metadata = RunMetadata {
        task: data.task,
        dataset_size: data.len(),
        sources: opts.sources.clone(),
        shots: opts.shots.clone(),
        seed: opts.seed,
        model_id: env.model_id.clone(),
        max_tokens: env.max_tokens,
        temperature: env.temperature,
        template_digest: env.templates.digest().to_string(),
        wcn_instruction: opts.wcn_instruction,
        force_instruction_one_shot: opts.force_instruction_one_shot,
        icl_source_override: opts.icl_source_override,
        icl_pool_size: pool.len(),
        posterior_renormalized: false,
        option_order: env.settings.order,
        scales: env.settings.scales,
        nbest_k: env.settings.nbest_k,
        append_question_mark: env.append_question_mark,
        normalization: env.normalization,
        intent_matching: env.intent_matching,
    };
    Ok(EvalOutput {
        summary: Summary {
            metadata,
            rows: summarize(&records),
        },
        records,
    })
}

/// Counts records that failed, by kind.
pub fn error_counts(records: &[EvalRecord]) -> HashMap<ErrorKind, usize> {
    let mut out = HashMap::new();
    for k in records.iter().filter_map(|r| r.error_kind) {
        *out.entry(k).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confnet::Separator;
    use crate::harness::dataset::parse_dataset;
    use crate::llm::{MockBackend, MockFallback};
    use std::path::Path;

    fn sqa_data() -> Dataset {
        let slf = "N=4 L=4\\nI=0\\nI=1\\nI=2\\nI=3\\nJ=0 S=0 E=1 W=who a=0 l=0\\nJ=1 S=1 E=2 W=one a=-0.2 l=0\\nJ=2 S=1 E=2 W=won a=-1.8 l=0\\nJ=3 S=2 E=3 W=it a=0 l=0\\n";
        let lines: Vec<String> = ["a", "b", "c"]
            .iter()
            .map(|id| {
                format!(
                    r#"{{"id":"{id}","context":"Denver won the game.","question":"who won it","answers":["Denver"],"lattice_slf":"{slf}"}}"#
                )
            })
            .collect();
        parse_dataset(&lines.join("\n"), TaskKind::Sqa, Path::new("."), None).unwrap()
    }

    fn sources() -> Vec<TranscriptSource> {
        vec![
            TranscriptSource::GroundTruth,
            TranscriptSource::OneBest,
            TranscriptSource::NBestOracle,
            TranscriptSource::Wcn {
                separator: Separator::Pipe,
                threshold: 0.0,
            },
        ]
    }

    #[test]
    fn mock_returning_gold_scores_full_marks() {
        let data = sqa_data();
        let client = LlmClient::new(Box::new(MockBackend::new(MockFallback::Fixed("Denver".into()))), 2);
        let opts = EvalOptions {
            sources: sources(),
            ..EvalOptions::default()
        };
        let out = run_eval(&data, None, &opts, &RunEnv::default(), &client).unwrap();
        assert_eq!(out.records.len(), 12);
        assert!(out.records.iter().all(|r| r.f1 == Some(1.0) && r.em == Some(1)));
        let ids: Vec<(&str, String)> = out.records.iter().map(|r| (r.id.as_str(), r.source.to_string())).collect();
        assert_eq!(ids[0], ("a", "ground-truth".to_string()));
        assert_eq!(ids[3], ("a", "wcn[|]".to_string()));
        assert_eq!(ids[4].0, "b");
        let gt = &out.summary.rows[0];
        assert_eq!(gt.question_wer, Some(0.0));
        let one_best = &out.summary.rows[1];
        assert!((one_best.question_wer.unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(out.summary.rows[2].question_wer, Some(0.0));
        assert_eq!(out.records[3].rendered_input, "who one|won it?");
    }

    #[test]
    fn one_shot_with_ground_truth_demonstration() {
        let data = sqa_data();
        let client = LlmClient::new(Box::new(MockBackend::new(MockFallback::Lexical)), 1);
        let opts = EvalOptions {
            sources: vec![sources()[3]],
            shots: vec![1],
            icl_source_override: Some(TranscriptSource::GroundTruth),
            seed: 7,
            ..EvalOptions::default()
        };
        let out = run_eval(&data, None, &opts, &RunEnv::default(), &client).unwrap();
        for r in &out.records {
            assert!(r.error.is_none(), "{r:?}");
            assert_ne!(r.icl_example_id.as_deref(), Some(r.id.as_str()));
            assert_eq!(r.icl_source, Some(TranscriptSource::GroundTruth));
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut data = sqa_data();
        if let Example::Sqa(s) = &mut data.examples[1] {
            s.lattice = None;
        }
        let client = LlmClient::new(Box::new(MockBackend::new(MockFallback::Fixed("x".into()))), 3);
        let opts = EvalOptions {
            sources: sources(),
            ..EvalOptions::default()
        };
        let out = run_eval(&data, None, &opts, &RunEnv::default(), &client).unwrap();
        assert_eq!(out.records.len(), 12);
        let bad: Vec<&EvalRecord> = out.records.iter().filter(|r| r.is_errored()).collect();
        assert_eq!(bad.len(), 3);
        assert!(bad.iter().all(|r| r.id == "b" && r.f1 == Some(0.0)));
        assert_eq!(error_counts(&out.records)[&ErrorKind::Render], 3);
    }

    #[test]
    fn prediction_extraction() {
        assert_eq!(extract_prediction("\n  Answer: Denver Broncos\nmore"), "Denver Broncos");
        assert_eq!(extract_prediction(" flight "), "flight");
        assert_eq!(extract_prediction(""), "");
    }

    #[test]
    fn bad_options() {
        let data = sqa_data();
        let client = LlmClient::new(Box::new(MockBackend::new(MockFallback::Lexical)), 1);
        let env = RunEnv::default();
        assert_eq!(
            run_eval(&data, None, &EvalOptions::default(), &env, &client).unwrap_err(),
            EvalError::NoSources
        );
        let opts = EvalOptions {
            sources: sources(),
            shots: vec![2],
            ..EvalOptions::default()
        };
        assert_eq!(run_eval(&data, None, &opts, &env, &client).unwrap_err(), EvalError::BadShots(2));
    }
}
