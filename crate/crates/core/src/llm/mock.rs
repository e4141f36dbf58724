//! Deterministic offline backend.
//!
//! Responses are looked up by the SHA-256 of the prompt. Unknown prompts get
//! the configured fallback; [`MockFallback::Lexical`] answers from the prompt
//! text itself with a word-overlap heuristic so that end-to-end runs produce
//! non-trivial, transcript-dependent predictions.

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use super::{CompletionBackend, CompletionRequest, CompletionResult, LlmError};

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockFallback {
    Fixed(String),
    Error,
    Lexical,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    responses: HashMap<String, String>,
    fallback: MockFallback,
}

impl MockBackend {
    pub fn new(fallback: MockFallback) -> Self {
        MockBackend {
            responses: HashMap::new(),
            fallback,
        }
    }

    /// Registers a response for the prompt whose hash is `hash`.
    pub fn with_response(mut self, hash: impl Into<String>, text: impl Into<String>) -> Self {
        self.responses.insert(hash.into(), text.into());
        self
    }

    pub fn with_responses(mut self, map: HashMap<String, String>) -> Self {
        self.responses.extend(map);
        self
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let text = match self.responses.get(&prompt_hash(&req.prompt)) {
            Some(t) => t.clone(),
            None => match &self.fallback {
                MockFallback::Fixed(t) => t.clone(),
                MockFallback::Error => {
                    return Err(LlmError::BackendUnavailable("mock has no response".into()))
                }
                MockFallback::Lexical => lexical_answer(&req.prompt),
            },
        };
        Ok(CompletionResult {
            text,
            latency_ms: 0,
            from_cache: false,
        })
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "to", "is", "was", "were", "did", "do", "does", "what",
    "which", "who", "whom", "when", "where", "why", "how", "many", "much", "by", "for", "and",
    "or", "with", "from", "at", "as", "that", "this", "it", "its", "be", "are", "me", "i", "show",
    "please", "want", "list",
];

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '|' || c == '/')
        .map(|t| {
            t.chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn last_field<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

fn lexical_answer(prompt: &str) -> String {
    if let Some(command) = last_field(prompt, "Command:") {
        return lexical_intent(prompt, command);
    }
    let (Some(context), Some(question)) = (
        last_field(prompt, "Context:"),
        last_field(prompt, "Question:"),
    ) else {
        return String::new();
    };
    let qset: BTreeSet<String> = tokens(question)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect();
    let mut best: Option<(usize, Vec<&str>)> = None;
    for sentence in context.split_inclusive(['.', '!', '?']) {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let overlap = tokens(sentence)
            .into_iter()
            .collect::<BTreeSet<_>>()
            .intersection(&qset)
            .count();
        if best.as_ref().is_none_or(|(b, _)| overlap > *b) {
            best = Some((overlap, words));
        }
    }
    let Some((_, words)) = best else {
        return String::new();
    };
    // longest run of sentence words the question does not mention
    let fresh = |w: &&str| {
        let t = tokens(w);
        !t.is_empty() && t.iter().all(|x| !qset.contains(x))
    };
    let mut run: Vec<&str> = Vec::new();
    let mut best_run: Vec<&str> = Vec::new();
    for w in &words {
        if fresh(w) {
            run.push(w);
            if run.len() > best_run.len() {
                best_run = run.clone();
            }
        } else {
            run.clear();
        }
    }
    let is_stop = |w: &&str| tokens(w).iter().all(|t| STOPWORDS.contains(&t.as_str()));
    while best_run.first().is_some_and(is_stop) {
        best_run.remove(0);
    }
    best_run.truncate(4);
    while best_run.last().is_some_and(is_stop) {
        best_run.pop();
    }
    best_run
        .join(" ")
        .trim_matches(|c: char| c.is_ascii_punctuation())
        .to_string()
}

fn lexical_intent(prompt: &str, command: &str) -> String {
    let labels: Vec<&str> = prompt
        .lines()
        .find_map(|l| l.split_once("list: ").map(|(_, r)| r))
        .map(|r| r.trim_end_matches('.').split(", ").collect())
        .unwrap_or_default();
    let cmd = tokens(command);
    let mut best: Option<(usize, &str)> = None;
    for l in labels {
        let score = l
            .split('_')
            .filter(|part| {
                let stem: String = part.chars().take(5).collect();
                cmd.iter().any(|c| c.starts_with(&stem))
            })
            .count();
        if score > 0 && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, l));
        }
    }
    best.map(|(_, l)| l.to_string())
        .unwrap_or_else(|| "I cannot tell".to_string())
}
