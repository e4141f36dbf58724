//! Transcript and answer metrics: WER alignment, n-best oracle selection,
//! SQuAD-style F1/EM and intent matching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::ScoredHypothesis;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("n-best list is empty")]
    EmptyNBest,
    #[error("intent label set is empty")]
    EmptyLabelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditAlignment {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub hits: usize,
    pub ref_len: usize,
}

impl EditAlignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Lexicographic alignment cost: fewest errors, then most hits, then most
/// substitutions. With errors and hits fixed the remaining counts follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Cost {
    errors: usize,
    neg_hits: isize,
    neg_subs: isize,
}

impl Cost {
    const ZERO: Cost = Cost {
        errors: 0,
        neg_hits: 0,
        neg_subs: 0,
    };

    fn hit(self) -> Cost {
        Cost {
            neg_hits: self.neg_hits - 1,
            ..self
        }
    }

    fn sub(self) -> Cost {
        Cost {
            errors: self.errors + 1,
            neg_subs: self.neg_subs - 1,
            ..self
        }
    }

    fn gap(self) -> Cost {
        Cost {
            errors: self.errors + 1,
            ..self
        }
    }
}

pub fn edit_align<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> EditAlignment {
    let (n, m) = (reference.len(), hyp.len());
    // dp[i][j]: aligning reference[..i] with hyp[..j]
    let mut prev: Vec<Cost> = (0..=m)
        .map(|j| Cost {
            errors: j,
            ..Cost::ZERO
        })
        .collect();
    let mut cur = vec![Cost::ZERO; m + 1];
    for i in 1..=n {
        cur[0] = Cost {
            errors: i,
            ..Cost::ZERO
        };
        for j in 1..=m {
            let diag = if reference[i - 1].as_ref() == hyp[j - 1].as_ref() {
                prev[j - 1].hit()
            } else {
                prev[j - 1].sub()
            };
            let del = prev[j].gap();
            let ins = cur[j - 1].gap();
            cur[j] = diag.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let best = prev[m];
    let hits = (-best.neg_hits) as usize;
    let substitutions = (-best.neg_subs) as usize;
    let deletions = n - hits - substitutions;
    let insertions = best.errors - substitutions - deletions;
    EditAlignment {
        substitutions,
        deletions,
        insertions,
        hits,
        ref_len: n,
    }
}

/// Word error rate in percent; can exceed 100.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let a = edit_align(hyp, reference);
    Ok(100.0 * a.errors() as f64 / a.ref_len as f64)
}

/// Lowercase, strip punctuation, split on whitespace. Used for WER tokens.
pub fn transcript_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Hypothesis with the fewest edits to `reference`; ties go to the higher
/// ASR score, then to the earlier list position.
pub fn select_oracle<'a, T: AsRef<str>>(
    nbest: &'a [ScoredHypothesis],
    reference: &[T],
) -> Result<&'a ScoredHypothesis, MetricsError> {
    let mut best: Option<(usize, &ScoredHypothesis)> = None;
    for h in nbest {
        let d = edit_align(&h.words, reference).errors();
        let better = match best {
            None => true,
            Some((bd, bh)) => d < bd || (d == bd && h.score > bh.score),
        };
        if better {
            best = Some((d, h));
        }
    }
    best.map(|(_, h)| h).ok_or(MetricsError::EmptyNBest)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizedAnswer {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerNormalization {
    /// Lowercase, drop punctuation and articles, collapse whitespace.
    #[default]
    Squad,
    /// Whitespace tokenization only.
    Raw,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_answer(text: &str) -> NormalizedAnswer {
    normalize_with(text, AnswerNormalization::Squad)
}

pub fn normalize_with(text: &str, mode: AnswerNormalization) -> NormalizedAnswer {
    let tokens = match mode {
        AnswerNormalization::Raw => text.split_whitespace().map(str::to_string).collect(),
        AnswerNormalization::Squad => text
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .collect::<String>()
            .split_whitespace()
            .filter(|t| !ARTICLES.contains(t))
            .map(str::to_string)
            .collect(),
    };
    NormalizedAnswer { tokens }
}

pub fn unigram_f1(pred: &str, gold: &str, mode: AnswerNormalization) -> f64 {
    let p = normalize_with(pred, mode).tokens;
    let g = normalize_with(gold, mode).tokens;
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(pred: &str, gold: &str, mode: AnswerNormalization) -> u8 {
    u8::from(normalize_with(pred, mode) == normalize_with(gold, mode))
}

/// Best score over several gold answers.
pub fn best_over_golds<G: AsRef<str>>(
    pred: &str,
    golds: &[G],
    mode: AnswerNormalization,
) -> (f64, u8) {
    golds.iter().fold((0.0f64, 0u8), |(f1, em), g| {
        (
            f1.max(unigram_f1(pred, g.as_ref(), mode)),
            em.max(exact_match(pred, g.as_ref(), mode)),
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentMatching {
    /// Exact match, then the label found earliest in the output.
    #[default]
    ExactThenSubstring,
    ExactOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntentMatch {
    Label(String),
    Unmatched,
}

fn intent_forms(label: &str) -> Vec<String> {
    let lower = label.to_lowercase();
    let spaced = lower.replace('_', " ");
    if spaced == lower {
        vec![lower]
    } else {
        vec![lower, spaced]
    }
}

pub fn match_intent<L: AsRef<str>>(
    output: &str,
    labels: &[L],
    mode: IntentMatching,
) -> Result<IntentMatch, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    let text = output.to_lowercase();
    let trimmed = text
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() && c != '_')
        .trim();
    for l in labels {
        if intent_forms(l.as_ref()).iter().any(|f| f == trimmed) {
            return Ok(IntentMatch::Label(l.as_ref().to_string()));
        }
    }
    if mode == IntentMatching::ExactOnly {
        return Ok(IntentMatch::Unmatched);
    }
    // (position, longer match first, label)
    let mut best: Option<(usize, std::cmp::Reverse<usize>, &str)> = None;
    for l in labels {
        for form in intent_forms(l.as_ref()) {
            if let Some(pos) = text.find(&form) {
                let key = (pos, std::cmp::Reverse(form.len()), l.as_ref());
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
    }
    Ok(match best {
        Some((_, _, l)) => IntentMatch::Label(l.to_string()),
        None => IntentMatch::Unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_sequences() {
        let r = toks("how many total yards");
        let a = edit_align(&r, &r);
        assert_eq!(a.errors(), 0);
        assert_eq!(a.hits, 4);
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn one_substitution() {
        let a = edit_align(&toks("how many towel yards"), &toks("how many total yards"));
        assert_eq!((a.substitutions, a.deletions, a.insertions, a.hits), (1, 0, 0, 3));
        assert_eq!(
            wer(&toks("how many towel yards"), &toks("how many total yards")).unwrap(),
            25.0
        );
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let empty: Vec<&str> = vec![];
        let a = edit_align(&empty, &toks("a b c"));
        assert_eq!(a.deletions, 3);
        assert_eq!(a.hits + a.substitutions + a.deletions, a.ref_len);
    }

    #[test]
    fn wer_can_exceed_hundred() {
        assert_eq!(wer(&toks("x a y b z"), &toks("a b")).unwrap(), 150.0);
        let empty: Vec<&str> = vec![];
        assert_eq!(wer(&toks("a"), &empty).unwrap_err(), MetricsError::EmptyReference);
    }

    #[test]
    fn swap_prefers_hit_over_double_substitution() {
        let a = edit_align(&toks("b a"), &toks("a b"));
        assert_eq!(a.errors(), 2);
        assert_eq!(a.hits, 1);
        assert_eq!((a.deletions, a.insertions), (1, 1));
    }

    fn hyp(words: &str, score: f64) -> ScoredHypothesis {
        ScoredHypothesis {
            words: toks(words).into_iter().map(String::from).collect(),
            arcs: vec![],
            score,
        }
    }

    #[test]
    fn oracle_selection() {
        let r = toks("when was his article published");
        let one = [hyp("one was his article", -1.0)];
        assert_eq!(select_oracle(&one, &r).unwrap().text(), "one was his article");

        let list = [hyp("one was his article", -1.0), hyp("when was his article", -2.0)];
        assert_eq!(select_oracle(&list, &r).unwrap().text(), "when was his article");

        let tied = [
            hyp("one was his article published", -5.0),
            hyp("when was this article published", -4.0),
        ];
        assert_eq!(select_oracle(&tied, &r).unwrap().score, -4.0);
        let empty: [ScoredHypothesis; 0] = [];
        assert_eq!(select_oracle(&empty, &r).unwrap_err(), MetricsError::EmptyNBest);
    }

    #[test]
    fn squad_normalization() {
        assert_eq!(
            normalize_answer("The New England Patriots!").tokens,
            vec!["new", "england", "patriots"]
        );
        assert_eq!(normalize_answer("teach by rote").tokens, vec!["teach", "by", "rote"]);
        assert!(normalize_answer("").tokens.is_empty());
    }

    #[test]
    fn f1_cases() {
        let m = AnswerNormalization::Squad;
        assert_eq!(unigram_f1("nineteen hundred", "nineteen hundred", m), 1.0);
        assert!((unigram_f1("a b c", "b c d", AnswerNormalization::Raw) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(unigram_f1("", "", m), 1.0);
        assert_eq!(unigram_f1("x", "", m), 0.0);
    }

    #[test]
    fn em_cases() {
        let m = AnswerNormalization::Squad;
        assert_eq!(exact_match("The new england patriots", "new england patriots", m), 1);
        assert_eq!(exact_match("knock", "teach by rote", m), 0);
        assert_eq!(exact_match("", "", m), 1);
        assert_eq!(exact_match("The Patriots", "patriots", AnswerNormalization::Raw), 0);
    }

    #[test]
    fn multiple_golds_take_best() {
        let (f1, em) = best_over_golds("denver", &["the broncos", "Denver"], AnswerNormalization::Squad);
        assert_eq!((f1, em), (1.0, 1));
    }

    const ATIS: [&str; 6] = [
        "abbreviation",
        "airfare",
        "flight",
        "flight_time",
        "ground_service",
        "meal",
    ];

    #[test]
    fn intent_matching() {
        let m = IntentMatching::ExactThenSubstring;
        assert_eq!(
            match_intent("flight", &ATIS, m).unwrap(),
            IntentMatch::Label("flight".into())
        );
        assert_eq!(
            match_intent("The intent is airfare.", &ATIS, m).unwrap(),
            IntentMatch::Label("airfare".into())
        );
        assert_eq!(match_intent("I cannot tell", &ATIS, m).unwrap(), IntentMatch::Unmatched);
        assert_eq!(
            match_intent("Intent: flight_time", &ATIS, m).unwrap(),
            IntentMatch::Label("flight_time".into())
        );
        assert_eq!(
            match_intent("ground service, then meal", &ATIS, m).unwrap(),
            IntentMatch::Label("ground_service".into())
        );
        assert_eq!(
            match_intent("The intent is airfare.", &ATIS, IntentMatching::ExactOnly).unwrap(),
            IntentMatch::Unmatched
        );
        let none: [&str; 0] = [];
        assert_eq!(match_intent("x", &none, m).unwrap_err(), MetricsError::EmptyLabelSet);
    }
}
