//! Answer and retrieval metrics.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::decoder::{GenerationOutput, Segment};

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, fold
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn answer_tokens(text: &str) -> Vec<String> {
    normalize_answer(text).split_whitespace().map(str::to_string).collect()
}

fn f1_single(prediction: &[String], gold: &[String]) -> f64 {
    if prediction.is_empty() || gold.is_empty() {
        return (prediction.is_empty() && gold.is_empty()) as u8 as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in gold {
        *counts.entry(g.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for p in prediction {
        if let Some(c) = counts.get_mut(p.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / prediction.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 after answer normalization, maximized over the golds.
pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    let pred = answer_tokens(prediction);
    golds
        .iter()
        .map(|g| f1_single(&pred, &answer_tokens(g)))
        .fold(0.0, f64::max)
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// True when some gold answer, normalized, is a contiguous token run of the
/// normalized `text`.
pub fn contains_answer(text: &str, golds: &[String]) -> bool {
    let hay = answer_tokens(text);
    golds.iter().any(|g| contains_run(&hay, &answer_tokens(g)))
}

/// Retrieval hit for the top-beam output: a constrained span (or its
/// `evidence` expansion) contains a gold answer, or a resolved document is a
/// gold document.
pub fn hits_at_1(evidence: &[String], doc_ids: &[String], golds: &[String], gold_doc_ids: Option<&[String]>) -> bool {
    evidence.iter().any(|e| contains_answer(e, golds))
        || gold_doc_ids.is_some_and(|g| doc_ids.iter().any(|d| g.contains(d)))
}

/// Surfaces of the constrained spans of an output, in order.
pub fn span_texts(output: &GenerationOutput) -> Vec<String> {
    output
        .segments
        .iter()
        .filter_map(|s| match s {
            Segment::Constrained { text, .. } => Some(text.clone()),
            Segment::Free { .. } => None,
        })
        .collect()
}

/// Constrained spans joined by single spaces; free text is dropped.
pub fn evidence_text(output: &GenerationOutput) -> String {
    span_texts(output).join(" ")
}
