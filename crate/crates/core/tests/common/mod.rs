//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use keyweave::corpus::{extract_keys, Document, DocumentSet, KeyStrategy, RetrievalKeySet};
use keyweave::fm_index::FmIndex;
use keyweave::lm::{LanguageModel, LmError, LogProbRequest, LogProbResponse};
use keyweave::tokenizer::{Scheme, TokenId, Vocab, KEY_END};

pub fn docs(texts: &[&str]) -> DocumentSet {
    DocumentSet::from_docs(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                doc_id: format!("d{i}"),
                title: format!("T{i}"),
                section: String::new(),
                text: t.to_string(),
            })
            .collect(),
    )
    .unwrap()
}

pub struct Fixture {
    pub vocab: Vocab,
    pub keys: RetrievalKeySet,
    pub fm: FmIndex,
}

pub fn fixture(texts: &[&str], strategy: KeyStrategy, scheme: Scheme) -> Fixture {
    fixture_from_docs(&docs(texts), strategy, scheme, &[])
}

pub fn fixture_from_docs(set: &DocumentSet, strategy: KeyStrategy, scheme: Scheme, extra: &[&str]) -> Fixture {
    let vocab = match scheme {
        Scheme::Word => {
            let mut texts: Vec<&str> = Vec::new();
            for d in &set.docs {
                texts.extend([d.title.as_str(), d.section.as_str(), d.text.as_str()]);
            }
            texts.push(keyweave::corpus::TITLE_DELIMITER);
            texts.extend(extra);
            Vocab::words(texts).unwrap()
        }
        s => Vocab::build(set.texts(), s).unwrap(),
    };
    let keys = extract_keys(set, strategy, &vocab).unwrap();
    let fm = FmIndex::from_keys(&keys, 4).unwrap();
    Fixture { vocab, keys, fm }
}

pub fn ids(vocab: &Vocab, text: &str) -> Vec<TokenId> {
    vocab.encode(text).unwrap()
}

/// Occurrences of `pattern` inside key bodies as `(key_id, offset)`, sorted.
pub fn naive_locate(keys: &[Vec<TokenId>], pattern: &[TokenId]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        if pattern.len() > key.len() {
            continue;
        }
        for o in 0..=key.len() - pattern.len() {
            if key[o..o + pattern.len()] == *pattern {
                out.push((k as u32, o as u32));
            }
        }
    }
    out
}

/// Indexed text length: every key plus its end marker, plus the terminator.
pub fn naive_text_len(keys: &[Vec<TokenId>]) -> usize {
    keys.iter().map(|k| k.len() + 1).sum::<usize>() + 1
}

/// Tokens following each occurrence of a non-empty `pattern`, with counts.
/// A match that ends a key is followed by `KEY_END`. The empty pattern is
/// followed by every indexed token except the terminator.
pub fn naive_continuations(keys: &[Vec<TokenId>], pattern: &[TokenId]) -> BTreeMap<TokenId, usize> {
    let mut out = BTreeMap::new();
    if pattern.is_empty() {
        for key in keys {
            for &t in key {
                *out.entry(t).or_default() += 1;
            }
            *out.entry(KEY_END).or_default() += 1;
        }
        return out;
    }
    for (k, o) in naive_locate(keys, pattern) {
        let key = &keys[k as usize];
        let next = key.get(o as usize + pattern.len()).copied().unwrap_or(KEY_END);
        *out.entry(next).or_default() += 1;
    }
    out
}

/// Whether `span` occurs verbatim inside a single key body.
pub fn in_some_key(keys: &[Vec<TokenId>], span: &[TokenId]) -> bool {
    !span.is_empty() && !naive_locate(keys, span).is_empty()
}

/// A model defined by a function from prefix to a handful of preferred
/// `(token, probability)` pairs; the remaining mass is spread evenly over
/// every other token.
pub struct ScriptedLm<F> {
    pub vocab_size: usize,
    pub fingerprint: u64,
    pub script: F,
}

impl<F> LanguageModel for ScriptedLm<F>
where
    F: Fn(&[TokenId]) -> Vec<(TokenId, f64)> + Send + Sync,
{
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn logprobs(&self, request: &LogProbRequest) -> Result<LogProbResponse, LmError> {
        self.check_fingerprint(request.fingerprint)?;
        let logprobs = request
            .prefixes
            .iter()
            .map(|p| {
                let picks = (self.script)(p);
                let mass: f64 = picks.iter().map(|(_, q)| q).sum();
                assert!(mass < 1.0, "scripted mass must leave room for the rest");
                let rest = (1.0 - mass) / (self.vocab_size - picks.len()) as f64;
                let mut v = vec![rest; self.vocab_size];
                for &(t, q) in &picks {
                    v[t as usize] = q;
                }
                v.into_iter().map(f64::ln).collect()
            })
            .collect();
        Ok(LogProbResponse { logprobs })
    }
}
