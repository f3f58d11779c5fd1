//! Timing benchmark for the two hot paths: enumerating the continuations of
//! a live match, and one full beam step (model call, masking, pruning).
//!
//! The corpus is random lowercase prose under the byte scheme, so the
//! vocabulary is the full 262-token byte alphabet.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::BackendSpec;
use crate::corpus::{Document, DocumentSet, KeyStrategy};
use crate::decoder::{DecodeConfig, Hypothesis};
use crate::engine::{build_backend, BuildOptions, IndexBundle};
use crate::fm_index::Anchor;
use crate::tokenizer::{Scheme, TokenId, KEY_OPEN};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Approximate indexed text length in tokens.
    pub tokens: usize,
    pub continuation_queries: usize,
    pub step_samples: usize,
    pub beam_size: usize,
    pub ngram_order: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tokens: 1_000_000,
            continuation_queries: 2_000,
            step_samples: 40,
            beam_size: 10,
            ngram_order: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub text_len: usize,
    pub vocab_size: usize,
    pub keys: usize,
    pub build_ms: f64,
    pub continuation_median_ms: f64,
    pub step_median_ms: f64,
}

/// Random sentences of random words until roughly `tokens` bytes.
pub fn random_corpus(tokens: usize, seed: u64) -> Result<DocumentSet, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a skewed letter distribution gives the index realistic repeats
    let letters = b"eeeettaaoinshrdlucmfwypvbgkqjxz";
    let mut docs = Vec::new();
    let mut total = 0;
    while total < tokens {
        let mut text = String::new();
        for _ in 0..rng.random_range(3..7) {
            let words = rng.random_range(5..15);
            for w in 0..words {
                if w > 0 {
                    text.push(' ');
                }
                for _ in 0..rng.random_range(2..9) {
                    text.push(letters[rng.random_range(0..letters.len())] as char);
                }
            }
            text.push_str(". ");
        }
        total += text.len();
        docs.push(Document {
            doc_id: format!("b{}", docs.len()),
            title: format!("t{}", docs.len()),
            section: String::new(),
            text: text.trim_end().to_string(),
        });
    }
    Ok(DocumentSet::from_docs(docs)?)
}

fn median(mut samples: Vec<Duration>) -> f64 {
    samples.sort_unstable();
    samples.get(samples.len() / 2).map_or(0.0, |d| d.as_secs_f64() * 1e3)
}

pub fn run(config: &BenchConfig) -> Result<BenchReport, Error> {
    let docs = random_corpus(config.tokens, config.seed)?;
    let options = BuildOptions {
        strategy: KeyStrategy::Paragraph,
        scheme: Scheme::Byte,
        ..BuildOptions::default()
    };
    let t0 = Instant::now();
    let bundle = Arc::new(IndexBundle::build(&docs, &options, &[])?);
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let fm = &bundle.index;
    let bodies: Vec<&[TokenId]> = bundle.keys.token_forms().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut cont = Vec::with_capacity(config.continuation_queries);
    for _ in 0..config.continuation_queries {
        let key = bodies[rng.random_range(0..bodies.len())];
        let len = rng.random_range(0..=key.len().min(6));
        let start = rng.random_range(0..=key.len() - len);
        let cursor = key[start..start + len]
            .iter()
            .fold(fm.cursor(Anchor::Anywhere), |c, &t| fm.advance(&c, t));
        let t = Instant::now();
        let next = fm.cursor_continuations(&cursor);
        cont.push(t.elapsed());
        std::hint::black_box(next);
    }

    let lm = build_backend(&BackendSpec::NGram(config.ngram_order), &bundle, None)?;
    let decode = DecodeConfig {
        beam_size: config.beam_size,
        strategy: KeyStrategy::Paragraph,
        ..DecodeConfig::default()
    };
    let decoder = crate::decoder::Decoder::new(fm, lm.as_ref(), &bundle.vocab, &bundle.keys, decode)?;
    let mut steps = Vec::with_capacity(config.step_samples);
    let mut prompt_no = 0;
    while steps.len() < config.step_samples {
        // open a span seeded with a byte of some key, then warm the beam up
        // for a few steps so it is full before timing
        let key = bodies[(prompt_no * 7919) % bodies.len()];
        prompt_no += 1;
        if prompt_no > 100 * config.step_samples.max(1) {
            return Err(Error::Data("benchmark corpus keeps dead-ending".into()));
        }
        let prompt = [KEY_OPEN, key[prompt_no % key.len()]];
        let mut beam: Vec<Hypothesis> = vec![decoder.start(&prompt)?];
        for s in 0..3 {
            beam = decoder.step(&prompt, &beam, s)?.beam;
        }
        if beam.len() < config.beam_size {
            continue;
        }
        for s in 3..8 {
            let t = Instant::now();
            let out = decoder.step(&prompt, &beam, s)?;
            steps.push(t.elapsed());
            if out.beam.is_empty() {
                break;
            }
            beam = out.beam;
        }
    }

    Ok(BenchReport {
        text_len: fm.text_len(),
        vocab_size: bundle.vocab.len(),
        keys: bundle.keys.len(),
        build_ms,
        continuation_median_ms: median(cont),
        step_median_ms: median(steps),
    })
}
