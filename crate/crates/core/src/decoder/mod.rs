//! Beam search that interleaves free text with corpus-verbatim key spans.
//!
//! A hypothesis is either FREE (any non-structural token, including the
//! `<<` marker that opens a span) or CONSTRAINED (only tokens that keep the
//! open span a substring of some retrieval key, plus `>>` once the span may
//! close). Masked tokens get `-inf`; kept tokens keep their raw model
//! log-probability, so scores are sums of raw log-probs.
//!
//! With the adaptive beam a FREE hypothesis expands to its single best token
//! while a CONSTRAINED one expands to `beam_size` tokens.

mod output;
mod trace;

use std::cmp::Ordering;

use thiserror::Error;

use crate::corpus::{KeyStrategy, RetrievalKeySet};
use crate::fm_index::{Anchor, FmIndex, IndexError, MatchRange, SpanCursor};
use crate::lm::{LanguageModel, LmError, LogProbRequest};
use crate::tokenizer::{TokenId, Vocab, EOS, KEY_CLOSE, KEY_END, KEY_OPEN, PAD, RESERVED, SEP};

pub use output::{extract_answer, GenerationOutput, Segment};
pub use trace::{BeamTrace, Mode, PruneReason, TraceExpansion, TraceHypothesis, TracePruned, TraceStep};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub adaptive_beam: bool,
    pub max_steps: usize,
    pub max_key_tokens: usize,
    pub strategy: KeyStrategy,
    /// Shortest span that may close under the paragraph strategies.
    pub min_substring_len: usize,
    pub no_repeat_keys: bool,
    pub eos_token: TokenId,
    /// Occurrences examined when resolving a span to keys.
    pub locate_limit: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            adaptive_beam: true,
            max_steps: 128,
            max_key_tokens: 64,
            strategy: KeyStrategy::Proposition,
            min_substring_len: 8,
            no_repeat_keys: false,
            eos_token: EOS,
            locate_limit: 64,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::BadConfig(m.to_string()));
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if self.max_key_tokens == 0 {
            return bad("max_key_tokens must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.min_substring_len == 0 {
            return bad("min_substring_len must be at least 1");
        }
        if self.locate_limit == 0 {
            return bad("locate_limit must be at least 1");
        }
        if [PAD, KEY_OPEN, KEY_CLOSE, KEY_END, SEP].contains(&self.eos_token) {
            return bad("eos_token cannot be a structural token");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    BadConfig(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("vocab fingerprint mismatch: {what} has {found:016x}, vocab has {expected:016x}")]
    FingerprintMismatch {
        what: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("backend vocab size {model} differs from vocab size {vocab}")]
    VocabSize { model: usize, vocab: usize },
    #[error("backend returned {got} log-probs, expected {want}")]
    BadLogprobs { got: usize, want: usize },
    #[error("constraint dead-end at step {step}: best partial {partial:?} (score {score:.4})")]
    DeadEnd {
        step: usize,
        partial: String,
        score: f64,
        trace: Box<BeamTrace>,
    },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Entries outside `allowed` become `-inf`; allowed entries keep their raw
/// value. `None` when nothing is allowed (the hypothesis is dead).
pub fn mask(logprobs: &[f64], allowed: &[TokenId]) -> Option<Vec<f64>> {
    if allowed.is_empty() {
        return None;
    }
    let mut out = vec![f64::NEG_INFINITY; logprobs.len()];
    for &t in allowed {
        if let Some(&v) = logprobs.get(t as usize) {
            out[t as usize] = v;
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq)]
struct OpenSpan {
    /// Index in `tokens` of the first generated span token.
    start: usize,
    /// Span tokens already present in the prompt.
    seed: Vec<TokenId>,
    cursor: SpanCursor,
    /// Key-start-anchored twin, kept for the paragraph strategies so a span
    /// equal to a whole key can close before reaching the length floor.
    anchored: Option<SpanCursor>,
}

/// A finished span and the keys it resolved to.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedSpan {
    pub start: usize,
    /// Index in `tokens` of the closing marker.
    pub end: usize,
    pub seed: Vec<TokenId>,
    pub key_ids: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, prompt excluded.
    pub tokens: Vec<TokenId>,
    pub score: f64,
    pub mode: Mode,
    pub spans: Vec<ClosedSpan>,
    pub emitted_key_ids: Vec<u32>,
    pub finished: bool,
    open: Option<OpenSpan>,
}

impl Hypothesis {
    /// Live match range of the open span (the unanchored one when both exist).
    pub fn range(&self) -> Option<MatchRange> {
        self.open.as_ref().map(|o| o.cursor.ranges()[0])
    }

    pub fn cursor(&self) -> Option<&SpanCursor> {
        self.open.as_ref().map(|o| &o.cursor)
    }

    pub fn open_span_start(&self) -> Option<usize> {
        self.open.as_ref().map(|o| o.start)
    }

    /// Tokens of the open span, seed included.
    pub fn open_span_tokens(&self) -> Option<Vec<TokenId>> {
        self.open.as_ref().map(|o| {
            let mut t = o.seed.clone();
            t.extend_from_slice(&self.tokens[o.start..]);
            t
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Transition {
    Free,
    Eos,
    Open,
    Close,
    Extend(SpanCursor, Option<SpanCursor>),
}

/// Result of one beam step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub beam: Vec<Hypothesis>,
    pub trace: TraceStep,
}

/// A full decode: beam-ranked outputs plus the step trace.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub outputs: Vec<GenerationOutput>,
    pub trace: BeamTrace,
}

pub struct Decoder<'a> {
    fm: &'a FmIndex,
    lm: &'a dyn LanguageModel,
    vocab: &'a Vocab,
    keys: &'a RetrievalKeySet,
    config: DecodeConfig,
    free_allowed: Vec<TokenId>,
}

impl<'a> Decoder<'a> {
    pub fn new(
        fm: &'a FmIndex,
        lm: &'a dyn LanguageModel,
        vocab: &'a Vocab,
        keys: &'a RetrievalKeySet,
        config: DecodeConfig,
    ) -> Result<Self, DecodeError> {
        config.validate()?;
        let expected = vocab.fingerprint();
        for (what, found) in [
            ("index", fm.fingerprint()),
            ("backend", lm.fingerprint()),
            ("key set", keys.vocab_fingerprint),
        ] {
            if found != expected {
                return Err(DecodeError::FingerprintMismatch { what, found, expected });
            }
        }
        if lm.vocab_size() != vocab.len() {
            return Err(DecodeError::VocabSize {
                model: lm.vocab_size(),
                vocab: vocab.len(),
            });
        }
        let free_allowed = (0..vocab.len() as TokenId)
            .filter(|t| ![PAD, KEY_CLOSE, KEY_END, SEP].contains(t))
            .collect();
        Ok(Self {
            fm,
            lm,
            vocab,
            keys,
            config,
            free_allowed,
        })
    }

    pub fn config(&self) -> &DecodeConfig {
        &self.config
    }

    fn whole_key(&self) -> bool {
        self.config.strategy.whole_key()
    }

    fn open_span(&self, start: usize, seed: &[TokenId]) -> OpenSpan {
        let anchor = if self.whole_key() {
            Anchor::KeyStart
        } else {
            Anchor::Anywhere
        };
        let walk = |a: Anchor| seed.iter().fold(self.fm.cursor(a), |c, &t| self.fm.advance(&c, t));
        OpenSpan {
            start,
            seed: seed.to_vec(),
            cursor: walk(anchor),
            anchored: (!self.whole_key()).then(|| walk(Anchor::KeyStart)),
        }
    }

    /// Initial hypothesis. A prompt ending inside an unclosed `<<` span starts
    /// CONSTRAINED, with the prompt's span tokens as the match seed.
    pub fn start(&self, prompt: &[TokenId]) -> Result<Hypothesis, DecodeError> {
        if prompt.is_empty() {
            return Err(DecodeError::EmptyPrompt);
        }
        let mut hyp = Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
            mode: Mode::Free,
            spans: Vec::new(),
            emitted_key_ids: Vec::new(),
            finished: false,
            open: None,
        };
        let last_open = prompt.iter().rposition(|&t| t == KEY_OPEN);
        let last_close = prompt.iter().rposition(|&t| t == KEY_CLOSE);
        if let Some(o) = last_open.filter(|&o| last_close.is_none_or(|c| c < o)) {
            let span = self.open_span(0, &prompt[o + 1..]);
            if span.cursor.is_dead() {
                return Err(DecodeError::DeadEnd {
                    step: 0,
                    partial: self.vocab.render(&prompt[o + 1..]),
                    score: 0.0,
                    trace: Box::default(),
                });
            }
            hyp.mode = Mode::Constrained;
            hyp.open = Some(span);
        }
        Ok(hyp)
    }

    fn close_licensed(&self, span: &OpenSpan) -> bool {
        if span.cursor.is_empty() {
            return false;
        }
        if self.whole_key() {
            self.fm.completes_key(&span.cursor)
        } else {
            span.cursor.len() >= self.config.min_substring_len
                || span.anchored.as_ref().is_some_and(|a| self.fm.completes_key(a))
        }
    }

    /// True when every occurrence of `cursor` lies in an already-emitted key.
    fn only_emitted(&self, hyp: &Hypothesis, cursor: &SpanCursor) -> bool {
        if cursor.count() > self.config.locate_limit {
            return false;
        }
        match self.fm.cursor_key_ids(cursor, self.config.locate_limit) {
            Ok(ids) => ids.iter().all(|k| hyp.emitted_key_ids.contains(k)),
            Err(_) => false,
        }
    }

    fn moves(&self, hyp: &Hypothesis) -> Vec<(TokenId, Transition)> {
        if hyp.finished {
            return Vec::new();
        }
        let Some(span) = &hyp.open else {
            return self
                .free_allowed
                .iter()
                .map(|&t| {
                    let tr = if t == KEY_OPEN {
                        Transition::Open
                    } else if t == self.config.eos_token {
                        Transition::Eos
                    } else {
                        Transition::Free
                    };
                    (t, tr)
                })
                .collect();
        };
        let mut out = Vec::new();
        if self.close_licensed(span) {
            out.push((KEY_CLOSE, Transition::Close));
        }
        if span.cursor.len() >= self.config.max_key_tokens {
            return out;
        }
        for (t, next) in self.fm.cursor_continuations(&span.cursor) {
            if t < RESERVED {
                continue;
            }
            if self.config.no_repeat_keys && self.only_emitted(hyp, &next) {
                continue;
            }
            let anchored = span.anchored.as_ref().map(|a| self.fm.advance(a, t));
            out.push((t, Transition::Extend(next, anchored)));
        }
        out.sort_by_key(|(t, _)| *t);
        out
    }

    /// Tokens the hypothesis may emit next, ascending. Empty means dead.
    pub fn allowed_tokens(&self, hyp: &Hypothesis) -> Vec<TokenId> {
        self.moves(hyp).into_iter().map(|(t, _)| t).collect()
    }

    /// Successor after emitting `token` with log-prob `logprob`, or `None`
    /// when the token is not allowed.
    pub fn apply(&self, hyp: &Hypothesis, token: TokenId, logprob: f64) -> Option<Hypothesis> {
        let (_, tr) = self.moves(hyp).into_iter().find(|(t, _)| *t == token)?;
        Some(self.transition(hyp, token, tr, logprob))
    }

    fn transition(&self, hyp: &Hypothesis, token: TokenId, tr: Transition, logprob: f64) -> Hypothesis {
        let mut next = hyp.clone();
        next.tokens.push(token);
        next.score += logprob;
        match tr {
            Transition::Free => {}
            Transition::Eos => next.finished = true,
            Transition::Open => {
                next.mode = Mode::Constrained;
                next.open = Some(self.open_span(next.tokens.len(), &[]));
            }
            Transition::Extend(cursor, anchored) => {
                let span = next.open.as_mut().expect("extend only in constrained mode");
                span.cursor = cursor;
                span.anchored = anchored;
            }
            Transition::Close => {
                let span = next.open.take().expect("close only in constrained mode");
                let key_ids = self.resolve(&span);
                for &k in &key_ids {
                    if !next.emitted_key_ids.contains(&k) {
                        next.emitted_key_ids.push(k);
                    }
                }
                next.spans.push(ClosedSpan {
                    start: span.start,
                    end: next.tokens.len() - 1,
                    seed: span.seed,
                    key_ids,
                });
                next.mode = Mode::Free;
            }
        }
        next
    }

    /// Keys a span points to: the keys it equals for whole-key strategies,
    /// the keys containing it otherwise.
    fn resolve(&self, span: &OpenSpan) -> Vec<u32> {
        let limit = self.config.locate_limit;
        let ids = if self.whole_key() {
            self.fm.cursor_key_ids(&self.fm.advance(&span.cursor, KEY_END), limit)
        } else {
            self.fm.cursor_key_ids(&span.cursor, limit)
        };
        ids.unwrap_or_default()
    }

    /// Expand every live hypothesis once and keep the best `beam_size`.
    pub fn step(&self, prompt: &[TokenId], beam: &[Hypothesis], step_no: usize) -> Result<StepOutcome, DecodeError> {
        let live: Vec<usize> = (0..beam.len()).filter(|&i| !beam[i].finished).collect();
        let request = LogProbRequest {
            fingerprint: self.vocab.fingerprint(),
            prefixes: live
                .iter()
                .map(|&i| {
                    let mut p = prompt.to_vec();
                    p.extend_from_slice(&beam[i].tokens);
                    p
                })
                .collect(),
        };
        let response = self.lm.logprobs(&request)?;
        if response.logprobs.len() != live.len() {
            return Err(DecodeError::BadLogprobs {
                got: response.logprobs.len(),
                want: live.len(),
            });
        }

        struct Candidate {
            hyp: Hypothesis,
            parent: usize,
            token: Option<TokenId>,
        }
        let mut pool = Vec::new();
        let mut pruned = Vec::new();
        let mut expansions = Vec::new();
        for (pi, hyp) in beam.iter().enumerate() {
            if hyp.finished {
                pool.push(Candidate {
                    hyp: hyp.clone(),
                    parent: pi,
                    token: None,
                });
            }
        }
        for (li, &pi) in live.iter().enumerate() {
            let hyp = &beam[pi];
            let lp = &response.logprobs[li];
            if lp.len() != self.vocab.len() {
                return Err(DecodeError::BadLogprobs {
                    got: lp.len(),
                    want: self.vocab.len(),
                });
            }
            let mut moves: Vec<(TokenId, Transition)> = self
                .moves(hyp)
                .into_iter()
                .filter(|(t, _)| lp[*t as usize].is_finite())
                .collect();
            moves.sort_by(|a, b| rank_tokens(lp, a.0, b.0));
            let fanout = if hyp.mode == Mode::Constrained || !self.config.adaptive_beam {
                self.config.beam_size
            } else {
                1
            };
            moves.truncate(fanout);

            // tokens the model scored strictly above the weakest kept
            // successor but the constraint masked out
            let allowed: Vec<TokenId> = moves.iter().map(|(t, _)| *t).collect();
            let weakest = allowed.last().copied();
            let mut blocked: Vec<TokenId> = (0..lp.len() as TokenId)
                .filter(|&t| lp[t as usize].is_finite() && !allowed.contains(&t))
                .filter(|&t| weakest.is_none_or(|w| lp[t as usize] > lp[w as usize]))
                .collect();
            blocked.sort_by(|&a, &b| rank_tokens(lp, a, b));
            blocked.truncate(fanout);
            for t in blocked {
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                pruned.push(TracePruned {
                    surface: self.vocab.render(&tokens),
                    score: hyp.score + lp[t as usize],
                    reason: PruneReason::ConstraintBlocked,
                });
            }

            expansions.push(TraceExpansion {
                parent: pi,
                mode: hyp.mode,
                successors: moves.len(),
            });
            for (t, tr) in moves {
                pool.push(Candidate {
                    hyp: self.transition(hyp, t, tr, lp[t as usize]),
                    parent: pi,
                    token: Some(t),
                });
            }
        }

        pool.sort_by(|a, b| {
            b.hyp
                .score
                .total_cmp(&a.hyp.score)
                .then(a.parent.cmp(&b.parent))
                .then(a.token.cmp(&b.token))
        });
        let dropped = pool.split_off(pool.len().min(self.config.beam_size));
        for c in dropped {
            pruned.push(TracePruned {
                surface: self.vocab.render(&c.hyp.tokens),
                score: c.hyp.score,
                reason: PruneReason::Score,
            });
        }
        let beam: Vec<Hypothesis> = pool.into_iter().map(|c| c.hyp).collect();
        let trace = TraceStep {
            step: step_no,
            hypotheses: beam
                .iter()
                .map(|h| TraceHypothesis {
                    surface: self.vocab.render(&h.tokens),
                    score: h.score,
                    mode: h.mode,
                })
                .collect(),
            pruned,
            expansions,
        };
        Ok(StepOutcome { beam, trace })
    }

    /// Run steps until every beam entry finished or the step budget is spent.
    pub fn decode(&self, prompt: &[TokenId]) -> Result<Decoded, DecodeError> {
        let mut beam = vec![self.start(prompt)?];
        let mut trace = BeamTrace::default();
        for step_no in 0..self.config.max_steps {
            if beam.iter().all(|h| h.finished) {
                break;
            }
            let outcome = self.step(prompt, &beam, step_no)?;
            trace.steps.push(outcome.trace);
            if outcome.beam.is_empty() {
                let best = &beam[0];
                return Err(DecodeError::DeadEnd {
                    step: step_no,
                    partial: self.vocab.render(&best.tokens),
                    score: best.score,
                    trace: Box::new(trace),
                });
            }
            beam = outcome.beam;
        }
        let outputs = beam.iter().enumerate().map(|(rank, h)| self.output(h, rank)).collect();
        Ok(Decoded { outputs, trace })
    }

    /// Segment a hypothesis into free text and resolved spans.
    pub fn output(&self, hyp: &Hypothesis, beam_rank: usize) -> GenerationOutput {
        let mut segments = Vec::new();
        let mut pos = 0;
        let push_free = |segments: &mut Vec<Segment>, tokens: &[TokenId]| {
            if !tokens.is_empty() {
                let text_tokens: Vec<TokenId> =
                    tokens.iter().copied().filter(|&t| t != self.config.eos_token).collect();
                segments.push(Segment::Free {
                    text: self.vocab.render(&text_tokens),
                    tokens: tokens.to_vec(),
                });
            }
        };
        let constrained = |seed: &[TokenId], body: &[TokenId], key_ids: Vec<u32>, closed: bool| {
            let mut tokens = seed.to_vec();
            tokens.extend_from_slice(body);
            Segment::Constrained {
                text: self.vocab.render(&tokens),
                seed_len: seed.len(),
                doc_ids: self.keys.doc_ids(&key_ids),
                key_ids,
                tokens,
                closed,
            }
        };
        for span in &hyp.spans {
            let marker = marker_index(&hyp.tokens, span.start);
            push_free(&mut segments, &hyp.tokens[pos..marker]);
            segments.push(constrained(
                &span.seed,
                &hyp.tokens[span.start..span.end],
                span.key_ids.clone(),
                true,
            ));
            pos = span.end + 1;
        }
        if let Some(open) = &hyp.open {
            let marker = marker_index(&hyp.tokens, open.start);
            push_free(&mut segments, &hyp.tokens[pos..marker]);
            let key_ids = self
                .fm
                .cursor_key_ids(&open.cursor, self.config.locate_limit)
                .unwrap_or_default();
            segments.push(constrained(&open.seed, &hyp.tokens[open.start..], key_ids, false));
        } else {
            push_free(&mut segments, &hyp.tokens[pos..]);
        }
        GenerationOutput {
            answer: extract_answer(&segments),
            segments,
            score: hyp.score,
            beam_rank,
            truncated: !hyp.finished,
        }
    }
}

/// Index of the `<<` that opened a span starting at `start`; spans opened
/// in the prompt have no generated marker and start at 0.
fn marker_index(tokens: &[TokenId], start: usize) -> usize {
    if start > 0 && tokens[start - 1] == KEY_OPEN {
        start - 1
    } else {
        start
    }
}

/// Higher log-prob first, then lower token id.
fn rank_tokens(lp: &[f64], a: TokenId, b: TokenId) -> Ordering {
    lp[b as usize].total_cmp(&lp[a as usize]).then(a.cmp(&b))
}
