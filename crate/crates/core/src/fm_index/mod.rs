//! FM-index over the retrieval-key token stream.
//!
//! The indexed text is every key body followed by [`KEY_END`], terminated by
//! one [`SEP`]:
//!
//! ```text
//! k0 <key_end> k1 <key_end> ... km <key_end> <sep>
//! ```
//!
//! The BWT is taken over the *reversed* text (with `SEP` rotated to the end), so
//! one backward-search step appends a token on the right of the match. That is
//! the direction a decoder grows a span: [`FmIndex::extend`] is one rank pair
//! per token and [`FmIndex::continuations`] tests every symbol of the alphabet.
//!
//! Matches never run through a `KEY_END` or `SEP`: a range whose pattern ends
//! in a terminator (after at least one body token) cannot be extended.

mod bitvec;
mod cursor;
mod io;
mod suffix_array;
mod wavelet;

use thiserror::Error;

use crate::corpus::RetrievalKeySet;
use crate::tokenizer::{TokenId, KEY_END, RESERVED, SEP};

pub use bitvec::RankBitVec;
pub use cursor::{Anchor, SpanCursor};
pub use suffix_array::suffix_array;
pub use wavelet::WaveletMatrix;

pub const FORMAT_VERSION: u8 = 1;
pub const MAGIC: &[u8; 4] = b"RFMI";
pub const DEFAULT_SAMPLE_RATE: u32 = 32;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty key set")]
    EmptyKeySet,
    #[error("key {0} has no tokens")]
    EmptyKey(usize),
    #[error("key {key} contains reserved token {token}")]
    ReservedToken { key: usize, token: TokenId },
    #[error("indexed text of {0} tokens exceeds the 32-bit build limit")]
    TooLarge(usize),
    #[error("sample rate must be at least 1")]
    BadSampleRate,
    #[error("locate limit must be positive")]
    InvalidLimit,
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("index file truncated")]
    Truncated,
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("vocab fingerprint mismatch: index has {index:016x}, vocab has {vocab:016x}")]
    FingerprintMismatch { index: u64, vocab: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open interval of suffix-array rows matching a pattern of `depth`
/// tokens. Its size is the number of occurrences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatchRange {
    pub lo: usize,
    pub hi: usize,
    pub depth: u32,
}

impl MatchRange {
    pub fn empty(depth: u32) -> Self {
        Self { lo: 0, hi: 0, depth }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// An occurrence resolved to a key and a token offset inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyHit {
    pub key_id: u32,
    pub offset: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FmIndex {
    len: usize,
    /// `counts[c]` = number of text symbols smaller than `c`.
    counts: Vec<u64>,
    bwt: WaveletMatrix,
    sampled: RankBitVec,
    samples: Vec<u64>,
    sample_rate: u32,
    /// Text position where each key body starts; key ids are indices.
    key_starts: Vec<u64>,
    fingerprint: u64,
    /// Symbols with a non-zero count, ascending. Derived, not serialized.
    present: Vec<TokenId>,
}

impl FmIndex {
    pub fn from_keys(keys: &RetrievalKeySet, sample_rate: u32) -> Result<Self, IndexError> {
        Self::build(keys.token_forms(), keys.vocab_fingerprint, sample_rate)
    }

    /// Build over key bodies given in key-id order.
    pub fn build<'a, I>(bodies: I, fingerprint: u64, sample_rate: u32) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        if sample_rate == 0 {
            return Err(IndexError::BadSampleRate);
        }
        let mut text = Vec::new();
        let mut key_starts = Vec::new();
        for (k, body) in bodies.into_iter().enumerate() {
            if body.is_empty() {
                return Err(IndexError::EmptyKey(k));
            }
            if let Some(&token) = body.iter().find(|&&t| t < RESERVED) {
                return Err(IndexError::ReservedToken { key: k, token });
            }
            key_starts.push(text.len() as u64);
            text.extend_from_slice(body);
            text.push(KEY_END);
        }
        if key_starts.is_empty() {
            return Err(IndexError::EmptyKeySet);
        }
        text.push(SEP);
        let n = text.len();
        if n >= u32::MAX as usize {
            return Err(IndexError::TooLarge(n));
        }

        // reversed body, SEP rotated to the end
        let mut rev: Vec<TokenId> = text[..n - 1].iter().rev().copied().collect();
        rev.push(SEP);
        let sa = suffix_array(&rev);
        let bwt_seq: Vec<TokenId> = sa.iter().map(|&j| rev[(j as usize + n - 1) % n]).collect();

        let alphabet = *text.iter().max().expect("non-empty") as usize + 1;
        let mut counts = vec![0u64; alphabet + 1];
        for &c in &text {
            counts[c as usize + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let sampled = RankBitVec::from_bits(sa.iter().map(|&j| j % sample_rate == 0));
        let samples = sa
            .iter()
            .filter(|&&j| j % sample_rate == 0)
            .map(|&j| j as u64)
            .collect();

        Ok(Self::assemble(
            n,
            counts,
            WaveletMatrix::new(&bwt_seq),
            sampled,
            samples,
            sample_rate,
            key_starts,
            fingerprint,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        len: usize,
        counts: Vec<u64>,
        bwt: WaveletMatrix,
        sampled: RankBitVec,
        samples: Vec<u64>,
        sample_rate: u32,
        key_starts: Vec<u64>,
        fingerprint: u64,
    ) -> Self {
        let present = (0..counts.len() - 1)
            .filter(|&c| counts[c + 1] > counts[c])
            .map(|c| c as TokenId)
            .collect();
        Self {
            len,
            counts,
            bwt,
            sampled,
            samples,
            sample_rate,
            key_starts,
            fingerprint,
            present,
        }
    }

    /// Total indexed tokens N, including one `KEY_END` per key and the `SEP`.
    pub fn text_len(&self) -> usize {
        self.len
    }

    pub fn key_count(&self) -> usize {
        self.key_starts.len()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn check_fingerprint(&self, vocab_fingerprint: u64) -> Result<(), IndexError> {
        if self.fingerprint == vocab_fingerprint {
            Ok(())
        } else {
            Err(IndexError::FingerprintMismatch {
                index: self.fingerprint,
                vocab: vocab_fingerprint,
            })
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Distinct symbols of the indexed text, ascending.
    pub fn alphabet(&self) -> &[TokenId] {
        &self.present
    }

    /// Number of tokens in key `key_id`'s body.
    pub fn key_len(&self, key_id: u32) -> Option<usize> {
        let k = key_id as usize;
        let start = *self.key_starts.get(k)?;
        let end = self.key_starts.get(k + 1).copied().unwrap_or(self.len as u64 - 1);
        Some((end - start - 1) as usize)
    }

    /// Rows whose suffix starts with `c`, or `None` for absent symbols.
    fn symbol_rows(&self, c: TokenId) -> Option<(usize, usize)> {
        let c = c as usize;
        if c + 1 >= self.counts.len() {
            return None;
        }
        Some((self.counts[c] as usize, self.counts[c + 1] as usize))
    }

    /// True when the matched pattern has a body token followed by a terminator.
    fn is_sealed(&self, range: &MatchRange) -> bool {
        if range.depth < 2 || range.is_empty() {
            return false;
        }
        [KEY_END, SEP].into_iter().any(|t| {
            self.symbol_rows(t)
                .is_some_and(|(lo, hi)| range.lo >= lo && range.hi <= hi)
        })
    }

    /// The empty pattern: every row.
    pub fn root(&self) -> MatchRange {
        MatchRange {
            lo: 0,
            hi: self.len,
            depth: 0,
        }
    }

    /// Append `token` to the matched pattern (one backward-search step).
    pub fn extend(&self, range: MatchRange, token: TokenId) -> MatchRange {
        let depth = range.depth + 1;
        if range.is_empty() || self.is_sealed(&range) {
            return MatchRange::empty(depth);
        }
        let Some((base, _)) = self.symbol_rows(token) else {
            return MatchRange::empty(depth);
        };
        let (rl, rh) = self.bwt.rank_pair(token, range.lo, range.hi);
        MatchRange {
            lo: base + rl,
            hi: base + rh,
            depth,
        }
    }

    /// Extend by every token of `pattern`.
    pub fn find(&self, pattern: &[TokenId]) -> MatchRange {
        pattern.iter().fold(self.root(), |r, &t| self.extend(r, t))
    }

    /// Every token that can follow the matched pattern, with its range. Scans
    /// the whole alphabet with one rank pair per symbol. `KEY_END` may appear
    /// (a key ends here); `SEP` never does.
    pub fn continuations(&self, range: MatchRange) -> Vec<(TokenId, MatchRange)> {
        if range.is_empty() || self.is_sealed(&range) {
            return Vec::new();
        }
        let depth = range.depth + 1;
        let mut out = Vec::new();
        for &c in &self.present {
            if c == SEP {
                continue;
            }
            let (rl, rh) = self.bwt.rank_pair(c, range.lo, range.hi);
            if rh > rl {
                let base = self.counts[c as usize] as usize;
                out.push((
                    c,
                    MatchRange {
                        lo: base + rl,
                        hi: base + rh,
                        depth,
                    },
                ));
            }
        }
        out
    }

    /// Same contract as [`FmIndex::continuations`], enumerating only the
    /// distinct symbols inside the range through the wavelet matrix.
    pub fn continuations_distinct(&self, range: MatchRange) -> Vec<(TokenId, MatchRange)> {
        if range.is_empty() || self.is_sealed(&range) {
            return Vec::new();
        }
        let depth = range.depth + 1;
        let mut out = Vec::new();
        self.bwt.distinct_in_range(range.lo, range.hi, |c, rl, rh| {
            if c != SEP {
                let base = self.counts[c as usize] as usize;
                out.push((
                    c,
                    MatchRange {
                        lo: base + rl,
                        hi: base + rh,
                        depth,
                    },
                ));
            }
        });
        out
    }

    pub fn count(&self, range: MatchRange) -> usize {
        range.len()
    }

    /// LF mapping: row of the suffix one position earlier in the reversed text.
    pub fn lf(&self, row: usize) -> usize {
        let c = self.bwt.access(row);
        self.counts[c as usize] as usize + self.bwt.rank(c, row)
    }

    /// Suffix-array value of `row`, walking LF to the nearest sample.
    fn sa_value(&self, row: usize) -> usize {
        let mut r = row;
        let mut steps = 0;
        while !self.sampled.get(r) {
            r = self.lf(r);
            steps += 1;
        }
        (self.samples[self.sampled.rank1(r)] as usize + steps) % self.len
    }

    /// Start position, in forward text coordinates, of the occurrence at `row`.
    fn text_position(&self, row: usize, depth: u32) -> usize {
        let j = self.sa_value(row);
        (2 * self.len - 1 - j - depth as usize) % self.len
    }

    /// Forward text positions of up to `limit` occurrences, ascending row order.
    pub fn locate_positions(&self, range: MatchRange, limit: usize) -> Result<Vec<usize>, IndexError> {
        if limit == 0 {
            return Err(IndexError::InvalidLimit);
        }
        if range.is_empty() {
            return Ok(Vec::new());
        }
        let end = range.hi.min(range.lo.saturating_add(limit));
        Ok((range.lo..end)
            .map(|row| self.text_position(row, range.depth))
            .collect())
    }

    /// Up to `limit` occurrences as `(key_id, offset)`, ascending row order.
    pub fn locate(&self, range: MatchRange, limit: usize) -> Result<Vec<KeyHit>, IndexError> {
        Ok(self
            .locate_positions(range, limit)?
            .into_iter()
            .map(|p| self.key_hit(p))
            .collect())
    }

    /// Map a forward text position to the key containing it. A key's
    /// `KEY_END` maps to offset `key_len`.
    pub fn key_hit(&self, pos: usize) -> KeyHit {
        let idx = self.key_starts.partition_point(|&s| s <= pos as u64) - 1;
        KeyHit {
            key_id: idx as u32,
            offset: (pos as u64 - self.key_starts[idx]) as u32,
        }
    }

    /// Rebuild the forward indexed text by walking LF from the `SEP` row.
    pub fn reconstruct_text(&self) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.len);
        let (mut row, _) = self.symbol_rows(SEP).expect("SEP is always indexed");
        for _ in 0..self.len {
            let c = self.bwt.access(row);
            out.push(c);
            row = self.counts[c as usize] as usize + self.bwt.rank(c, row);
        }
        out
    }

    /// Raw BWT symbol at `row`.
    pub fn bwt_symbol(&self, row: usize) -> TokenId {
        self.bwt.access(row)
    }

    /// Occurrences of `c` in `bwt[0, i)`.
    pub fn rank(&self, c: TokenId, i: usize) -> usize {
        self.bwt.rank(c, i)
    }
}
