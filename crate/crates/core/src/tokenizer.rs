//! Token ids, the shared vocabulary, and text <-> token conversion.
//!
//! The index and every language-model backend must agree on one [`Vocab`]; the
//! vocabulary fingerprint is stored in every index file and checked before a
//! decode run starts.
//!
//! Three schemes are supported:
//!
//! * `Byte`: one token per UTF-8 byte, offset past the reserved ids (262 ids).
//! * `Word`: word pieces observed in a corpus. A whitespace-delimited chunk is
//!   split into alphanumeric runs and single punctuation characters; every piece
//!   after the first in a chunk carries a `##` glue prefix so decoding can
//!   restore the original spacing.
//! * `PreTokenized`: ids produced by an external tokenizer. Text is a
//!   whitespace-separated list of integers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TokenId = u32;
pub type TokenSequence = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const EOS: TokenId = 1;
/// `<<`, opens a retrieval-key span.
pub const KEY_OPEN: TokenId = 2;
/// `>>`, closes a retrieval-key span.
pub const KEY_CLOSE: TokenId = 3;
/// Terminates every key body inside the indexed text.
pub const KEY_END: TokenId = 4;
/// Terminates the indexed text.
pub const SEP: TokenId = 5;
/// Number of reserved ids at the bottom of every vocabulary.
pub const RESERVED: TokenId = 6;
/// Unknown word, `Word` scheme only.
pub const UNK: TokenId = 6;

const BYTE_VOCAB_SIZE: usize = RESERVED as usize + 256;
const FIRST_WORD_ID: TokenId = UNK + 1;
const GLUE: &str = "##";
const VOCAB_FILE_VERSION: u32 = 1;

const RESERVED_SURFACES: [&str; 6] = ["<pad>", "</s>", "<<", ">>", "<key_end>", "<sep>"];
const UNK_SURFACE: &str = "<unk>";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("unknown token id {0}")]
    UnknownId(TokenId),
    #[error("reserved token id {0} cannot be decoded as text")]
    ReservedId(TokenId),
    #[error("cannot build a word vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid pre-tokenized text: {0}")]
    BadTokenList(String),
    #[error("vocab file: {0}")]
    Format(String),
    #[error("vocab fingerprint mismatch: expected {expected:016x}, found {found:016x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Byte,
    Word,
    PreTokenized,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "byte" => Ok(Scheme::Byte),
            "word" => Ok(Scheme::Word),
            "pretokenized" | "pre_tokenized" | "ids" => Ok(Scheme::PreTokenized),
            other => Err(format!("unknown tokenizer scheme `{other}`")),
        }
    }
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Byte => "byte",
            Scheme::Word => "word",
            Scheme::PreTokenized => "pretokenized",
        }
    }
}

/// An immutable id <-> surface table.
#[derive(Clone, Debug)]
pub struct Vocab {
    scheme: Scheme,
    size: usize,
    /// `Word` scheme: surfaces of ids `FIRST_WORD_ID..`.
    words: Vec<String>,
    index: HashMap<String, TokenId>,
    fingerprint: u64,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.scheme == other.scheme && self.size == other.size && self.words == other.words
    }
}

impl Vocab {
    pub fn byte() -> Self {
        Self::finish(Scheme::Byte, BYTE_VOCAB_SIZE, Vec::new())
    }

    /// A vocabulary for ids issued by an external tokenizer. `size` covers the
    /// reserved block.
    pub fn pre_tokenized(size: usize) -> Self {
        Self::finish(Scheme::PreTokenized, size.max(RESERVED as usize), Vec::new())
    }

    /// Word vocabulary in order of first appearance across `texts`.
    pub fn words<'a, I>(texts: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen = HashMap::new();
        let mut words = Vec::new();
        for text in texts {
            for piece in word_pieces(text) {
                if !seen.contains_key(piece.as_str()) {
                    seen.insert(piece.clone(), ());
                    words.push(piece);
                }
            }
        }
        if words.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let size = FIRST_WORD_ID as usize + words.len();
        Ok(Self::finish(Scheme::Word, size, words))
    }

    /// Build a vocabulary for `scheme` from the texts of a corpus.
    pub fn build<'a, I>(texts: I, scheme: Scheme) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        match scheme {
            Scheme::Byte => Ok(Self::byte()),
            Scheme::Word => Self::words(texts),
            Scheme::PreTokenized => {
                let mut max = None;
                for text in texts {
                    for id in parse_id_list(text)? {
                        max = max.max(Some(id));
                    }
                }
                let max = max.ok_or(TokenizerError::EmptyCorpus)?;
                Ok(Self::pre_tokenized(max as usize + 1))
            }
        }
    }

    fn finish(scheme: Scheme, size: usize, words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD_ID + i as TokenId))
            .collect();
        let mut vocab = Self {
            scheme,
            size,
            words,
            index,
            fingerprint: 0,
        };
        vocab.fingerprint = vocab.compute_fingerprint();
        vocab
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.scheme.name().as_bytes());
        hasher.update((self.size as u64).to_le_bytes());
        for id in 0..self.size as TokenId {
            let surface = self.surface_bytes(id);
            hasher.update((surface.len() as u64).to_le_bytes());
            hasher.update(&surface);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn check_fingerprint(&self, expected: u64) -> Result<(), TokenizerError> {
        if self.fingerprint == expected {
            Ok(())
        } else {
            Err(TokenizerError::FingerprintMismatch {
                expected,
                found: self.fingerprint,
            })
        }
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id < RESERVED
    }

    /// Raw table entry for `id`, used for fingerprinting and the vocab file.
    fn surface_bytes(&self, id: TokenId) -> Vec<u8> {
        if let Some(s) = RESERVED_SURFACES.get(id as usize) {
            return s.as_bytes().to_vec();
        }
        match self.scheme {
            Scheme::Byte => vec![(id - RESERVED) as u8],
            Scheme::Word if id == UNK => UNK_SURFACE.as_bytes().to_vec(),
            Scheme::Word => self.words[(id - FIRST_WORD_ID) as usize].as_bytes().to_vec(),
            Scheme::PreTokenized => id.to_string().into_bytes(),
        }
    }

    /// Human-readable rendering of a single token, never fails.
    pub fn token_label(&self, id: TokenId) -> String {
        if id as usize >= self.size {
            return format!("<id:{id}>");
        }
        match self.scheme {
            Scheme::Byte if id >= RESERVED => {
                let b = (id - RESERVED) as u8;
                match b {
                    0x21..=0x7e => (b as char).to_string(),
                    b' ' => "\u{2423}".to_string(),
                    _ => format!("<0x{b:02x}>"),
                }
            }
            _ => String::from_utf8_lossy(&self.surface_bytes(id)).into_owned(),
        }
    }

    /// Encode plain text. Never emits reserved ids other than `UNK`.
    pub fn encode(&self, text: &str) -> Result<TokenSequence, TokenizerError> {
        match self.scheme {
            Scheme::Byte => Ok(text.bytes().map(|b| b as TokenId + RESERVED).collect()),
            Scheme::Word => Ok(word_pieces(text)
                .into_iter()
                .map(|p| self.index.get(p.as_str()).copied().unwrap_or(UNK))
                .collect()),
            Scheme::PreTokenized => {
                let ids = parse_id_list(text)?;
                if let Some(&bad) = ids.iter().find(|&&id| id < RESERVED || id as usize >= self.size) {
                    return Err(TokenizerError::BadTokenList(format!(
                        "id {bad} is reserved or outside the vocabulary"
                    )));
                }
                Ok(ids)
            }
        }
    }

    /// Encode text that may contain literal `<<` / `>>` markers, mapping them to
    /// `KEY_OPEN` / `KEY_CLOSE`. Used for prompts and LM training text.
    pub fn encode_marked(&self, text: &str) -> Result<TokenSequence, TokenizerError> {
        let mut out = Vec::new();
        let mut rest = text;
        loop {
            let open = rest.find("<<");
            let close = rest.find(">>");
            let (at, marker) = match (open, close) {
                (None, None) => break,
                (Some(o), None) => (o, KEY_OPEN),
                (None, Some(c)) => (c, KEY_CLOSE),
                (Some(o), Some(c)) if o < c => (o, KEY_OPEN),
                (_, Some(c)) => (c, KEY_CLOSE),
            };
            out.extend(self.encode(&rest[..at])?);
            out.push(marker);
            rest = &rest[at + 2..];
        }
        out.extend(self.encode(rest)?);
        Ok(out)
    }

    /// Decode tokens back to text. Key markers render as `<<` / `>>`; any other
    /// reserved id is an error.
    pub fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        for &t in tokens {
            if t as usize >= self.size {
                return Err(TokenizerError::UnknownId(t));
            }
            if Self::is_reserved(t) && t != KEY_OPEN && t != KEY_CLOSE {
                return Err(TokenizerError::ReservedId(t));
            }
        }
        Ok(self.render(tokens))
    }

    /// Like [`Vocab::decode`] but renders every id, including reserved and
    /// unknown ones. Used for traces.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        match self.scheme {
            Scheme::Byte => {
                let mut bytes = Vec::with_capacity(tokens.len());
                for &t in tokens {
                    if t >= RESERVED && (t as usize) < self.size {
                        bytes.push((t - RESERVED) as u8);
                    } else {
                        bytes.extend_from_slice(self.token_label(t).as_bytes());
                    }
                }
                String::from_utf8_lossy(&bytes).into_owned()
            }
            Scheme::Word => {
                let mut out = String::new();
                for &t in tokens {
                    let label = self.token_label(t);
                    match label.strip_prefix(GLUE) {
                        Some(glued) if t >= FIRST_WORD_ID => out.push_str(glued),
                        _ => {
                            if !out.is_empty() {
                                out.push(' ');
                            }
                            out.push_str(&label);
                        }
                    }
                }
                out
            }
            Scheme::PreTokenized => tokens
                .iter()
                .map(|&t| self.token_label(t))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Look up a single surface (exact table entry).
    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        if let Some(i) = RESERVED_SURFACES.iter().position(|s| *s == surface) {
            return Some(i as TokenId);
        }
        match self.scheme {
            Scheme::Byte => match surface.as_bytes() {
                [b] => Some(*b as TokenId + RESERVED),
                _ => None,
            },
            Scheme::Word if surface == UNK_SURFACE => Some(UNK),
            Scheme::Word => self.index.get(surface).copied(),
            Scheme::PreTokenized => surface.parse().ok().filter(|&id: &TokenId| (id as usize) < self.size),
        }
    }

    /// Serialize to the line-oriented vocab file format.
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "# keyweave-vocab v{VOCAB_FILE_VERSION} scheme={} size={} fingerprint={:016x}\n",
            self.scheme.name(),
            self.size,
            self.fingerprint
        );
        for id in 0..self.size as TokenId {
            out.push_str(&escape(&self.surface_bytes(id)));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_file_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_file_str(content: &str) -> Result<Self, TokenizerError> {
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| TokenizerError::Format("missing header".into()))?;
        let fields: HashMap<&str, &str> = header
            .strip_prefix("# keyweave-vocab ")
            .ok_or_else(|| TokenizerError::Format("bad header".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('=').or(Some((kv, ""))))
            .collect();
        if !fields.contains_key(format!("v{VOCAB_FILE_VERSION}").as_str()) {
            return Err(TokenizerError::Format(format!("unsupported version in `{header}`")));
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| TokenizerError::Format(format!("header lacks `{k}`")))
        };
        let scheme: Scheme = get("scheme")?.parse().map_err(TokenizerError::Format)?;
        let size: usize = get("size")?
            .parse()
            .map_err(|_| TokenizerError::Format("bad size".into()))?;
        let fingerprint = u64::from_str_radix(get("fingerprint")?, 16)
            .map_err(|_| TokenizerError::Format("bad fingerprint".into()))?;
        let entries: Vec<Vec<u8>> = lines.map(unescape).collect::<Result<_, _>>()?;
        if entries.len() != size {
            return Err(TokenizerError::Format(format!(
                "header declares {size} entries, file has {}",
                entries.len()
            )));
        }
        let vocab = match scheme {
            Scheme::Byte => Self::byte(),
            Scheme::PreTokenized => Self::pre_tokenized(size),
            Scheme::Word => {
                let words = entries[FIRST_WORD_ID as usize..]
                    .iter()
                    .map(|e| {
                        String::from_utf8(e.clone())
                            .map_err(|_| TokenizerError::Format("word entry is not UTF-8".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::finish(Scheme::Word, size, words)
            }
        };
        if (0..size as TokenId).any(|id| vocab.surface_bytes(id) != entries[id as usize]) {
            return Err(TokenizerError::Format("table entries do not match the scheme".into()));
        }
        vocab.check_fingerprint(fingerprint)?;
        Ok(vocab)
    }
}

/// Split text into word pieces: alphanumeric runs and single other characters,
/// with the glue prefix on non-initial pieces of a whitespace chunk.
pub fn word_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    for chunk in text.split_whitespace() {
        let mut first = true;
        let mut push = |piece: &str, pieces: &mut Vec<String>| {
            if first {
                pieces.push(piece.to_string());
                first = false;
            } else {
                pieces.push(format!("{GLUE}{piece}"));
            }
        };
        let mut run_start = None;
        for (i, c) in chunk.char_indices() {
            if c.is_alphanumeric() {
                run_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = run_start.take() {
                push(&chunk[s..i], &mut pieces);
            }
            push(&chunk[i..i + c.len_utf8()], &mut pieces);
        }
        if let Some(s) = run_start {
            push(&chunk[s..], &mut pieces);
        }
    }
    pieces
}

fn parse_id_list(text: &str) -> Result<Vec<TokenId>, TokenizerError> {
    text.split_whitespace()
        .map(|w| {
            w.parse::<TokenId>()
                .map_err(|_| TokenizerError::BadTokenList(format!("`{w}` is not a token id")))
        })
        .collect()
}

fn escape(bytes: &[u8]) -> String {
    let mut out = String::new();
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(_) => {
            for b in bytes {
                let _ = write!(out, "\\x{b:02x}");
            }
            return out;
        }
    };
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => {
                let mut buf = [0u8; 4];
                for b in c.encode_utf8(&mut buf).bytes() {
                    let _ = write!(out, "\\x{b:02x}");
                }
            }
            c => out.push(c),
        }
    }
    out
}

fn unescape(line: &str) -> Result<Vec<u8>, TokenizerError> {
    let bad = || TokenizerError::Format(format!("bad escape in `{line}`"));
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        match bytes.get(i + 1).ok_or_else(bad)? {
            b'\\' => out.push(b'\\'),
            b's' => out.push(b' '),
            b't' => out.push(b'\t'),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b'x' => {
                let hex = line.get(i + 2..i + 4).ok_or_else(bad)?;
                out.push(u8::from_str_radix(hex, 16).map_err(|_| bad())?);
                i += 2;
            }
            _ => return Err(bad()),
        }
        i += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_vocab_has_262_ids() {
        assert_eq!(Vocab::byte().len(), 262);
    }

    #[test]
    fn byte_layout_offsets_past_reserved_block() {
        let v = Vocab::byte();
        assert_eq!(v.encode("ab").unwrap(), vec![97 + 6, 98 + 6]);
        assert!(v.encode("").unwrap().is_empty());
    }

    #[test]
    fn word_vocab_contains_corpus_words() {
        let v = Vocab::words(["the cat sat"]).unwrap();
        for w in ["the", "cat", "sat"] {
            assert!(v.id_of(w).unwrap() > UNK);
        }
        assert_eq!(v.len(), 6 + 1 + 3);
        assert_eq!(v.id_of("<unk>"), Some(UNK));
    }

    #[test]
    fn word_round_trip_folds_whitespace() {
        let v = Vocab::words(["the  cat"]).unwrap();
        let ids = v.encode("the  cat").unwrap();
        assert_eq!(v.decode(&ids).unwrap(), "the cat");
    }

    #[test]
    fn word_round_trip_keeps_punctuation_glue() {
        let text = "Mr. Smith's cat sat (quietly), e.g. here.";
        let v = Vocab::words([text]).unwrap();
        assert_eq!(v.decode(&v.encode(text).unwrap()).unwrap(), text);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocab::words(["the cat"]).unwrap();
        assert_eq!(v.encode("the dog").unwrap()[1], UNK);
    }

    #[test]
    fn fingerprints_differ_when_one_word_differs() {
        let a = Vocab::words(["the cat sat"]).unwrap();
        let b = Vocab::words(["the cat ran"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), Vocab::words(["the cat sat"]).unwrap().fingerprint());
    }

    #[test]
    fn decode_rejects_unknown_and_reserved() {
        let v = Vocab::byte();
        assert!(matches!(v.decode(&[9999]), Err(TokenizerError::UnknownId(9999))));
        assert!(matches!(v.decode(&[SEP]), Err(TokenizerError::ReservedId(SEP))));
        assert_eq!(v.decode(&[KEY_OPEN, 6 + b'x' as u32, KEY_CLOSE]).unwrap(), "<<x>>");
    }

    #[test]
    fn marked_encoding_maps_markers() {
        let v = Vocab::words(["keyword cat sat"]).unwrap();
        let ids = v.encode_marked("keyword << cat sat >> x").unwrap();
        assert_eq!(ids[1], KEY_OPEN);
        assert_eq!(ids[4], KEY_CLOSE);
        let b = Vocab::byte();
        assert_eq!(b.encode_marked("<<a>>").unwrap(), vec![KEY_OPEN, 6 + 97, KEY_CLOSE]);
    }

    #[test]
    fn pre_tokenized_parses_id_lists() {
        let v = Vocab::build(["10 11 12", "40"], Scheme::PreTokenized).unwrap();
        assert_eq!(v.len(), 41);
        assert_eq!(v.encode("12 40").unwrap(), vec![12, 40]);
        assert!(v.encode("3").is_err());
        assert_eq!(v.decode(&[12, KEY_OPEN, 40]).unwrap(), "12 << 40");
    }

    #[test]
    fn vocab_file_round_trips() {
        for v in [
            Vocab::byte(),
            Vocab::words(["tab\there back\\slash ünï"]).unwrap(),
            Vocab::pre_tokenized(20),
        ] {
            let text = v.to_file_string();
            let back = Vocab::from_file_str(&text).unwrap();
            assert_eq!(back, v);
            assert_eq!(back.fingerprint(), v.fingerprint());
        }
    }

    #[test]
    fn vocab_file_rejects_edited_entries() {
        let v = Vocab::words(["alpha beta"]).unwrap();
        let edited = v.to_file_string().replace("beta", "gamma");
        assert!(matches!(
            Vocab::from_file_str(&edited),
            Err(TokenizerError::FingerprintMismatch { .. })
        ));
        let bumped = v.to_file_string().replace("v1", "v9");
        assert!(Vocab::from_file_str(&bumped).is_err());
    }

    proptest! {
        #[test]
        fn byte_round_trip_exact(s in "\\PC{0,40}") {
            let v = Vocab::byte();
            prop_assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), s);
        }

        #[test]
        fn word_round_trip_modulo_whitespace(s in "[a-zA-Z0-9 .,!?'\\-]{0,60}") {
            let v = Vocab::words([s.as_str()]).unwrap_or_else(|_| Vocab::words(["x"]).unwrap());
            let normalized = s.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), normalized);
        }

        #[test]
        fn plain_text_never_encodes_to_markers(s in "\\PC{0,40}") {
            let v = Vocab::byte();
            prop_assert!(v.encode(&s).unwrap().iter().all(|&t| t >= RESERVED));
            if let Ok(w) = Vocab::words([s.as_str()]) {
                prop_assert!(w.encode(&s).unwrap().iter().all(|&t| t >= UNK));
            }
        }
    }
}
