//! Corpus loading and retrieval-key extraction.
//!
//! A corpus is a list of [`Document`]s. Each [`KeyStrategy`] turns it into a
//! [`RetrievalKeySet`]: the finite set of token sequences the decoder is allowed
//! to emit between key markers. Identical surfaces from different documents are
//! merged into one key that points at every source document.

mod split;
mod tfidf;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{TokenSequence, TokenizerError, Vocab};

pub use split::split_sentences;
pub use tfidf::{terms, TfIdf};

/// Separator between title, section and body in key surfaces.
pub const TITLE_DELIMITER: &str = " :: ";
pub const KEYSET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("duplicate doc_id `{doc_id}` at line {line}")]
    DuplicateId { doc_id: String, line: usize },
    #[error("empty corpus")]
    Empty,
    #[error("key set: {0}")]
    KeySet(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub section: String,
    pub text: String,
}

/// Documents in input order. Documents whose text is empty after whitespace
/// folding are dropped and listed in `filtered`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocumentSet {
    pub docs: Vec<Document>,
    pub filtered: Vec<String>,
}

impl DocumentSet {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.text.as_str())
    }

    /// Build from in-memory documents, applying the same checks as the loader.
    pub fn from_docs(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut set = DocumentSet::default();
        let mut seen = HashSet::new();
        for (i, mut doc) in docs.into_iter().enumerate() {
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateId {
                    doc_id: doc.doc_id,
                    line: i + 1,
                });
            }
            doc.text = normalize_whitespace(&doc.text);
            if doc.text.is_empty() {
                set.filtered.push(doc.doc_id);
            } else {
                set.docs.push(doc);
            }
        }
        Ok(set)
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for doc in &self.docs {
            serde_json::to_writer(&mut out, doc).expect("documents serialize");
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// `{"doc_id", "title", "section", "text"}` per line.
    Passages,
    /// `{"doc_id", "proposition"}` per line.
    Propositions,
    /// `{"doc_id", "tokens": [int, ...]}` per line, for an external tokenizer.
    TokenIds,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passages" | "jsonl" => Ok(Self::Passages),
            "propositions" => Ok(Self::Propositions),
            "token_ids" | "tokens" => Ok(Self::TokenIds),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Deserialize)]
struct PropositionRow {
    doc_id: String,
    proposition: String,
}

#[derive(Deserialize)]
struct TokenRow {
    doc_id: String,
    tokens: Vec<u32>,
}

/// Load a JSONL corpus, preserving input order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<DocumentSet, CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut set = DocumentSet::default();
    let mut seen = HashSet::new();
    let display = path.display().to_string();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| CorpusError::Malformed {
            path: display.clone(),
            line: line_no,
            reason: e.to_string(),
        };
        let doc = match format {
            CorpusFormat::Passages => serde_json::from_str::<Document>(&line).map_err(malformed)?,
            CorpusFormat::Propositions => {
                let row: PropositionRow = serde_json::from_str(&line).map_err(malformed)?;
                Document {
                    doc_id: row.doc_id,
                    title: String::new(),
                    section: String::new(),
                    text: row.proposition,
                }
            }
            CorpusFormat::TokenIds => {
                let row: TokenRow = serde_json::from_str(&line).map_err(malformed)?;
                Document {
                    doc_id: row.doc_id,
                    title: String::new(),
                    section: String::new(),
                    text: row.tokens.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                }
            }
        };
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateId {
                doc_id: doc.doc_id,
                line: line_no,
            });
        }
        let text = normalize_whitespace(&doc.text);
        if text.is_empty() {
            set.filtered.push(doc.doc_id);
        } else {
            set.docs.push(Document { text, ..doc });
        }
    }
    Ok(set)
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// How documents are turned into retrieval keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyStrategy {
    Title,
    Paragraph,
    ParagraphWithTitle,
    Sentence,
    SentenceWithTitle,
    Proposition,
}

impl KeyStrategy {
    pub const ALL: [KeyStrategy; 6] = [
        KeyStrategy::Title,
        KeyStrategy::ParagraphWithTitle,
        KeyStrategy::Paragraph,
        KeyStrategy::SentenceWithTitle,
        KeyStrategy::Sentence,
        KeyStrategy::Proposition,
    ];

    /// Whole-key strategies only accept complete keys between markers;
    /// paragraph strategies accept substrings.
    pub fn whole_key(self) -> bool {
        !matches!(self, KeyStrategy::Paragraph | KeyStrategy::ParagraphWithTitle)
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyStrategy::Title => "title",
            KeyStrategy::Paragraph => "paragraph",
            KeyStrategy::ParagraphWithTitle => "paragraph_with_title",
            KeyStrategy::Sentence => "sentence",
            KeyStrategy::SentenceWithTitle => "sentence_with_title",
            KeyStrategy::Proposition => "proposition",
        }
    }
}

impl fmt::Display for KeyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KeyStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown key strategy `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalKey {
    pub key_id: u32,
    pub surface: String,
    #[serde(skip)]
    pub token_form: TokenSequence,
    pub source_doc_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalKeySet {
    pub strategy: KeyStrategy,
    pub vocab_fingerprint: u64,
    pub keys: Vec<RetrievalKey>,
}

#[derive(Serialize, Deserialize)]
struct KeySetHeader {
    format: String,
    version: u32,
    strategy: KeyStrategy,
    fingerprint: String,
    count: usize,
}

impl RetrievalKeySet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key_id: u32) -> Option<&RetrievalKey> {
        self.keys.get(key_id as usize)
    }

    pub fn token_forms(&self) -> impl Iterator<Item = &[u32]> {
        self.keys.iter().map(|k| k.token_form.as_slice())
    }

    /// Union of source documents for the given keys, in first-seen order.
    pub fn doc_ids(&self, key_ids: &[u32]) -> Vec<String> {
        let mut seen = HashSet::new();
        key_ids
            .iter()
            .filter_map(|&k| self.get(k))
            .flat_map(|k| k.source_doc_ids.iter())
            .filter(|d| seen.insert(d.as_str()))
            .cloned()
            .collect()
    }

    /// JSONL sidecar: a header line, then `{key_id, surface, source_doc_ids}`.
    pub fn to_jsonl(&self) -> String {
        let header = KeySetHeader {
            format: "keyweave-keys".into(),
            version: KEYSET_FORMAT_VERSION,
            strategy: self.strategy,
            fingerprint: format!("{:016x}", self.vocab_fingerprint),
            count: self.keys.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for key in &self.keys {
            out.push_str(&serde_json::to_string(key).expect("keys serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Parse the sidecar and re-derive token forms with `vocab`.
    pub fn from_jsonl(content: &str, vocab: &Vocab) -> Result<Self, CorpusError> {
        let mut lines = content.lines();
        let header: KeySetHeader = lines
            .next()
            .ok_or_else(|| CorpusError::KeySet("missing header".into()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| CorpusError::KeySet(e.to_string())))?;
        if header.version != KEYSET_FORMAT_VERSION {
            return Err(CorpusError::KeySet(format!("unsupported version {}", header.version)));
        }
        let fingerprint =
            u64::from_str_radix(&header.fingerprint, 16).map_err(|_| CorpusError::KeySet("bad fingerprint".into()))?;
        vocab.check_fingerprint(fingerprint)?;
        let mut keys = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let mut key: RetrievalKey = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: "keys".into(),
                line: i + 2,
                reason: e.to_string(),
            })?;
            if key.key_id as usize != keys.len() {
                return Err(CorpusError::KeySet(format!("key ids not dense at line {}", i + 2)));
            }
            key.token_form = vocab.encode(&key.surface)?;
            keys.push(key);
        }
        if keys.len() != header.count {
            return Err(CorpusError::KeySet(format!(
                "header declares {} keys, found {}",
                header.count,
                keys.len()
            )));
        }
        Ok(Self {
            strategy: header.strategy,
            vocab_fingerprint: fingerprint,
            keys,
        })
    }

    pub fn load(path: &Path, vocab: &Vocab) -> Result<Self, CorpusError> {
        Self::from_jsonl(&fs::read_to_string(path)?, vocab)
    }
}

fn title_header(doc: &Document) -> String {
    [doc.title.trim(), doc.section.trim()]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(TITLE_DELIMITER)
}

fn with_header(doc: &Document, body: &str) -> String {
    let header = title_header(doc);
    if header.is_empty() {
        body.to_string()
    } else {
        format!("{header}{TITLE_DELIMITER}{body}")
    }
}

/// Surfaces a single document contributes under `strategy`.
fn surfaces(doc: &Document, strategy: KeyStrategy) -> Vec<String> {
    let sentences = || {
        let s = split_sentences(&doc.text);
        if s.is_empty() {
            vec![doc.text.as_str()]
        } else {
            s
        }
    };
    match strategy {
        KeyStrategy::Title => {
            let header = title_header(doc);
            if header.is_empty() {
                vec![doc.text.clone()]
            } else {
                vec![header]
            }
        }
        KeyStrategy::Paragraph | KeyStrategy::Proposition => vec![doc.text.clone()],
        KeyStrategy::ParagraphWithTitle => vec![with_header(doc, &doc.text)],
        KeyStrategy::Sentence => sentences().into_iter().map(str::to_string).collect(),
        KeyStrategy::SentenceWithTitle => sentences().into_iter().map(|s| with_header(doc, s)).collect(),
    }
}

/// Derive the key set. Key ids follow first appearance in document order.
pub fn extract_keys(docs: &DocumentSet, strategy: KeyStrategy, vocab: &Vocab) -> Result<RetrievalKeySet, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut by_surface: HashMap<String, usize> = HashMap::new();
    let mut keys: Vec<RetrievalKey> = Vec::new();
    for doc in &docs.docs {
        for surface in surfaces(doc, strategy) {
            let surface = normalize_whitespace(&surface);
            if surface.is_empty() {
                continue;
            }
            match by_surface.get(&surface) {
                Some(&k) => {
                    let ids = &mut keys[k].source_doc_ids;
                    if !ids.contains(&doc.doc_id) {
                        ids.push(doc.doc_id.clone());
                    }
                }
                None => {
                    let token_form = vocab.encode(&surface)?;
                    by_surface.insert(surface.clone(), keys.len());
                    keys.push(RetrievalKey {
                        key_id: keys.len() as u32,
                        surface,
                        token_form,
                        source_doc_ids: vec![doc.doc_id.clone()],
                    });
                }
            }
        }
    }
    Ok(RetrievalKeySet {
        strategy,
        vocab_fingerprint: vocab.fingerprint(),
        keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, section: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: title.into(),
            section: section.into(),
            text: text.into(),
        }
    }

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_three_documents_in_order() {
        let f = write_tmp(&[
            r#"{"doc_id":"d1","title":"A","section":"","text":"one"}"#,
            r#"{"doc_id":"d2","title":"B","section":"s","text":"two"}"#,
            r#"{"doc_id":"d3","title":"C","section":"","text":"three"}"#,
        ]);
        let set = load_corpus(f.path(), CorpusFormat::Passages).unwrap();
        let ids: Vec<_> = set.docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["d1", "d2", "d3"]);
    }

    #[test]
    fn empty_file_is_empty_set_and_extraction_fails() {
        let f = write_tmp(&[]);
        let set = load_corpus(f.path(), CorpusFormat::Passages).unwrap();
        assert!(set.is_empty());
        let err = extract_keys(&set, KeyStrategy::Sentence, &Vocab::byte()).unwrap_err();
        assert!(matches!(err, CorpusError::Empty));
    }

    #[test]
    fn duplicate_id_names_id_and_line() {
        let f = write_tmp(&[
            r#"{"doc_id":"d0","text":"a"}"#,
            r#"{"doc_id":"d1","text":"b"}"#,
            r#"{"doc_id":"d2","text":"c"}"#,
            r#"{"doc_id":"d3","text":"d"}"#,
            r#"{"doc_id":"d1","text":"e"}"#,
        ]);
        match load_corpus(f.path(), CorpusFormat::Passages).unwrap_err() {
            CorpusError::DuplicateId { doc_id, line } => {
                assert_eq!(doc_id, "d1");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_reported_with_line_number() {
        let f = write_tmp(&[r#"{"doc_id":"d0","text":"a"}"#, "{not json"]);
        let err = load_corpus(f.path(), CorpusFormat::Passages).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn proposition_and_token_formats() {
        let f = write_tmp(&[r#"{"doc_id":"p1","proposition":"Tom has  7M followers."}"#]);
        let set = load_corpus(f.path(), CorpusFormat::Propositions).unwrap();
        assert_eq!(set.docs[0].text, "Tom has 7M followers.");
        let f = write_tmp(&[r#"{"doc_id":"t1","tokens":[10,11,12]}"#]);
        let set = load_corpus(f.path(), CorpusFormat::TokenIds).unwrap();
        assert_eq!(set.docs[0].text, "10 11 12");
    }

    #[test]
    fn blank_text_documents_are_filtered_not_lost() {
        let set = DocumentSet::from_docs(vec![doc("a", "", "", "  "), doc("b", "", "", "x")]).unwrap();
        assert_eq!(set.filtered, vec!["a".to_string()]);
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn sentence_strategy_splits() {
        let set = DocumentSet::from_docs(vec![doc("d", "", "", "The cat sat. The cat ran.")]).unwrap();
        let keys = extract_keys(&set, KeyStrategy::Sentence, &Vocab::byte()).unwrap();
        let surfaces: Vec<_> = keys.keys.iter().map(|k| k.surface.as_str()).collect();
        assert_eq!(surfaces, ["The cat sat.", "The cat ran."]);
    }

    #[test]
    fn identical_propositions_merge() {
        let set = DocumentSet::from_docs(vec![
            doc("d1", "", "", "Snickers was renamed."),
            doc("d2", "", "", "Snickers was renamed."),
        ])
        .unwrap();
        let keys = extract_keys(&set, KeyStrategy::Proposition, &Vocab::byte()).unwrap();
        assert_eq!(keys.len(), 1);
        assert_eq!(keys.keys[0].source_doc_ids, ["d1", "d2"]);
    }

    #[test]
    fn title_and_prefixed_surfaces() {
        let set = DocumentSet::from_docs(vec![
            doc("d1", "Snickers", "History", "It was renamed. Later it grew."),
            doc("d2", "Snickers", "History", "Another paragraph."),
            doc("d3", "Mars", "", "Plain."),
        ])
        .unwrap();
        let v = Vocab::byte();
        let titles = extract_keys(&set, KeyStrategy::Title, &v).unwrap();
        assert_eq!(titles.keys[0].surface, "Snickers :: History");
        assert_eq!(titles.keys[0].source_doc_ids, ["d1", "d2"]);
        assert_eq!(titles.keys[1].surface, "Mars");

        let swt = extract_keys(&set, KeyStrategy::SentenceWithTitle, &v).unwrap();
        assert_eq!(swt.keys[1].surface, "Snickers :: History :: Later it grew.");
        let pwt = extract_keys(&set, KeyStrategy::ParagraphWithTitle, &v).unwrap();
        assert_eq!(pwt.keys[2].surface, "Mars :: Plain.");
    }

    #[test]
    fn every_document_is_reachable() {
        let set = DocumentSet::from_docs(vec![
            doc("d1", "T", "", "A b. C d."),
            doc("d2", "", "", "Only text"),
            doc("d3", "T", "", "A b."),
        ])
        .unwrap();
        for strategy in KeyStrategy::ALL {
            let keys = extract_keys(&set, strategy, &Vocab::byte()).unwrap();
            let reached: HashSet<_> = keys.keys.iter().flat_map(|k| k.source_doc_ids.iter()).collect();
            assert_eq!(reached.len(), 3, "{strategy}");
        }
    }

    #[test]
    fn key_set_sidecar_round_trips_and_is_deterministic() {
        let set = DocumentSet::from_docs(vec![
            doc("d1", "T", "S", "The cat sat. The cat ran."),
            doc("d2", "U", "", "A dog ran."),
        ])
        .unwrap();
        let vocab = Vocab::words(set.texts().chain(["T", "S", "U", "::"])).unwrap();
        let keys = extract_keys(&set, KeyStrategy::SentenceWithTitle, &vocab).unwrap();
        let again = extract_keys(&set, KeyStrategy::SentenceWithTitle, &vocab).unwrap();
        assert_eq!(keys.to_jsonl(), again.to_jsonl());
        let back = RetrievalKeySet::from_jsonl(&keys.to_jsonl(), &vocab).unwrap();
        assert_eq!(back, keys);
        for k in &back.keys {
            assert_eq!(vocab.decode(&k.token_form).unwrap(), k.surface);
        }
    }

    #[test]
    fn strategy_names_parse() {
        for s in KeyStrategy::ALL {
            assert_eq!(s.name().parse::<KeyStrategy>().unwrap(), s);
        }
        assert!("chapter".parse::<KeyStrategy>().is_err());
    }
}
