//! Decoded sequences split into free text and corpus spans.

use serde::{Deserialize, Serialize};

use crate::tokenizer::{TokenId, KEY_CLOSE, KEY_OPEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Free {
        text: String,
        tokens: Vec<TokenId>,
    },
    Constrained {
        text: String,
        /// Full span, including any tokens that were already open in the prompt.
        tokens: Vec<TokenId>,
        /// How many leading span tokens came from the prompt.
        seed_len: usize,
        key_ids: Vec<u32>,
        doc_ids: Vec<String>,
        /// False when decoding stopped inside the span.
        closed: bool,
    },
}

impl Segment {
    pub fn text(&self) -> &str {
        match self {
            Segment::Free { text, .. } | Segment::Constrained { text, .. } => text,
        }
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, Segment::Constrained { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub segments: Vec<Segment>,
    pub answer: String,
    pub score: f64,
    pub beam_rank: usize,
    /// Stopped by the step budget rather than by EOS.
    pub truncated: bool,
}

impl GenerationOutput {
    pub fn constrained_spans(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_constrained())
    }

    /// All key ids resolved by constrained spans, in emission order.
    pub fn key_ids(&self) -> Vec<u32> {
        self.segments
            .iter()
            .flat_map(|s| match s {
                Segment::Constrained { key_ids, .. } => key_ids.as_slice(),
                Segment::Free { .. } => &[],
            })
            .copied()
            .collect()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.segments {
            if let Segment::Constrained { doc_ids, .. } = s {
                for d in doc_ids {
                    if !out.contains(d) {
                        out.push(d.clone());
                    }
                }
            }
        }
        out
    }

    /// Rebuild the generated token stream (prompt excluded) from the
    /// segments, with markers around spans. Seed tokens of a span opened in
    /// the prompt are not part of the generated stream.
    pub fn generated_tokens(&self) -> Vec<TokenId> {
        let mut out = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Free { tokens, .. } => out.extend_from_slice(tokens),
                Segment::Constrained {
                    tokens,
                    seed_len,
                    closed,
                    ..
                } => {
                    if *seed_len == 0 {
                        out.push(KEY_OPEN);
                    }
                    out.extend_from_slice(&tokens[*seed_len..]);
                    if *closed {
                        out.push(KEY_CLOSE);
                    }
                }
            }
        }
        out
    }
}

/// Text after the last `answer:` marker in the last free segment that has
/// one, trimmed; empty when no free segment carries the marker.
pub fn extract_answer(segments: &[Segment]) -> String {
    const MARKER: &str = "answer:";
    segments
        .iter()
        .rev()
        .filter_map(|s| match s {
            Segment::Free { text, .. } => text.rfind(MARKER).map(|i| text[i + MARKER.len()..].trim()),
            Segment::Constrained { .. } => None,
        })
        .next()
        .unwrap_or("")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(text: &str) -> Segment {
        Segment::Free {
            text: text.into(),
            tokens: vec![],
        }
    }

    fn span(text: &str) -> Segment {
        Segment::Constrained {
            text: text.into(),
            tokens: vec![],
            seed_len: 0,
            key_ids: vec![],
            doc_ids: vec![],
            closed: true,
        }
    }

    #[test]
    fn answer_follows_last_marker() {
        assert_eq!(extract_answer(&[span("x"), free(" answer: 1608 ")]), "1608");
        assert_eq!(extract_answer(&[free("no marker here")]), "");
        assert_eq!(extract_answer(&[free("answer: a answer: b")]), "b");
        assert_eq!(
            extract_answer(&[free("answer: a"), span("answer: z"), free("then")]),
            "a"
        );
        assert_eq!(extract_answer(&[]), "");
    }
}
