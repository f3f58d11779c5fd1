//! Span cursors: a match state that knows whether the span must start at a
//! key boundary.
//!
//! An anchored span is matched as the pattern `<key_end> span`. The first key
//! has no `KEY_END` before it; cyclically it is preceded by the single `SEP`,
//! so an anchored cursor carries a second range seeded with `SEP`.

use std::collections::BTreeMap;

use super::{FmIndex, IndexError, KeyHit, MatchRange};
use crate::tokenizer::{TokenId, KEY_END, SEP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Anchor {
    /// Span may start at any position inside a key.
    Anywhere,
    /// Span must start at the first token of a key.
    KeyStart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpanCursor {
    anchor: Anchor,
    parts: [MatchRange; 2],
    len: u32,
}

impl SpanCursor {
    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    /// Number of span tokens matched so far.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Occurrences of the span (respecting the anchor).
    pub fn count(&self) -> usize {
        self.parts.iter().map(MatchRange::len).sum()
    }

    /// True when no occurrence is left.
    pub fn is_dead(&self) -> bool {
        self.count() == 0
    }

    pub fn ranges(&self) -> &[MatchRange; 2] {
        &self.parts
    }
}

impl FmIndex {
    /// Cursor for the empty span.
    pub fn cursor(&self, anchor: Anchor) -> SpanCursor {
        let parts = match anchor {
            Anchor::Anywhere => [self.root(), MatchRange::empty(0)],
            Anchor::KeyStart => [self.extend(self.root(), KEY_END), self.extend(self.root(), SEP)],
        };
        SpanCursor { anchor, parts, len: 0 }
    }

    pub fn advance(&self, cursor: &SpanCursor, token: TokenId) -> SpanCursor {
        SpanCursor {
            anchor: cursor.anchor,
            parts: cursor.parts.map(|r| self.extend(r, token)),
            len: cursor.len + 1,
        }
    }

    /// Tokens that can extend the span, ascending; may include `KEY_END`.
    pub fn cursor_continuations(&self, cursor: &SpanCursor) -> Vec<(TokenId, SpanCursor)> {
        let empty_parts = cursor.parts.map(|r| MatchRange::empty(r.depth + 1));
        let mut merged: BTreeMap<TokenId, [MatchRange; 2]> = BTreeMap::new();
        for (i, part) in cursor.parts.iter().enumerate() {
            for (t, r) in self.continuations(*part) {
                merged.entry(t).or_insert(empty_parts)[i] = r;
            }
        }
        merged
            .into_iter()
            .map(|(t, parts)| {
                (
                    t,
                    SpanCursor {
                        anchor: cursor.anchor,
                        parts,
                        len: cursor.len + 1,
                    },
                )
            })
            .collect()
    }

    /// Continuation tokens only.
    pub fn next_tokens(&self, cursor: &SpanCursor) -> Vec<TokenId> {
        self.cursor_continuations(cursor).into_iter().map(|(t, _)| t).collect()
    }

    /// True when the span is non-empty and some occurrence ends a key.
    pub fn completes_key(&self, cursor: &SpanCursor) -> bool {
        cursor.len > 0 && !self.advance(cursor, KEY_END).is_dead()
    }

    /// Up to `limit` occurrences of the span start, ascending row order.
    pub fn cursor_locate(&self, cursor: &SpanCursor, limit: usize) -> Result<Vec<KeyHit>, IndexError> {
        if limit == 0 {
            return Err(IndexError::InvalidLimit);
        }
        let shift = match cursor.anchor {
            Anchor::Anywhere => 0,
            Anchor::KeyStart => 1,
        };
        let mut out = Vec::new();
        for part in &cursor.parts {
            if out.len() >= limit {
                break;
            }
            for pos in self.locate_positions(*part, limit - out.len())? {
                out.push(self.key_hit((pos + shift) % self.text_len()));
            }
        }
        Ok(out)
    }

    /// Sorted distinct ids of keys that contain the span (up to `limit`
    /// occurrences examined).
    pub fn cursor_key_ids(&self, cursor: &SpanCursor, limit: usize) -> Result<Vec<u32>, IndexError> {
        let mut ids: Vec<u32> = self
            .cursor_locate(cursor, limit)?
            .into_iter()
            .map(|h| h.key_id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }
}
