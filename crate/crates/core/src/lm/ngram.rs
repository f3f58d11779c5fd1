//! Interpolated Witten-Bell n-gram model.
//!
//! For a context `h` seen `c(h)` times with `T(h)` distinct followers:
//!
//! ```text
//! p(w | h) = (c(h, w) + T(h) · p(w | h')) / (c(h) + T(h))
//! ```
//!
//! where `h'` drops the oldest token of `h`. The recursion bottoms out at the
//! uniform distribution over the vocabulary; an unseen context contributes
//! nothing and the next shorter one is used instead.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{LanguageModel, LmError, LogProbRequest, LogProbResponse};
use crate::tokenizer::TokenId;

pub const MAX_ORDER: usize = 5;

#[derive(Clone, Debug, Default)]
struct ContextStats {
    total: u64,
    /// Followers sorted by token id.
    followers: Vec<(TokenId, u64)>,
}

#[derive(Clone, Debug)]
pub struct NGramLm {
    order: usize,
    vocab_size: usize,
    fingerprint: u64,
    contexts: HashMap<Vec<TokenId>, ContextStats>,
}

impl NGramLm {
    /// Count every n-gram up to `order` inside each training sequence.
    /// Contexts never cross sequence boundaries.
    pub fn train(
        sequences: &[Vec<TokenId>],
        order: usize,
        vocab_size: usize,
        fingerprint: u64,
    ) -> Result<Self, LmError> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(LmError::BadOrder(order));
        }
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(LmError::EmptyCorpus);
        }
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for seq in sequences {
            for (i, &w) in seq.iter().enumerate() {
                if w as usize >= vocab_size {
                    return Err(LmError::TokenOutOfRange { token: w, vocab_size });
                }
                for k in 0..order.min(i + 1) {
                    *raw.entry(seq[i - k..i].to_vec()).or_default().entry(w).or_default() += 1;
                }
            }
        }
        let contexts = raw
            .into_iter()
            .map(|(h, next)| {
                let mut followers: Vec<(TokenId, u64)> = next.into_iter().collect();
                followers.sort_unstable();
                let total = followers.iter().map(|&(_, c)| c).sum();
                (h, ContextStats { total, followers })
            })
            .collect();
        Ok(Self {
            order,
            vocab_size,
            fingerprint,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Next-token probabilities (not logs) after `prefix`.
    pub fn probabilities(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut p = vec![1.0 / self.vocab_size as f64; self.vocab_size];
        for k in 0..self.order {
            if k > prefix.len() {
                break;
            }
            let Some(stats) = self.contexts.get(&prefix[prefix.len() - k..]) else {
                break;
            };
            let types = stats.followers.len() as f64;
            let denom = stats.total as f64 + types;
            let keep = types / denom;
            for v in p.iter_mut() {
                *v *= keep;
            }
            for &(w, c) in &stats.followers {
                p[w as usize] += c as f64 / denom;
            }
        }
        p
    }

    /// Hex SHA-256 over the model's full count tables, independent of hash
    /// map iteration order.
    pub fn digest(&self) -> String {
        let mut entries: Vec<(&Vec<TokenId>, &ContextStats)> = self.contexts.iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut h = Sha256::new();
        h.update((self.order as u64).to_le_bytes());
        h.update((self.vocab_size as u64).to_le_bytes());
        h.update(self.fingerprint.to_le_bytes());
        for (ctx, stats) in entries {
            h.update((ctx.len() as u64).to_le_bytes());
            for t in ctx {
                h.update(t.to_le_bytes());
            }
            h.update((stats.followers.len() as u64).to_le_bytes());
            for &(w, c) in &stats.followers {
                h.update(w.to_le_bytes());
                h.update(c.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl LanguageModel for NGramLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn logprobs(&self, request: &LogProbRequest) -> Result<LogProbResponse, LmError> {
        self.check_fingerprint(request.fingerprint)?;
        Ok(LogProbResponse {
            logprobs: request
                .prefixes
                .iter()
                .map(|p| self.probabilities(p).into_iter().map(f64::ln).collect())
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::is_normalized;
    use proptest::prelude::*;

    const A: TokenId = 7;
    const B: TokenId = 8;
    const V: usize = 10;

    fn query(lm: &NGramLm, prefix: &[TokenId]) -> Vec<f64> {
        lm.logprobs(&LogProbRequest {
            fingerprint: 0,
            prefixes: vec![prefix.to_vec()],
        })
        .unwrap()
        .logprobs
        .remove(0)
    }

    #[test]
    fn unigram_witten_bell_closed_form() {
        // "a a a b": c = 4, T = 2, so p(a) = (3 + 2/V) / 6, p(b) = (1 + 2/V) / 6,
        // every unseen token 2/V / 6.
        let lm = NGramLm::train(&[vec![A, A, A, B]], 1, V, 0).unwrap();
        let p = query(&lm, &[]);
        let v = V as f64;
        assert!((p[A as usize] - ((3.0 + 2.0 / v) / 6.0).ln()).abs() < 1e-12);
        assert!((p[B as usize] - ((1.0 + 2.0 / v) / 6.0).ln()).abs() < 1e-12);
        assert!((p[0] - ((2.0 / v) / 6.0).ln()).abs() < 1e-12);
        assert!(is_normalized(&p));
    }

    #[test]
    fn bigram_prefers_observed_follower() {
        let lm = NGramLm::train(&[vec![A, B, A, B]], 2, V, 0).unwrap();
        let p = query(&lm, &[A]);
        assert!(p[B as usize] > p[A as usize]);
        // context "a": c = 2, T = 1 ; unigram: c = 4, T = 2, p1(b) = (2 + 2/V)/6
        let p1b = (2.0 + 2.0 / V as f64) / 6.0;
        let want = (2.0 + p1b) / 3.0;
        assert!((p[B as usize] - want.ln()).abs() < 1e-12);
    }

    #[test]
    fn unseen_context_backs_off() {
        let lm = NGramLm::train(&[vec![A, B, A, B]], 3, V, 0).unwrap();
        let backoff = query(&lm, &[9]);
        let unigram = query(&lm, &[]);
        assert_eq!(backoff, unigram);
        assert!(is_normalized(&query(&lm, &[A])));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(NGramLm::train(&[vec![A]], 0, V, 0), Err(LmError::BadOrder(0))));
        assert!(matches!(NGramLm::train(&[vec![A]], 6, V, 0), Err(LmError::BadOrder(6))));
        assert!(matches!(NGramLm::train(&[vec![]], 2, V, 0), Err(LmError::EmptyCorpus)));
        assert!(matches!(
            NGramLm::train(&[vec![99]], 2, V, 0),
            Err(LmError::TokenOutOfRange { token: 99, .. })
        ));
    }

    #[test]
    fn digest_is_deterministic_and_sensitive() {
        let a = NGramLm::train(&[vec![A, B, A]], 2, V, 0).unwrap();
        let b = NGramLm::train(&[vec![A, B, A]], 2, V, 0).unwrap();
        let c = NGramLm::train(&[vec![A, B, B]], 2, V, 0).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    proptest! {
        #[test]
        fn every_vector_is_normalized(
            corpus in proptest::collection::vec(proptest::collection::vec(0u32..10, 1..30), 1..5),
            order in 1usize..=5,
            prefix in proptest::collection::vec(0u32..12, 0..8),
        ) {
            let lm = NGramLm::train(&corpus, order, V, 0).unwrap();
            prop_assert!(is_normalized(&query(&lm, &prefix)));
        }
    }
}
