//! Next-token scoring backends.
//!
//! The decoder only ever sees dense log-probability vectors over the shared
//! vocabulary; everything else about a model stays behind [`LanguageModel`].

mod ngram;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::TokenId;

pub use ngram::NGramLm;
pub use remote::{RemoteConfig, RemoteLm};

/// Tolerance for a vector's log-sum-exp to be treated as zero.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("vocab fingerprint mismatch: model has {model:016x}, request has {request:016x}")]
    FingerprintMismatch { model: u64, request: u64 },
    #[error("n-gram order must be in 1..=5, got {0}")]
    BadOrder(usize),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("token {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: TokenId, vocab_size: usize },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid backend spec {0:?}")]
    BadSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogProbRequest {
    pub fingerprint: u64,
    pub prefixes: Vec<Vec<TokenId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogProbResponse {
    /// One vector of length `vocab_size` per prefix, in request order.
    pub logprobs: Vec<Vec<f64>>,
}

pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn fingerprint(&self) -> u64;

    fn logprobs(&self, request: &LogProbRequest) -> Result<LogProbResponse, LmError>;

    fn check_fingerprint(&self, request: u64) -> Result<(), LmError> {
        if request == self.fingerprint() {
            Ok(())
        } else {
            Err(LmError::FingerprintMismatch {
                model: self.fingerprint(),
                request,
            })
        }
    }
}

/// Every token equally likely.
#[derive(Clone, Debug)]
pub struct UniformLm {
    vocab_size: usize,
    fingerprint: u64,
}

impl UniformLm {
    pub fn new(vocab_size: usize, fingerprint: u64) -> Self {
        Self {
            vocab_size,
            fingerprint,
        }
    }
}

impl LanguageModel for UniformLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn logprobs(&self, request: &LogProbRequest) -> Result<LogProbResponse, LmError> {
        self.check_fingerprint(request.fingerprint)?;
        let lp = -(self.vocab_size as f64).ln();
        Ok(LogProbResponse {
            logprobs: vec![vec![lp; self.vocab_size]; request.prefixes.len()],
        })
    }
}

/// `ln Σ exp(v)`, stable for large negative entries and `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// True when `v` is a log-distribution: no NaN, log-sum-exp within tolerance of 0.
pub fn is_normalized(v: &[f64]) -> bool {
    !v.iter().any(|x| x.is_nan()) && log_sum_exp(v).abs() <= NORMALIZATION_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_flat_and_batched() {
        let lm = UniformLm::new(262, 9);
        let resp = lm
            .logprobs(&LogProbRequest {
                fingerprint: 9,
                prefixes: vec![vec![], vec![7], vec![7, 8]],
            })
            .unwrap();
        assert_eq!(resp.logprobs.len(), 3);
        for v in &resp.logprobs {
            assert_eq!(v.len(), 262);
            assert!(v.iter().all(|&x| x == -(262f64).ln()));
            assert!(is_normalized(v));
        }
    }

    #[test]
    fn fingerprint_is_checked() {
        let lm = UniformLm::new(4, 1);
        let err = lm
            .logprobs(&LogProbRequest {
                fingerprint: 2,
                prefixes: vec![vec![]],
            })
            .unwrap_err();
        assert!(matches!(err, LmError::FingerprintMismatch { model: 1, request: 2 }));
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.5f64.ln(), 0.5f64.ln(), f64::NEG_INFINITY])).abs() < 1e-12);
    }
}
