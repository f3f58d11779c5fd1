//! Crate-level error and its coarse classification for exit codes.

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::decoder::DecodeError;
use crate::eval::EvalError;
use crate::fm_index::IndexError;
use crate::lm::LmError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What went wrong, at the granularity a caller can act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Decode,
    Transport,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Decode => 3,
            ErrorKind::Transport => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Decode => "decode",
            ErrorKind::Transport => "transport",
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) => ErrorKind::Usage,
            Error::Lm(e) => lm_kind(e),
            Error::Decode(DecodeError::Lm(e)) => lm_kind(e),
            Error::Decode(DecodeError::BadConfig(_)) => ErrorKind::Usage,
            Error::Decode(DecodeError::FingerprintMismatch { .. } | DecodeError::VocabSize { .. }) => ErrorKind::Data,
            Error::Decode(_) => ErrorKind::Decode,
            _ => ErrorKind::Data,
        }
    }
}

fn lm_kind(e: &LmError) -> ErrorKind {
    match e {
        LmError::Transport(_) => ErrorKind::Transport,
        LmError::BadOrder(_) | LmError::BadSpec(_) => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_map_to_exit_codes() {
        assert_eq!(Error::Usage("x".into()).kind().exit_code(), 1);
        assert_eq!(Error::Data("x".into()).kind().exit_code(), 2);
        let dead = DecodeError::DeadEnd {
            step: 0,
            partial: String::new(),
            score: 0.0,
            trace: Box::default(),
        };
        assert_eq!(Error::from(dead).kind().exit_code(), 3);
        let transport = DecodeError::Lm(LmError::Transport("down".into()));
        assert_eq!(Error::from(transport).kind().exit_code(), 4);
    }
}
