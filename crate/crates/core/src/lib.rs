//! Corpus-constrained generation: a language model decodes free text and,
//! between `<<` and `>>` markers, only token sequences that occur verbatim
//! in an indexed key corpus. An FM-index over the keys supplies the allowed
//! continuations at every step.
//!
//! Pipeline: [`corpus`] documents → retrieval keys → [`fm_index::FmIndex`];
//! a [`lm::LanguageModel`] scores tokens; [`decoder::Decoder`] runs the
//! constrained beam search; [`eval`] scores outputs against QA datasets.

pub mod bench;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod engine;
mod error;
pub mod eval;
pub mod fm_index;
pub mod lm;
pub mod prompt;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, ErrorKind};
