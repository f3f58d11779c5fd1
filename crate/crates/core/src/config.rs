//! Run configuration: one flat `key = value` file, overridable field by field.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::KeyStrategy;
use crate::decoder::DecodeConfig;
use crate::tokenizer::EOS;

/// Environment variable consulted for `remote` without an explicit URL.
pub const REMOTE_URL_ENV: &str = "RICHES_REMOTE_URL";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Uniform,
    NGram(usize),
    Remote(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("uniform", None) => Ok(Self::Uniform),
            ("ngram", None) => Ok(Self::NGram(3)),
            ("ngram", Some(order)) => order
                .parse()
                .map(Self::NGram)
                .map_err(|_| format!("bad n-gram order in backend `{s}`")),
            ("remote", Some(url)) if !url.is_empty() => Ok(Self::Remote(url.to_string())),
            ("remote", _) => std::env::var(REMOTE_URL_ENV)
                .map(Self::Remote)
                .map_err(|_| format!("backend `remote` needs a URL or {REMOTE_URL_ENV}")),
            _ => Err(format!(
                "unknown backend `{s}` (expected uniform, ngram:N or remote:URL)"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "uniform"),
            Self::NGram(n) => write!(f, "ngram:{n}"),
            Self::Remote(url) => write!(f, "remote:{url}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Index bundle directory written by `build-index`.
    pub index: PathBuf,
    /// `uniform`, `ngram:N` or `remote:URL`.
    pub backend: String,
    /// Training text for the n-gram backend, one sequence per line; `<<`
    /// and `>>` are read as markers. Defaults to the key set itself.
    pub lm_train: Option<PathBuf>,
    /// Builtin template name (`single_hop`, `multi_hop`, `plain`) or a file.
    pub prompt_template: String,
    pub seed: u64,
    pub parallel: usize,
    pub beam_size: usize,
    pub adaptive_beam: bool,
    pub max_steps: usize,
    pub max_key_tokens: usize,
    /// Defaults to the value the index was built with.
    pub min_substring_len: Option<usize>,
    pub no_repeat_keys: bool,
    pub locate_limit: usize,
    /// When set, must match the strategy the index was built with.
    pub strategy: Option<KeyStrategy>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DecodeConfig::default();
        Self {
            index: PathBuf::from("index"),
            backend: "ngram:3".to_string(),
            lm_train: None,
            prompt_template: "plain".to_string(),
            seed: 0,
            parallel: 1,
            beam_size: d.beam_size,
            adaptive_beam: d.adaptive_beam,
            max_steps: d.max_steps,
            max_key_tokens: d.max_key_tokens,
            min_substring_len: None,
            no_repeat_keys: d.no_repeat_keys,
            locate_limit: d.locate_limit,
            strategy: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, String> {
        self.backend.parse()
    }

    /// Decoder settings for an index built with `strategy` and
    /// `index_min_substring_len`.
    pub fn decode_config(&self, strategy: KeyStrategy, index_min_substring_len: usize) -> Result<DecodeConfig, String> {
        if let Some(s) = self.strategy {
            if s != strategy {
                return Err(format!("config strategy {s} does not match index strategy {strategy}"));
            }
        }
        Ok(DecodeConfig {
            beam_size: self.beam_size,
            adaptive_beam: self.adaptive_beam,
            max_steps: self.max_steps,
            max_key_tokens: self.max_key_tokens,
            strategy,
            min_substring_len: self.min_substring_len.unwrap_or(index_min_substring_len),
            no_repeat_keys: self.no_repeat_keys,
            eos_token: EOS,
            locate_limit: self.locate_limit,
        })
    }
}
