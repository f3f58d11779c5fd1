//! Index bundles on disk and the engine that decodes against them.
//!
//! A bundle directory holds everything a decode run needs besides the model:
//!
//! ```text
//! index.rfmi   FM-index over the key token stream
//! keys.jsonl   key surfaces and their source documents
//! vocab.txt    tokenizer table
//! meta.json    build parameters
//! docs.jsonl   source documents (title strategy only, for paragraph ranking)
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, RunConfig};
use crate::corpus::{extract_keys, DocumentSet, KeyStrategy, RetrievalKeySet, TfIdf, TITLE_DELIMITER};
use crate::decoder::{DecodeConfig, Decoded, Decoder, GenerationOutput, Segment};
use crate::eval::span_texts;
use crate::fm_index::{FmIndex, DEFAULT_SAMPLE_RATE};
use crate::lm::{LanguageModel, NGramLm, RemoteConfig, RemoteLm, UniformLm};
use crate::prompt::PromptTemplate;
use crate::tokenizer::{Scheme, TokenId, Vocab, EOS, KEY_CLOSE, KEY_OPEN};
use crate::Error;

pub const BUNDLE_FORMAT: &str = "keyweave-index";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub strategy: KeyStrategy,
    pub scheme: Scheme,
    pub min_substring_len: usize,
    pub sample_rate: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            strategy: KeyStrategy::Proposition,
            scheme: Scheme::Byte,
            min_substring_len: 8,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format: String,
    pub version: u32,
    pub strategy: KeyStrategy,
    pub scheme: Scheme,
    pub min_substring_len: usize,
    pub sample_rate: u32,
    pub fingerprint: String,
    pub vocab_size: usize,
    pub keys: usize,
    pub text_len: usize,
}

#[derive(Clone, Debug)]
pub struct IndexBundle {
    pub vocab: Vocab,
    pub keys: RetrievalKeySet,
    pub index: FmIndex,
    pub meta: BundleMeta,
    /// Source documents, kept for the title strategy.
    pub docs: Option<DocumentSet>,
}

/// Texts a corpus contributes to a word vocabulary: bodies, titles,
/// sections and the title delimiter.
pub fn vocab_texts(docs: &DocumentSet) -> Vec<&str> {
    let mut texts = Vec::with_capacity(docs.len() * 3 + 1);
    for d in &docs.docs {
        texts.extend([d.title.as_str(), d.section.as_str(), d.text.as_str()]);
    }
    texts.push(TITLE_DELIMITER);
    texts
}

impl IndexBundle {
    /// Build vocabulary, keys and index from a corpus. `extra_vocab` adds
    /// word-scheme surfaces that occur outside the corpus (prompts, model
    /// training text).
    pub fn build(docs: &DocumentSet, options: &BuildOptions, extra_vocab: &[String]) -> Result<Self, Error> {
        let vocab = match options.scheme {
            Scheme::Word => {
                let mut texts = vocab_texts(docs);
                texts.extend(extra_vocab.iter().map(String::as_str));
                Vocab::words(texts)?
            }
            scheme => Vocab::build(docs.texts(), scheme)?,
        };
        Self::build_with_vocab(docs, options, vocab)
    }

    pub fn build_with_vocab(docs: &DocumentSet, options: &BuildOptions, vocab: Vocab) -> Result<Self, Error> {
        if options.min_substring_len == 0 {
            return Err(Error::Usage("min_substring_len must be at least 1".into()));
        }
        let keys = extract_keys(docs, options.strategy, &vocab)?;
        let index = FmIndex::from_keys(&keys, options.sample_rate)?;
        let meta = BundleMeta {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            strategy: options.strategy,
            scheme: vocab.scheme(),
            min_substring_len: options.min_substring_len,
            sample_rate: options.sample_rate,
            fingerprint: format!("{:016x}", vocab.fingerprint()),
            vocab_size: vocab.len(),
            keys: keys.len(),
            text_len: index.text_len(),
        };
        let docs = (options.strategy == KeyStrategy::Title).then(|| docs.clone());
        Ok(Self {
            vocab,
            keys,
            index,
            meta,
            docs,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), Error> {
        std::fs::create_dir_all(dir)?;
        self.index.save(&dir.join("index.rfmi"))?;
        self.keys.save(&dir.join("keys.jsonl"))?;
        self.vocab.save(&dir.join("vocab.txt"))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(dir.join("meta.json"), meta + "\n")?;
        if let Some(docs) = &self.docs {
            docs.save_jsonl(&dir.join("docs.jsonl"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, Error> {
        if !dir.is_dir() {
            return Err(Error::Data(format!("index bundle {} not found", dir.display())));
        }
        let meta_text = std::fs::read_to_string(dir.join("meta.json"))?;
        let meta: BundleMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Data(format!("meta.json: {e}")))?;
        if meta.format != BUNDLE_FORMAT || meta.version != BUNDLE_VERSION {
            return Err(Error::Data(format!(
                "unsupported bundle {} v{}",
                meta.format, meta.version
            )));
        }
        let vocab = Vocab::load(&dir.join("vocab.txt"))?;
        let index = FmIndex::load(&dir.join("index.rfmi"))?;
        index.check_fingerprint(vocab.fingerprint())?;
        let keys = RetrievalKeySet::load(&dir.join("keys.jsonl"), &vocab)?;
        if keys.vocab_fingerprint != vocab.fingerprint() || keys.strategy != meta.strategy {
            return Err(Error::Data(
                "keys.jsonl does not belong to this vocabulary/strategy".into(),
            ));
        }
        if keys.len() != index.key_count() {
            return Err(Error::Data(format!(
                "keys.jsonl has {} keys, index has {}",
                keys.len(),
                index.key_count()
            )));
        }
        let docs_path = dir.join("docs.jsonl");
        let docs = if docs_path.exists() {
            Some(crate::corpus::load_corpus(
                &docs_path,
                crate::corpus::CorpusFormat::Passages,
            )?)
        } else {
            None
        };
        Ok(Self {
            vocab,
            keys,
            index,
            meta,
            docs,
        })
    }

    /// Model training sequences derived from the keys: `<< key >> </s>`.
    pub fn key_training_sequences(&self) -> Vec<Vec<TokenId>> {
        self.keys
            .keys
            .iter()
            .map(|k| {
                let mut s = Vec::with_capacity(k.token_form.len() + 3);
                s.push(KEY_OPEN);
                s.extend_from_slice(&k.token_form);
                s.extend([KEY_CLOSE, EOS]);
                s
            })
            .collect()
    }
}

/// One training sequence per non-empty line, markers recognized, `</s>`
/// appended.
pub fn training_sequences(vocab: &Vocab, text: &str) -> Result<Vec<Vec<TokenId>>, Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut s = vocab.encode_marked(l)?;
            s.push(EOS);
            Ok(s)
        })
        .collect()
}

/// Instantiate a scoring backend for `bundle`.
pub fn build_backend(
    spec: &BackendSpec,
    bundle: &IndexBundle,
    lm_train: Option<&Path>,
) -> Result<Arc<dyn LanguageModel>, Error> {
    let fp = bundle.vocab.fingerprint();
    let v = bundle.vocab.len();
    Ok(match spec {
        BackendSpec::Uniform => Arc::new(UniformLm::new(v, fp)),
        BackendSpec::NGram(order) => {
            let seqs = match lm_train {
                Some(path) => training_sequences(&bundle.vocab, &std::fs::read_to_string(path)?)?,
                None => bundle.key_training_sequences(),
            };
            Arc::new(NGramLm::train(&seqs, *order, v, fp)?)
        }
        BackendSpec::Remote(url) => Arc::new(RemoteLm::new(RemoteConfig::new(url.clone(), v, fp))),
    })
}

/// A loaded bundle, a backend, decode settings and a prompt template.
#[derive(Clone)]
pub struct Engine {
    pub bundle: Arc<IndexBundle>,
    pub lm: Arc<dyn LanguageModel>,
    pub decode: DecodeConfig,
    pub template: PromptTemplate,
    tfidf: Option<Arc<TfIdf>>,
}

impl Engine {
    pub fn new(
        bundle: Arc<IndexBundle>,
        lm: Arc<dyn LanguageModel>,
        decode: DecodeConfig,
        template: PromptTemplate,
    ) -> Self {
        let tfidf = bundle.docs.as_ref().map(|d| Arc::new(TfIdf::new(&d.docs)));
        Self {
            bundle,
            lm,
            decode,
            template,
            tfidf,
        }
    }

    pub fn from_config(config: &RunConfig) -> Result<Self, Error> {
        let bundle = Arc::new(IndexBundle::load(&config.index)?);
        let spec = config.backend_spec().map_err(Error::Usage)?;
        let lm = build_backend(&spec, &bundle, config.lm_train.as_deref())?;
        let decode = config
            .decode_config(bundle.meta.strategy, bundle.meta.min_substring_len)
            .map_err(Error::Usage)?;
        decode.validate()?;
        let template = PromptTemplate::resolve(&config.prompt_template).map_err(Error::Usage)?;
        Ok(Self::new(bundle, lm, decode, template))
    }

    /// Same bundle and backend with different decode settings.
    pub fn with_decode(&self, decode: DecodeConfig) -> Self {
        Self { decode, ..self.clone() }
    }

    pub fn with_template(&self, template: PromptTemplate) -> Self {
        Self {
            template,
            ..self.clone()
        }
    }

    pub fn decoder(&self) -> Result<Decoder<'_>, Error> {
        Ok(Decoder::new(
            &self.bundle.index,
            self.lm.as_ref(),
            &self.bundle.vocab,
            &self.bundle.keys,
            self.decode.clone(),
        )?)
    }

    pub fn prompt_tokens(&self, question: &str) -> Result<Vec<TokenId>, Error> {
        Ok(self.bundle.vocab.encode_marked(&self.template.render(question))?)
    }

    pub fn generate(&self, question: &str) -> Result<Decoded, Error> {
        let prompt = self.prompt_tokens(question)?;
        Ok(self.decoder()?.decode(&prompt)?)
    }

    /// Evidence passages of an output. Under the title strategy each title
    /// span is followed by the best-matching paragraph (tf·idf against the
    /// question) among the documents it resolved to.
    pub fn evidence(&self, question: &str, output: &GenerationOutput) -> Vec<String> {
        let (Some(tfidf), Some(docs)) = (&self.tfidf, &self.bundle.docs) else {
            return span_texts(output);
        };
        output
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Constrained { text, doc_ids, .. } => {
                    let para = tfidf
                        .best(question, doc_ids)
                        .and_then(|id| docs.get(id))
                        .map(|d| d.text.as_str());
                    Some(match para {
                        Some(p) => format!("{text} {p}"),
                        None => text.clone(),
                    })
                }
                Segment::Free { .. } => None,
            })
            .collect()
    }
}
