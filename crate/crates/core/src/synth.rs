//! Planted synthetic QA benchmark for the beam-size and interleaving sweeps.
//!
//! Every entity `e{i}` has two propositions in the corpus: the planted one
//! `e{i} p{i} a{i}`, which contains the gold answer `a{i}`, and a distractor
//! `e{i} q{i} z{i}`. The model training text pairs each entity with a
//! preferred key:
//!
//! - *easy* entities mostly see `<< e{i} p{i} a{i} >>`, so a greedy search
//!   already lands on the answer;
//! - *hard* entities mostly see `<< e{i} q{i} h{i} >>`, a key that is not in
//!   the corpus. The constraint blocks `h{i}`, leaving `e{i} q{i} z{i}`, which
//!   the model finds very unlikely; only a search that kept the
//!   `e{i} p{i}` prefix alive recovers the answer.
//!
//! The interleaved variant prefixes each key with a free hint keyword
//! `keyword : e{i} v{i}x{j}` drawn from several equally likely variants.
//! Expanding every variant without adaptive beam fills the beam with
//! copies of the majority prefix.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentSet};
use crate::eval::{save_dataset, QaExample};
use crate::prompt::PromptTemplate;
use crate::Error;

/// Prompt that opens a span on the question entity.
pub const PLAIN_TEMPLATE: &str = "<< {question}";
/// Prompt that starts with a free hint keyword.
pub const KEYWORD_TEMPLATE: &str = "keyword : {question}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub questions: usize,
    pub hard_fraction: f64,
    /// Hint keyword variants per entity.
    pub keyword_variants: usize,
    /// Training lines for the preferred / dispreferred plain key.
    pub plain_counts: (usize, usize),
    /// Training lines per keyword variant for the preferred / dispreferred key.
    pub keyword_counts: (usize, usize),
    /// Unrelated corpus documents.
    pub filler_docs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            questions: 200,
            hard_fraction: 0.5,
            keyword_variants: 8,
            plain_counts: (6, 4),
            keyword_counts: (3, 2),
            filler_docs: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticBenchmark {
    pub docs: DocumentSet,
    pub dataset: Vec<QaExample>,
    /// Model training text, one sequence per line, markers written `<<`/`>>`.
    pub lm_train: String,
    pub plain_template: PromptTemplate,
    pub keyword_template: PromptTemplate,
    /// Words that occur in prompts or training text but not in the corpus.
    pub extra_vocab: Vec<String>,
    /// Question ids whose preferred key is the blocked one.
    pub hard: Vec<String>,
}

impl SyntheticBenchmark {
    pub fn generate(config: &SynthConfig) -> Result<Self, Error> {
        if config.questions == 0 || config.keyword_variants == 0 {
            return Err(Error::Usage(
                "synthetic benchmark needs questions and keyword variants".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.hard_fraction) {
            return Err(Error::Usage("hard_fraction must lie in [0, 1]".into()));
        }
        let n = config.questions;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let n_hard = (config.hard_fraction * n as f64).round() as usize;
        let mut is_hard = vec![false; n];
        for &i in &order[..n_hard] {
            is_hard[i] = true;
        }

        let mut docs = Vec::with_capacity(2 * n + config.filler_docs);
        let mut dataset = Vec::with_capacity(n);
        let mut lines = Vec::new();
        let mut extra = vec!["keyword".to_string(), ":".to_string()];
        let mut hard = Vec::new();
        for (i, &entity_is_hard) in is_hard.iter().enumerate() {
            let e = format!("e{i}");
            docs.push(doc(format!("d{i}p"), &e, format!("{e} p{i} a{i}")));
            docs.push(doc(format!("d{i}q"), &e, format!("{e} q{i} z{i}")));
            let qid = format!("q{i:04}");
            dataset.push(QaExample {
                question_id: qid.clone(),
                question: e.clone(),
                gold_answers: vec![format!("a{i}")],
                gold_doc_ids: None,
            });
            let planted = format!("<< {e} p{i} a{i} >>");
            let blocked = format!("<< {e} q{i} h{i} >>");
            extra.push(format!("h{i}"));
            let (preferred, other) = if entity_is_hard {
                hard.push(qid);
                (&blocked, &planted)
            } else {
                (&planted, &blocked)
            };
            lines.extend(std::iter::repeat_n(preferred.clone(), config.plain_counts.0));
            lines.extend(std::iter::repeat_n(other.clone(), config.plain_counts.1));
            for j in 0..config.keyword_variants {
                let hint = format!("keyword : {e} v{i}x{j}");
                extra.push(format!("v{i}x{j}"));
                lines.extend(std::iter::repeat_n(
                    format!("{hint} {preferred}"),
                    config.keyword_counts.0,
                ));
                lines.extend(std::iter::repeat_n(format!("{hint} {other}"), config.keyword_counts.1));
            }
        }
        for k in 0..config.filler_docs {
            docs.push(doc(format!("f{k}"), &format!("f{k}"), format!("f{k} g{k} r{k}")));
            lines.push(format!("<< f{k} g{k} r{k} >>"));
        }
        let mut lm_train = lines.join("\n");
        lm_train.push('\n');
        Ok(Self {
            docs: DocumentSet::from_docs(docs)?,
            dataset,
            lm_train,
            plain_template: PromptTemplate::new("synthetic_plain", PLAIN_TEMPLATE).map_err(Error::Usage)?,
            keyword_template: PromptTemplate::new("synthetic_keyword", KEYWORD_TEMPLATE).map_err(Error::Usage)?,
            extra_vocab: extra,
            hard,
        })
    }

    /// Write `corpus.jsonl`, `dataset.jsonl`, `lm_train.txt`,
    /// `template_plain.txt`, `template_keyword.txt` and `extra_vocab.txt`.
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir)?;
        self.docs.save_jsonl(&dir.join("corpus.jsonl"))?;
        save_dataset(&dir.join("dataset.jsonl"), &self.dataset)?;
        fs::write(dir.join("lm_train.txt"), &self.lm_train)?;
        fs::write(dir.join("template_plain.txt"), self.plain_template.text())?;
        fs::write(dir.join("template_keyword.txt"), self.keyword_template.text())?;
        fs::write(dir.join("extra_vocab.txt"), self.extra_vocab.join("\n") + "\n")?;
        Ok(())
    }
}

fn doc(doc_id: String, title: &str, text: String) -> Document {
    Document {
        doc_id,
        title: title.to_string(),
        section: String::new(),
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_hard_count() {
        let b = SyntheticBenchmark::generate(&SynthConfig {
            questions: 10,
            filler_docs: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(b.docs.len(), 22);
        assert_eq!(b.dataset.len(), 10);
        assert_eq!(b.hard.len(), 5);
        // 10 plain lines + 8 variants × 5 keyword lines per entity, plus fillers
        assert_eq!(b.lm_train.lines().count(), 10 * (10 + 40) + 2);
        assert!(b.extra_vocab.contains(&"h3".to_string()));
        assert_eq!(b.plain_template.render("e3"), "<< e3");
    }

    #[test]
    fn generation_is_seeded() {
        let c = SynthConfig::default();
        let a = SyntheticBenchmark::generate(&c).unwrap();
        let b = SyntheticBenchmark::generate(&c).unwrap();
        assert_eq!(a.hard, b.hard);
        assert_eq!(a.lm_train, b.lm_train);
        let other = SyntheticBenchmark::generate(&SynthConfig { seed: 1, ..c }).unwrap();
        assert_ne!(a.hard, other.hard);
    }
}
