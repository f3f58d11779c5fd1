//! Plain tf·log(N/df) ranking, used to pick a paragraph once a title key has
//! been decoded.

use std::collections::{HashMap, HashSet};

use super::Document;

/// Lowercased alphanumeric word tokens.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct TfIdf {
    doc_count: usize,
    df: HashMap<String, usize>,
    tf: HashMap<String, HashMap<String, usize>>,
}

impl TfIdf {
    pub fn new(docs: &[Document]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut tf = HashMap::new();
        for doc in docs {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for t in terms(&doc.text) {
                *counts.entry(t).or_default() += 1;
            }
            for t in counts.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            tf.insert(doc.doc_id.clone(), counts);
        }
        Self {
            doc_count: docs.len(),
            df,
            tf,
        }
    }

    pub fn score(&self, query: &str, doc_id: &str) -> f64 {
        let Some(counts) = self.tf.get(doc_id) else {
            return 0.0;
        };
        let unique: HashSet<String> = terms(query).into_iter().collect();
        unique
            .iter()
            .map(|t| {
                let tf = counts.get(t).copied().unwrap_or(0) as f64;
                let df = self.df.get(t).copied().unwrap_or(0);
                if df == 0 {
                    0.0
                } else {
                    tf * (self.doc_count as f64 / df as f64).ln()
                }
            })
            .sum()
    }

    /// Best candidate for `query`; ties keep the earlier candidate.
    pub fn best<'a>(&self, query: &str, candidates: &'a [String]) -> Option<&'a str> {
        let mut best: Option<(&str, f64)> = None;
        for c in candidates {
            let s = self.score(query, c);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: String::new(),
            section: String::new(),
            text: text.into(),
        }
    }

    #[test]
    fn rare_query_terms_win() {
        let docs = vec![
            doc("a", "the bar was renamed in 1990"),
            doc("b", "the bar is sold in the shops"),
            doc("c", "the shops are open"),
        ];
        let ranker = TfIdf::new(&docs);
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        assert_eq!(ranker.best("when was it renamed", &ids), Some("a"));
        // "the" occurs everywhere: idf = ln(1) = 0
        assert_eq!(ranker.score("the", "b"), 0.0);
        let expected = 1.0 * (3.0f64 / 1.0).ln();
        assert!((ranker.score("renamed", "a") - expected).abs() < 1e-12);
    }
}
