//! Desk-scale ablation sweeps: beam size, keyword interleaving with and
//! without adaptive beam, and retrieval-key strategy.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::BackendSpec;
use crate::corpus::{DocumentSet, KeyStrategy};
use crate::decoder::DecodeConfig;
use crate::engine::{build_backend, BuildOptions, Engine, IndexBundle};
use crate::prompt::PromptTemplate;
use crate::Error;

use super::{evaluate_all, EvalReport, QaExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricColumn {
    F1,
    HitsAt1,
}

impl MetricColumn {
    fn header(self) -> &'static str {
        match self {
            MetricColumn::F1 => "F1",
            MetricColumn::HitsAt1 => "Hits@1",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// One cell per label column.
    pub labels: Vec<String>,
    pub mean_f1: f64,
    pub hits_at_1: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub title: String,
    pub label_columns: Vec<String>,
    pub metrics: Vec<MetricColumn>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Metrics are shown as percentages with one decimal.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("{}\n\n|", self.title);
        for c in &self.label_columns {
            let _ = write!(out, " {c} |");
        }
        for m in &self.metrics {
            let _ = write!(out, " {} |", m.header());
        }
        out.push_str("\n|");
        for _ in 0..self.label_columns.len() + self.metrics.len() {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push('|');
            for l in &row.labels {
                let _ = write!(out, " {l} |");
            }
            for m in &self.metrics {
                let v = match m {
                    MetricColumn::F1 => row.mean_f1,
                    MetricColumn::HitsAt1 => row.hits_at_1,
                };
                let _ = write!(out, " {:.1} |", 100.0 * v);
            }
            out.push('\n');
        }
        out
    }

    pub fn row(&self, labels: &[&str]) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.labels.iter().map(String::as_str).eq(labels.iter().copied()))
    }
}

fn measure(engine: &Engine, dataset: &[QaExample], parallel: usize, labels: Vec<String>) -> Result<AblationRow, Error> {
    let rows = evaluate_all(engine, dataset, parallel)?;
    let report = EvalReport::from_rows(&rows, serde_json::Value::Null);
    Ok(AblationRow {
        labels,
        mean_f1: report.mean_f1,
        hits_at_1: report.hits_at_1,
        count: report.count,
    })
}

fn mark(on: bool) -> String {
    if on { "✓" } else { "✗" }.to_string()
}

/// Evaluate `engine` once per beam size; rows come out in ascending beam
/// order whatever order `beams` is given in.
pub fn ablation_beam(
    engine: &Engine,
    dataset: &[QaExample],
    beams: &[usize],
    parallel: usize,
) -> Result<AblationTable, Error> {
    let mut beams = beams.to_vec();
    beams.sort_unstable();
    beams.dedup();
    let mut rows = Vec::with_capacity(beams.len());
    for b in beams {
        let decode = DecodeConfig {
            beam_size: b,
            ..engine.decode.clone()
        };
        decode.validate()?;
        rows.push(measure(
            &engine.with_decode(decode),
            dataset,
            parallel,
            vec![b.to_string()],
        )?);
    }
    Ok(AblationTable {
        title: "Effect of beam size".into(),
        label_columns: vec!["Beam".into()],
        metrics: vec![MetricColumn::F1, MetricColumn::HitsAt1],
        rows,
    })
}

/// Three configurations: no keywords without adaptive beam, keywords
/// without adaptive beam, keywords with adaptive beam. `plain` and
/// `keywords` are the prompt templates without and with hint keywords.
pub fn ablation_interleave(
    engine: &Engine,
    dataset: &[QaExample],
    plain: &PromptTemplate,
    keywords: &PromptTemplate,
    parallel: usize,
) -> Result<AblationTable, Error> {
    let grid = [(false, false), (true, false), (true, true)];
    let mut rows = Vec::with_capacity(grid.len());
    for (kw, adaptive) in grid {
        let decode = DecodeConfig {
            adaptive_beam: adaptive,
            ..engine.decode.clone()
        };
        let template = if kw { keywords } else { plain };
        let e = engine.with_decode(decode).with_template(template.clone());
        rows.push(measure(&e, dataset, parallel, vec![mark(kw), mark(adaptive)])?);
    }
    Ok(AblationTable {
        title: "Interleaving unconstrained keywords with adaptive beam".into(),
        label_columns: vec!["Unconst. Keywords".into(), "Adaptive Beam".into()],
        metrics: vec![MetricColumn::F1, MetricColumn::HitsAt1],
        rows,
    })
}

/// Everything a strategy sweep shares across strategies.
#[derive(Clone, Debug)]
pub struct StrategySweep {
    pub build: BuildOptions,
    pub extra_vocab: Vec<String>,
    pub backend: BackendSpec,
    pub lm_train: Option<PathBuf>,
    pub decode: DecodeConfig,
    pub template: PromptTemplate,
    pub parallel: usize,
}

/// Build one index per strategy from `docs` and evaluate each end to end.
/// Rows follow [`KeyStrategy::ALL`] restricted to `strategies`.
pub fn ablation_strategies(
    docs: &DocumentSet,
    dataset: &[QaExample],
    strategies: &[KeyStrategy],
    sweep: &StrategySweep,
) -> Result<AblationTable, Error> {
    let mut rows = Vec::new();
    for strategy in KeyStrategy::ALL.into_iter().filter(|s| strategies.contains(s)) {
        let options = BuildOptions {
            strategy,
            ..sweep.build.clone()
        };
        let bundle = Arc::new(IndexBundle::build(docs, &options, &sweep.extra_vocab)?);
        let lm = build_backend(&sweep.backend, &bundle, sweep.lm_train.as_deref())?;
        let decode = DecodeConfig {
            strategy,
            min_substring_len: options.min_substring_len,
            ..sweep.decode.clone()
        };
        decode.validate()?;
        let engine = Engine::new(bundle, lm, decode, sweep.template.clone());
        rows.push(measure(
            &engine,
            dataset,
            sweep.parallel,
            vec![strategy_label(strategy).into()],
        )?);
    }
    Ok(AblationTable {
        title: "Comparison of retrieval keys".into(),
        label_columns: vec!["Retrieval Key".into()],
        metrics: vec![MetricColumn::HitsAt1],
        rows,
    })
}

pub fn strategy_label(s: KeyStrategy) -> &'static str {
    match s {
        KeyStrategy::Title => "Title",
        KeyStrategy::ParagraphWithTitle => "Paragraph with Title",
        KeyStrategy::Paragraph => "Paragraph",
        KeyStrategy::SentenceWithTitle => "Sentence with Title",
        KeyStrategy::Sentence => "Sentence",
        KeyStrategy::Proposition => "Proposition",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_layout() {
        let t = AblationTable {
            title: "T".into(),
            label_columns: vec!["Beam".into()],
            metrics: vec![MetricColumn::F1, MetricColumn::HitsAt1],
            rows: vec![AblationRow {
                labels: vec!["1".into()],
                mean_f1: 0.5,
                hits_at_1: 0.25,
                count: 4,
            }],
        };
        assert_eq!(
            t.to_markdown(),
            "T\n\n| Beam | F1 | Hits@1 |\n|---|---|---|\n| 1 | 50.0 | 25.0 |\n"
        );
        assert!(t.row(&["1"]).is_some());
        assert!(t.row(&["2"]).is_none());
    }
}
