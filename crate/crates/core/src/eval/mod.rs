//! Question-answering evaluation: datasets, per-example rows, reports,
//! attribution export and the ablation tables.

mod ablation;
mod metrics;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{DecodeError, GenerationOutput};
use crate::engine::Engine;
use crate::Error;

pub use ablation::{
    ablation_beam, ablation_interleave, ablation_strategies, strategy_label, AblationRow, AblationTable, MetricColumn,
    StrategySweep,
};
pub use metrics::{answer_tokens, contains_answer, evidence_text, hits_at_1, normalize_answer, span_texts, token_f1};

pub const HITS_DEFINITION: &str = "Hits@1 = 1 when a constrained span of the top beam (title spans expanded with their best paragraph) contains a gold answer as a contiguous run of normalized tokens, or when a resolved document id is among the gold document ids; 0 otherwise.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("question {0} has no gold answers")]
    NoGoldAnswers(String),
    #[error("duplicate question_id `{id}` at line {line}")]
    DuplicateQuestion { id: String, line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question_id: String,
    pub question: String,
    #[serde(rename = "answers", alias = "gold_answers")]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_doc_ids: Option<Vec<String>>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaExample>, EvalError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: QaExample = serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if ex.gold_answers.is_empty() {
            return Err(EvalError::NoGoldAnswers(ex.question_id));
        }
        if !seen.insert(ex.question_id.clone()) {
            return Err(EvalError::DuplicateQuestion {
                id: ex.question_id,
                line: i + 1,
            });
        }
        out.push(ex);
    }
    if out.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, dataset: &[QaExample]) -> Result<(), EvalError> {
    let mut out = String::new();
    for ex in dataset {
        out.push_str(&serde_json::to_string(ex).expect("examples serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub question_id: String,
    pub question: String,
    pub answer: String,
    pub answer_f1: f64,
    pub hits_at_1: u8,
    pub evidence_text: String,
    pub doc_ids: Vec<String>,
    pub score: Option<f64>,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Row plus the top-beam output it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub question_id: String,
    #[serde(flatten)]
    pub output: GenerationOutput,
}

/// Input for an external attribution (NLI) scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub question_id: String,
    pub question: String,
    pub answer: String,
    pub evidence_text: String,
    pub nli_input: String,
}

impl AttributionRecord {
    pub fn from_row(row: &ExampleRow) -> Self {
        Self {
            question_id: row.question_id.clone(),
            question: row.question.clone(),
            answer: row.answer.clone(),
            evidence_text: row.evidence_text.clone(),
            nli_input: format!(
                "hypothesis: {} premise: The answer to the question '{}' is '{}'",
                row.evidence_text, row.question, row.answer
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits_definition: String,
    pub config: serde_json::Value,
    pub count: usize,
    pub mean_f1: f64,
    pub hits_at_1: f64,
    pub errors: usize,
}

impl EvalReport {
    /// Aggregate rows; `rows` order does not matter.
    pub fn from_rows(rows: &[ExampleRow], config: serde_json::Value) -> Self {
        let mut sorted: Vec<&ExampleRow> = rows.iter().collect();
        sorted.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        let n = sorted.len();
        let (f1, hits) = sorted
            .iter()
            .fold((0.0, 0usize), |(f, h), r| (f + r.answer_f1, h + r.hits_at_1 as usize));
        Self {
            hits_definition: HITS_DEFINITION.to_string(),
            config,
            count: n,
            mean_f1: if n == 0 { 0.0 } else { f1 / n as f64 },
            hits_at_1: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            errors: sorted.iter().filter(|r| r.error.is_some()).count(),
        }
    }
}

/// Decode one example and score its top beam. Dead-ends and other decode
/// failures become zero-scored rows; backend and setup failures propagate.
pub fn evaluate_example(engine: &Engine, ex: &QaExample) -> Result<(ExampleRow, Option<GenerationOutput>), Error> {
    let failed = |reason: String| ExampleRow {
        question_id: ex.question_id.clone(),
        question: ex.question.clone(),
        answer: String::new(),
        answer_f1: 0.0,
        hits_at_1: 0,
        evidence_text: String::new(),
        doc_ids: Vec::new(),
        score: None,
        truncated: false,
        error: Some(reason),
    };
    let decoded = match engine.generate(&ex.question) {
        Ok(d) => d,
        Err(Error::Decode(e @ (DecodeError::DeadEnd { .. } | DecodeError::EmptyPrompt))) => {
            return Ok((failed(e.to_string()), None));
        }
        Err(e) => return Err(e),
    };
    let Some(top) = decoded.outputs.into_iter().next() else {
        return Ok((failed("no output".into()), None));
    };
    let evidence = engine.evidence(&ex.question, &top);
    let doc_ids = top.doc_ids();
    let hit = hits_at_1(&evidence, &doc_ids, &ex.gold_answers, ex.gold_doc_ids.as_deref());
    let row = ExampleRow {
        question_id: ex.question_id.clone(),
        question: ex.question.clone(),
        answer: top.answer.clone(),
        answer_f1: token_f1(&top.answer, &ex.gold_answers),
        hits_at_1: hit as u8,
        evidence_text: evidence.join(" "),
        doc_ids,
        score: Some(top.score),
        truncated: top.truncated,
        error: None,
    };
    Ok((row, Some(top)))
}

/// Evaluate a whole dataset in memory with up to `parallel` worker threads.
/// Rows come back in dataset order.
pub fn evaluate_all(engine: &Engine, dataset: &[QaExample], parallel: usize) -> Result<Vec<ExampleRow>, Error> {
    let pool = thread_pool(parallel)?;
    pool.install(|| {
        dataset
            .par_iter()
            .map(|ex| evaluate_example(engine, ex).map(|(row, _)| row))
            .collect()
    })
}

fn thread_pool(parallel: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Error> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let content = fs::read_to_string(path)?;
    // a torn final line from an interrupted run is dropped
    Ok(content.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Error> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("records serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Evaluate `dataset` into `out_dir`:
///
/// - `rows.jsonl`: one [`ExampleRow`] per question, sorted by id
/// - `outputs.jsonl`: the top-beam output per question
/// - `autoais.jsonl`: attribution-scorer input per question
/// - `report.json`: aggregates plus the config echo
///
/// Rows already present in `rows.jsonl` are kept and their questions
/// skipped, so an interrupted run resumes where it stopped.
pub fn run_eval(
    engine: &Engine,
    dataset: &[QaExample],
    out_dir: &Path,
    parallel: usize,
    config_echo: serde_json::Value,
) -> Result<EvalReport, Error> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset.into());
    }
    fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join("rows.jsonl");
    let outputs_path = out_dir.join("outputs.jsonl");
    let wanted: HashSet<&str> = dataset.iter().map(|e| e.question_id.as_str()).collect();

    let mut rows: BTreeMap<String, ExampleRow> = read_jsonl::<ExampleRow>(&rows_path)?
        .into_iter()
        .filter(|r| wanted.contains(r.question_id.as_str()))
        .map(|r| (r.question_id.clone(), r))
        .collect();
    let mut outputs: BTreeMap<String, OutputRecord> = read_jsonl::<OutputRecord>(&outputs_path)?
        .into_iter()
        .filter(|o| rows.contains_key(&o.question_id))
        .map(|o| (o.question_id.clone(), o))
        .collect();
    // rewrite the checkpoint without any torn line before appending to it
    write_jsonl(&rows_path, &rows.values().collect::<Vec<_>>())?;
    write_jsonl(&outputs_path, &outputs.values().collect::<Vec<_>>())?;

    let todo: Vec<&QaExample> = dataset.iter().filter(|e| !rows.contains_key(&e.question_id)).collect();
    let sinks = Mutex::new((
        fs::OpenOptions::new().append(true).open(&rows_path)?,
        fs::OpenOptions::new().append(true).open(&outputs_path)?,
        Vec::new(),
    ));
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = todo.len();
    let pool = thread_pool(parallel)?;
    pool.install(|| {
        todo.par_iter().try_for_each(|ex| -> Result<(), Error> {
            let (row, output) = evaluate_example(engine, ex)?;
            let record = output.map(|output| OutputRecord {
                question_id: ex.question_id.clone(),
                output,
            });
            let mut guard = sinks.lock().unwrap_or_else(|e| e.into_inner());
            let (rows_file, outputs_file, fresh) = &mut *guard;
            writeln!(rows_file, "{}", serde_json::to_string(&row).expect("rows serialize"))?;
            if let Some(rec) = &record {
                writeln!(
                    outputs_file,
                    "{}",
                    serde_json::to_string(rec).expect("outputs serialize")
                )?;
            }
            fresh.push((row, record));
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if n.is_multiple_of(50) || n == total {
                eprintln!("eval: {n}/{total}");
            }
            Ok(())
        })
    })?;
    let (_, _, fresh) = sinks.into_inner().unwrap_or_else(|e| e.into_inner());
    for (row, record) in fresh {
        if let Some(rec) = record {
            outputs.insert(rec.question_id.clone(), rec);
        }
        rows.insert(row.question_id.clone(), row);
    }

    let rows: Vec<ExampleRow> = rows.into_values().collect();
    write_jsonl(&rows_path, &rows)?;
    write_jsonl(&outputs_path, &outputs.into_values().collect::<Vec<_>>())?;
    let attribution: Vec<AttributionRecord> = rows.iter().map(AttributionRecord::from_row).collect();
    write_jsonl(&out_dir.join("autoais.jsonl"), &attribution)?;
    let report = EvalReport::from_rows(&rows, config_echo);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out_dir.join("report.json"), text + "\n")?;
    Ok(report)
}
