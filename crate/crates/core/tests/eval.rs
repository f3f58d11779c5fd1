//! Evaluation runner: per-example rows, aggregates, resume and exports.

mod common;

use std::fs;
use std::sync::Arc;

use keyweave::config::BackendSpec;
use keyweave::corpus::KeyStrategy;
use keyweave::decoder::DecodeConfig;
use keyweave::engine::{build_backend, BuildOptions, Engine, IndexBundle};
use keyweave::eval::{
    evaluate_all, hits_at_1, run_eval, token_f1, AttributionRecord, EvalReport, ExampleRow, QaExample,
};
use keyweave::prompt::PromptTemplate;
use keyweave::tokenizer::Scheme;
use keyweave::{Error, ErrorKind};

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn engine() -> Engine {
    let set = common::docs(&["marathon was renamed snickers in 1990", "mars bar was invented in 1932"]);
    let options = BuildOptions {
        strategy: KeyStrategy::Sentence,
        scheme: Scheme::Word,
        ..BuildOptions::default()
    };
    let bundle = Arc::new(IndexBundle::build(&set, &options, &strings(&["zebra"])).unwrap());
    let lm = build_backend(&BackendSpec::NGram(2), &bundle, None).unwrap();
    let decode = DecodeConfig {
        beam_size: 3,
        max_steps: 16,
        ..DecodeConfig::default()
    };
    Engine::new(
        bundle,
        lm,
        decode,
        PromptTemplate::new("open", "<< {question}").unwrap(),
    )
}

fn example(id: &str, question: &str, answer: &str) -> QaExample {
    QaExample {
        question_id: id.into(),
        question: question.into(),
        gold_answers: vec![answer.into()],
        gold_doc_ids: None,
    }
}

/// One question whose only reachable key holds the answer, one whose key
/// does not.
fn dataset() -> Vec<QaExample> {
    vec![example("q1", "marathon", "1990"), example("q2", "mars", "1850")]
}

#[test]
fn hits_examples() {
    let golds = strings(&["1990"]);
    assert!(hits_at_1(
        &strings(&["Marathon was renamed Snickers in 1990"]),
        &[],
        &golds,
        None
    ));
    assert!(!hits_at_1(
        &strings(&["Mars bar was invented in 1932"]),
        &[],
        &golds,
        None
    ));
    assert!(!hits_at_1(&[], &[], &golds, None));
    assert!(hits_at_1(&[], &strings(&["d3"]), &golds, Some(&strings(&["d1", "d3"]))));
}

#[test]
fn f1_examples() {
    assert_eq!(token_f1("Snickers", &strings(&["snickers"])), 1.0);
    assert_eq!(token_f1("in 1990", &strings(&["1932"])), 0.0);
    // 1 shared token of 2 predicted and 1 gold: P = 1/2, R = 1, F1 = 2/3
    assert!((token_f1("in 1990", &strings(&["1990"])) - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn one_hit_in_two_gives_half() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_eval(&engine(), &dataset(), dir.path(), 1, serde_json::json!({"run": "t"})).unwrap();
    assert_eq!(report.count, 2);
    assert_eq!(report.hits_at_1, 0.5);
    assert_eq!(report.errors, 0);
    assert_eq!(report.config["run"], "t");

    let rows: Vec<ExampleRow> = fs::read_to_string(dir.path().join("rows.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.iter().map(|r| r.hits_at_1).collect::<Vec<_>>(), [1, 0]);
    assert_eq!(rows[0].evidence_text, "marathon was renamed snickers in 1990");
    assert_eq!(rows[0].doc_ids, ["d0"]);
    assert_eq!(EvalReport::from_rows(&rows, report.config.clone()), report);

    let written: EvalReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);
    assert_eq!(
        fs::read_to_string(dir.path().join("outputs.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn attribution_export_pairs_evidence_and_answer() {
    let dir = tempfile::tempdir().unwrap();
    run_eval(&engine(), &dataset(), dir.path(), 1, serde_json::Value::Null).unwrap();
    let recs: Vec<AttributionRecord> = fs::read_to_string(dir.path().join("autoais.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].question_id, "q1");
    assert!(recs[0].nli_input.starts_with(
        "hypothesis: marathon was renamed snickers in 1990 premise: The answer to the question 'marathon' is '"
    ));
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_eval(&engine(), &[], dir.path(), 1, serde_json::Value::Null).unwrap_err();
    assert_eq!(err.to_string(), "empty dataset");
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn resume_keeps_finished_rows() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine();
    run_eval(&e, &dataset()[..1], dir.path(), 1, serde_json::Value::Null).unwrap();
    // mark the finished row so a recomputation would be visible, and leave a
    // torn line behind as an interrupted writer would
    let rows_path = dir.path().join("rows.jsonl");
    let mut row: ExampleRow = serde_json::from_str(fs::read_to_string(&rows_path).unwrap().trim()).unwrap();
    row.answer = "kept".into();
    fs::write(
        &rows_path,
        serde_json::to_string(&row).unwrap() + "\n{\"question_id\":\"q2\",\"qu",
    )
    .unwrap();

    let report = run_eval(&e, &dataset(), dir.path(), 1, serde_json::Value::Null).unwrap();
    assert_eq!(report.count, 2);
    let content = fs::read_to_string(&rows_path).unwrap();
    let rows: Vec<ExampleRow> = content.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].answer, "kept");
    assert_eq!(rows[1].question_id, "q2");
}

#[test]
fn dead_end_is_a_zero_row_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = vec![example("q1", "marathon", "1990"), example("q9", "zebra", "stripes")];
    let report = run_eval(&engine(), &data, dir.path(), 1, serde_json::Value::Null).unwrap();
    assert_eq!(report.count, 2);
    assert_eq!(report.errors, 1);
    assert_eq!(report.hits_at_1, 0.5);
    let rows = evaluate_all(&engine(), &data, 1).unwrap();
    assert_eq!(rows[1].answer_f1, 0.0);
    assert_eq!(rows[1].hits_at_1, 0);
    assert!(
        rows[1].error.as_deref().unwrap().contains("dead-end"),
        "{:?}",
        rows[1].error
    );
}

#[test]
fn parallel_and_sequential_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let e = engine();
    let mut data = dataset();
    data.extend((0..10).map(|i| {
        example(
            &format!("r{i:02}"),
            if i % 2 == 0 { "marathon" } else { "mars" },
            "1990",
        )
    }));
    run_eval(&e, &data, a.path(), 1, serde_json::Value::Null).unwrap();
    run_eval(&e, &data, b.path(), 4, serde_json::Value::Null).unwrap();
    for f in ["rows.jsonl", "outputs.jsonl", "autoais.jsonl", "report.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn backend_failures_propagate() {
    let mut e = engine();
    e.lm = Arc::new(keyweave::lm::UniformLm::new(e.bundle.vocab.len(), 1));
    let err = evaluate_all(&e, &dataset(), 1).unwrap_err();
    assert!(matches!(err, Error::Decode(_) | Error::Lm(_)), "{err}");
    assert_eq!(err.kind(), ErrorKind::Data);
}
