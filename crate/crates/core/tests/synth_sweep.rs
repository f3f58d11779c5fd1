//! Planted synthetic benchmark through the beam and interleave sweeps.

use std::sync::Arc;

use keyweave::config::BackendSpec;
use keyweave::corpus::KeyStrategy;
use keyweave::decoder::DecodeConfig;
use keyweave::engine::{build_backend, BuildOptions, Engine, IndexBundle};
use keyweave::eval::{ablation_beam, ablation_interleave};
use keyweave::synth::{SynthConfig, SyntheticBenchmark};
use keyweave::tokenizer::Scheme;

fn engine(bench: &SyntheticBenchmark, order: usize, dir: &std::path::Path) -> Engine {
    let options = BuildOptions {
        strategy: KeyStrategy::Proposition,
        scheme: Scheme::Word,
        ..BuildOptions::default()
    };
    let bundle = Arc::new(IndexBundle::build(&bench.docs, &options, &bench.extra_vocab).unwrap());
    let train = dir.join("lm_train.txt");
    std::fs::write(&train, &bench.lm_train).unwrap();
    let lm = build_backend(&BackendSpec::NGram(order), &bundle, Some(&train)).unwrap();
    let decode = DecodeConfig {
        max_steps: 32,
        ..DecodeConfig::default()
    };
    Engine::new(bundle, lm, decode, bench.plain_template.clone())
}

#[test]
fn beam_and_interleave_directions() {
    let bench = SyntheticBenchmark::generate(&SynthConfig {
        questions: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let e2 = engine(&bench, 2, dir.path());
    let beam = ablation_beam(&e2, &bench.dataset, &[10, 1, 5], 2).unwrap();
    println!("{}", beam.to_markdown());
    let labels: Vec<_> = beam.rows.iter().map(|r| r.labels[0].clone()).collect();
    assert_eq!(labels, ["1", "5", "10"]);
    assert!(beam.rows[2].hits_at_1 >= beam.rows[0].hits_at_1 + 0.1);

    let e3 = engine(&bench, 3, dir.path()).with_decode(DecodeConfig {
        beam_size: 4,
        max_steps: 32,
        ..DecodeConfig::default()
    });
    let table = ablation_interleave(&e3, &bench.dataset, &bench.plain_template, &bench.keyword_template, 2).unwrap();
    println!("{}", table.to_markdown());
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows[2].hits_at_1 >= table.rows[1].hits_at_1);
}
