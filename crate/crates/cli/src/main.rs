//! `keyweave` command-line driver: build indexes, generate, evaluate,
//! inspect continuations and run the ablation sweeps.
//!
//! Every failure exits nonzero with a single stderr line
//! `keyweave: error[<kind>]: <reason>`; kinds and codes are
//! usage (1), data (2), decode (3) and transport (4).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use keyweave::config::RunConfig;
use keyweave::corpus::{load_corpus, CorpusFormat, KeyStrategy};
use keyweave::decoder::{DecodeError, GenerationOutput, Segment};
use keyweave::engine::{BuildOptions, Engine, IndexBundle};
use keyweave::eval::{
    ablation_beam, ablation_interleave, ablation_strategies, load_dataset, run_eval, AblationTable, StrategySweep,
};
use keyweave::fm_index::{Anchor, DEFAULT_SAMPLE_RATE};
use keyweave::prompt::PromptTemplate;
use keyweave::synth::{SynthConfig, SyntheticBenchmark};
use keyweave::tokenizer::{Scheme, RESERVED};
use keyweave::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "keyweave", version, about = "Corpus-constrained generation over an FM-index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract retrieval keys from a corpus and write an index bundle.
    BuildIndex(BuildArgs),
    /// Decode one question and print the top beam.
    Generate(GenerateArgs),
    /// Evaluate a QA dataset; resumable.
    Eval(EvalArgs),
    /// List the tokens that can follow a prefix in the index, with counts.
    Inspect(InspectArgs),
    /// Beam-size, interleaving and key-strategy sweeps.
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Write the planted synthetic benchmark.
    Synth(SynthArgs),
    /// Time continuation queries and beam steps on a random byte corpus.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// passages, propositions or token_ids.
    #[arg(long, default_value = "passages", value_parser = parse_from_str::<CorpusFormat>)]
    format: CorpusFormat,
    /// title, paragraph, paragraph_with_title, sentence, sentence_with_title or proposition.
    #[arg(long, default_value = "proposition", value_parser = parse_from_str::<KeyStrategy>)]
    strategy: KeyStrategy,
    /// byte, word or pretokenized.
    #[arg(long, default_value = "byte", value_parser = parse_from_str::<Scheme>)]
    scheme: Scheme,
    #[arg(long, default_value_t = 8)]
    min_substring_len: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    /// Extra word-scheme surfaces, one or more per line.
    #[arg(long)]
    extra_vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Run configuration: a config file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// uniform, ngram:N or remote:URL (remote alone reads RICHES_REMOTE_URL).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    lm_train: Option<PathBuf>,
    /// single_hop, multi_hop, plain or a template file.
    #[arg(long)]
    prompt_template: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    adaptive_beam: Option<bool>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_key_tokens: Option<usize>,
    #[arg(long)]
    min_substring_len: Option<usize>,
    #[arg(long)]
    no_repeat_keys: Option<bool>,
    #[arg(long)]
    locate_limit: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<KeyStrategy>)]
    strategy: Option<KeyStrategy>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).map_err(usage)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(
            index,
            backend,
            prompt_template,
            seed,
            beam_size,
            adaptive_beam,
            max_steps,
            max_key_tokens,
            no_repeat_keys,
            locate_limit
        );
        if let Some(v) = &self.lm_train {
            c.lm_train = Some(v.clone());
        }
        if let Some(v) = self.min_substring_len {
            c.min_substring_len = Some(v);
        }
        if let Some(v) = self.strategy {
            c.strategy = Some(v);
        }
        Ok(c)
    }
}

#[derive(Args)]
struct GenerateArgs {
    question: String,
    #[command(flatten)]
    run: RunArgs,
    /// Write the beam trace as JSONL (also on a dead-end).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the output as one JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Worker threads; defaults to the config value.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    /// Token prefix; empty lists the most frequent tokens overall.
    #[arg(default_value = "")]
    prefix: String,
    /// Only count occurrences at the start of a key.
    #[arg(long)]
    key_start: bool,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
}

#[derive(Subcommand)]
enum AblateCommand {
    /// Hits@1 and F1 per beam size.
    Beam {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
        beams: Vec<usize>,
        #[command(flatten)]
        common: AblateCommon,
    },
    /// Keywords off/on × adaptive beam off/on, three rows.
    Interleave {
        #[arg(long)]
        dataset: PathBuf,
        /// Template without hint keywords.
        #[arg(long)]
        plain_template: String,
        /// Template with hint keywords.
        #[arg(long)]
        keyword_template: String,
        #[command(flatten)]
        common: AblateCommon,
    },
    /// One index per key strategy built from the same corpus.
    Strategies {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "passages", value_parser = parse_from_str::<CorpusFormat>)]
        format: CorpusFormat,
        #[arg(long, default_value = "byte", value_parser = parse_from_str::<Scheme>)]
        scheme: Scheme,
        #[arg(long)]
        extra_vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        build_min_substring_len: usize,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated subset; default all.
        #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<KeyStrategy>)]
        strategies: Vec<KeyStrategy>,
        #[command(flatten)]
        common: AblateCommon,
    },
}

#[derive(Args)]
struct AblateCommon {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    parallel: Option<usize>,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    questions: usize,
    #[arg(long, default_value_t = 0.5)]
    hard_fraction: f64,
    #[arg(long, default_value_t = 8)]
    keyword_variants: usize,
    #[arg(long, default_value_t = 50)]
    filler_docs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Approximate index size in tokens.
    #[arg(long, default_value_t = 1_000_000)]
    tokens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ");
            report(ErrorKind::Usage, line);
            return ExitCode::from(ErrorKind::Usage.exit_code() as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .map_or(ErrorKind::Data, Error::kind);
            report(kind, &format!("{e:#}"));
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}

fn report(kind: ErrorKind, reason: &str) {
    let one_line = reason.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("keyweave: error[{}]: {one_line}", kind.name());
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildIndex(args) => build_index(args),
        Command::Generate(args) => generate(args),
        Command::Eval(args) => eval(args),
        Command::Inspect(args) => inspect(args),
        Command::Ablate(cmd) => ablate(cmd),
        Command::Synth(args) => synth(args),
        Command::Bench(args) => bench(args),
    }
}

fn read_extra_vocab(path: Option<&Path>) -> Result<Vec<String>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let text = fs::read_to_string(path).with_context(|| format!("extra vocab {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn build_index(args: BuildArgs) -> Result<()> {
    let docs = load_corpus(&args.corpus, args.format).map_err(Error::from)?;
    let extra = read_extra_vocab(args.extra_vocab.as_deref())?;
    let options = BuildOptions {
        strategy: args.strategy,
        scheme: args.scheme,
        min_substring_len: args.min_substring_len,
        sample_rate: args.sample_rate,
    };
    let bundle = IndexBundle::build(&docs, &options, &extra)?;
    bundle.save(&args.out)?;
    eprintln!(
        "built {} index: {} keys, {} tokens, vocab {}{}",
        args.strategy,
        bundle.meta.keys,
        bundle.meta.text_len,
        bundle.meta.vocab_size,
        if docs.filtered.is_empty() {
            String::new()
        } else {
            format!(", {} empty documents skipped", docs.filtered.len())
        }
    );
    Ok(())
}

fn print_output(out: &GenerationOutput) {
    for seg in &out.segments {
        match seg {
            Segment::Free { text, .. } => {
                if !text.is_empty() {
                    println!("{text}");
                }
            }
            Segment::Constrained {
                text, doc_ids, closed, ..
            } => {
                let close = if *closed { " >>" } else { "" };
                println!("<< {text}{close}  [{}]", doc_ids.join(", "));
            }
        }
    }
    println!("answer: {}", out.answer);
    println!("score: {:.4}", out.score);
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = args.run.resolve()?;
    let engine = Engine::from_config(&config)?;
    let decoded = match engine.generate(&args.question) {
        Ok(d) => d,
        Err(Error::Decode(DecodeError::DeadEnd {
            step,
            partial,
            score,
            trace,
        })) => {
            if let Some(path) = &args.trace {
                fs::write(path, trace.to_jsonl())?;
            }
            return Err(Error::Decode(DecodeError::DeadEnd {
                step,
                partial,
                score,
                trace,
            })
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &args.trace {
        fs::write(path, decoded.trace.to_jsonl()).with_context(|| format!("trace {}", path.display()))?;
    }
    let top = decoded
        .outputs
        .first()
        .ok_or_else(|| anyhow!(Error::Data("no output".into())))?;
    if args.json {
        println!("{}", serde_json::to_string(top)?);
    } else {
        print_output(top);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut config = args.run.resolve()?;
    if let Some(p) = args.parallel {
        config.parallel = p;
    }
    let engine = Engine::from_config(&config)?;
    let dataset = load_dataset(&args.dataset).map_err(Error::from)?;
    let echo = serde_json::to_value(&config)?;
    let report = run_eval(&engine, &dataset, &args.out, config.parallel, echo)?;
    println!(
        "questions {}  mean F1 {:.4}  Hits@1 {:.4}  errors {}",
        report.count, report.mean_f1, report.hits_at_1, report.errors
    );
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let bundle = IndexBundle::load(&args.index)?;
    let prefix = bundle.vocab.encode(&args.prefix).map_err(Error::from)?;
    let fm = &bundle.index;
    let anchor = if args.key_start {
        Anchor::KeyStart
    } else {
        Anchor::Anywhere
    };
    let mut cursor = fm.cursor(anchor);
    for &t in &prefix {
        cursor = fm.advance(&cursor, t);
    }
    let mut listing: Vec<(usize, u32)> = fm
        .cursor_continuations(&cursor)
        .into_iter()
        .filter(|(t, _)| *t >= RESERVED)
        .map(|(t, c)| (c.count(), t))
        .collect();
    if listing.is_empty() {
        println!("no matches");
        return Ok(());
    }
    listing.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    if prefix.is_empty() {
        listing.truncate(args.top_k);
    }
    let line = listing
        .iter()
        .map(|(c, t)| format!("{} ({c})", bundle.vocab.token_label(*t)))
        .collect::<Vec<_>>()
        .join(", ");
    println!("{line}");
    Ok(())
}

fn emit_table(table: &AblationTable, out: Option<&Path>) -> Result<()> {
    print!("{}", table.to_markdown());
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(table)? + "\n")?;
    }
    Ok(())
}

fn ablate(cmd: AblateCommand) -> Result<()> {
    match cmd {
        AblateCommand::Beam { dataset, beams, common } => {
            let config = common.run.resolve()?;
            let engine = Engine::from_config(&config)?;
            let dataset = load_dataset(&dataset).map_err(Error::from)?;
            let parallel = common.parallel.unwrap_or(config.parallel);
            let table = ablation_beam(&engine, &dataset, &beams, parallel)?;
            emit_table(&table, common.out.as_deref())
        }
        AblateCommand::Interleave {
            dataset,
            plain_template,
            keyword_template,
            common,
        } => {
            let config = common.run.resolve()?;
            let engine = Engine::from_config(&config)?;
            let dataset = load_dataset(&dataset).map_err(Error::from)?;
            let plain = PromptTemplate::resolve(&plain_template).map_err(usage)?;
            let keywords = PromptTemplate::resolve(&keyword_template).map_err(usage)?;
            let parallel = common.parallel.unwrap_or(config.parallel);
            let table = ablation_interleave(&engine, &dataset, &plain, &keywords, parallel)?;
            emit_table(&table, common.out.as_deref())
        }
        AblateCommand::Strategies {
            corpus,
            format,
            scheme,
            extra_vocab,
            build_min_substring_len,
            dataset,
            strategies,
            common,
        } => {
            let mut config = common.run.resolve()?;
            // each row sets its own strategy
            config.strategy = None;
            let docs = load_corpus(&corpus, format).map_err(Error::from)?;
            let dataset = load_dataset(&dataset).map_err(Error::from)?;
            let strategies = if strategies.is_empty() {
                KeyStrategy::ALL.to_vec()
            } else {
                strategies
            };
            let decode = config
                .decode_config(KeyStrategy::Proposition, build_min_substring_len)
                .map_err(usage)?;
            let sweep = StrategySweep {
                build: BuildOptions {
                    strategy: KeyStrategy::Proposition,
                    scheme,
                    min_substring_len: config.min_substring_len.unwrap_or(build_min_substring_len),
                    sample_rate: DEFAULT_SAMPLE_RATE,
                },
                extra_vocab: read_extra_vocab(extra_vocab.as_deref())?,
                backend: config.backend_spec().map_err(usage)?,
                lm_train: config.lm_train.clone(),
                decode,
                template: PromptTemplate::resolve(&config.prompt_template).map_err(usage)?,
                parallel: common.parallel.unwrap_or(config.parallel),
            };
            let table = ablation_strategies(&docs, &dataset, &strategies, &sweep)?;
            emit_table(&table, common.out.as_deref())
        }
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        questions: args.questions,
        hard_fraction: args.hard_fraction,
        keyword_variants: args.keyword_variants,
        filler_docs: args.filler_docs,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let bench = SyntheticBenchmark::generate(&config)?;
    bench.write(&args.out)?;
    eprintln!(
        "wrote {} questions ({} hard) and {} documents to {}",
        bench.dataset.len(),
        bench.hard.len(),
        bench.docs.len(),
        args.out.display()
    );
    Ok(())
}

/// Medians above these are reported as a warning, not a failure.
const CONTINUATION_BUDGET_MS: f64 = 1.0;
const STEP_BUDGET_MS: f64 = 10.0;

fn bench(args: BenchArgs) -> Result<()> {
    let report = keyweave::bench::run(&keyweave::bench::BenchConfig {
        tokens: args.tokens,
        seed: args.seed,
        ..Default::default()
    })?;
    if args.json {
        println!("{}", serde_json::to_string(&report)?);
        return Ok(());
    }
    let flag = |v: f64, budget: f64| if v <= budget { "ok" } else { "WARN" };
    println!(
        "index: {} tokens, {} keys, V = {}, built in {:.0} ms",
        report.text_len, report.keys, report.vocab_size, report.build_ms
    );
    println!(
        "continuation query median: {:.4} ms (budget {CONTINUATION_BUDGET_MS} ms) {}",
        report.continuation_median_ms,
        flag(report.continuation_median_ms, CONTINUATION_BUDGET_MS)
    );
    println!(
        "decode step median: {:.4} ms (budget {STEP_BUDGET_MS} ms) {}",
        report.step_median_ms,
        flag(report.step_median_ms, STEP_BUDGET_MS)
    );
    Ok(())
}
