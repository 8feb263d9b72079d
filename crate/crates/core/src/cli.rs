//! Command-line entry point. Exit codes: 0 success, 1 invalid input or usage, 2 backend or I/O
//! failure.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendConfig, BackendKind, DEFAULT_DIM};
use crate::corpus::{corpus_stats, ingest_dir, Normalizer, DEFAULT_CHUNK_SIZE};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_human, emit_report, evaluate, human_accuracy, overlap_analysis, Coverage, HumanVote,
    ReportFormat,
};
use crate::model::{
    load_pairs, load_predictions, load_qa_file, read_jsonl, write_jsonl, write_predictions,
    write_qa_file, ActionClass,
};
use crate::retrieval::ParagraphIndex;
use crate::scorers::{score_items, MatchMetric, Scorer, ScorerConfig, ScorerKind, DEFAULT_MAX_LENGTH};
use crate::server::{serve, AppState};
use crate::synthesis::{
    cluster_exemplars, filter_domain_questions, synthesize, Mode, SynthesisConfig, DEFAULT_CLUSTERS,
};

#[derive(Debug, Parser)]
#[command(name = "trafficqa", version, about = "Traffic MCQA benchmark synthesis and zero-shot evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build multiple-choice questions from cause/effect pairs.
    Synth(SynthArgs),
    /// Drop image and "all/none of the above" questions.
    Filter(FilterArgs),
    /// Split, clean and chunk plain-text manuals into paragraphs.
    Ingest(IngestArgs),
    /// Embed paragraphs into a flat retrieval index.
    Index(IndexArgs),
    /// Run a zero-shot scorer over questions.
    Score(ScoreArgs),
    /// Accuracy report for one or more prediction files.
    Eval(EvalArgs),
    /// Joint/union correctness of two prediction files.
    Overlap(OverlapArgs),
    /// Majority vote and confidence over human annotations.
    HumanEval(HumanEvalArgs),
    /// Serve retrieval and open-book answering over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Model backend.
    #[arg(long, value_enum, default_value = "hash")]
    backend: BackendKind,
    /// Fixture JSONL for the fixture backend.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Base URL of a backend-protocol server.
    #[arg(long)]
    endpoint: Option<String>,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Global seed of the hash backend.
    #[arg(long, default_value_t = 0)]
    backend_seed: u64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Remote request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
}

impl BackendArgs {
    fn config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.backend,
            endpoint: self.endpoint.clone(),
            fixture_path: self.fixture.clone(),
            dim: self.dim,
            timeout: Duration::from_secs(self.timeout),
            batch_size: self.batch_size,
            seed: self.backend_seed,
        }
    }

    fn build(&self) -> Result<Arc<dyn Backend>> {
        self.config().build()
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Cause/effect pairs JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Output questions JSONL.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "ep")]
    mode: Mode,
    /// Similarity upper bound for distractors.
    #[arg(long = "t", default_value_t = 0.4)]
    t: f64,
    /// Cause deduplication threshold.
    #[arg(long, default_value_t = 0.9)]
    dedup: f64,
    /// Candidates per question.
    #[arg(long = "n", default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws per distractor slot before a question is skipped.
    #[arg(long, default_value_t = 100)]
    max_attempts: usize,
    /// JSON map of cluster id to action class; enables class labeling.
    #[arg(long)]
    label_map: Option<PathBuf>,
    /// Number of action clusters.
    #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
    clusters: usize,
    /// Write the effects nearest each cluster centroid here (JSON), for authoring a label map.
    #[arg(long)]
    clusters_out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum NormalizerKind {
    Identity,
    /// Rewrite sentences through the backend's generate endpoint.
    Backend,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory of UTF-8 .txt manuals.
    #[arg(long)]
    input: PathBuf,
    /// Output paragraphs JSONL.
    #[arg(long)]
    output: PathBuf,
    /// Sentences per paragraph.
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk: usize,
    #[arg(long, value_enum, default_value = "identity")]
    normalizer: NormalizerKind,
    /// Token budget of a normalized sentence.
    #[arg(long, default_value_t = 128)]
    normalizer_max_length: usize,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Paragraphs JSONL.
    #[arg(long)]
    paragraphs: PathBuf,
    /// Output index directory.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Questions JSONL.
    #[arg(long)]
    items: PathBuf,
    #[arg(long, value_enum)]
    scorer: ScorerKind,
    /// Output predictions JSONL.
    #[arg(long)]
    output: PathBuf,
    /// Index directory (openbook).
    #[arg(long)]
    index: Option<PathBuf>,
    /// Scorer name recorded in predictions.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_LENGTH)]
    max_length: usize,
    #[arg(long, value_enum, default_value = "embedding-cosine")]
    metric: MatchMetric,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prediction JSONL; repeat for one report row per file.
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long)]
    gold: PathBuf,
    /// Count missing predictions as wrong instead of failing.
    #[arg(long)]
    lenient: bool,
    /// JSONL of {item_id, ...} records to leave out, e.g. a score errors file.
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OverlapArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    gold: PathBuf,
}

#[derive(Debug, Args)]
struct HumanEvalArgs {
    /// Votes JSONL {item_id, annotator_id, answer_index, confidence}.
    #[arg(long)]
    votes: PathBuf,
    /// Questions JSONL; adds the majority-vote accuracy.
    #[arg(long)]
    gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = DEFAULT_MAX_LENGTH)]
    max_length: usize,
    #[arg(long, value_enum, default_value = "embedding-cosine")]
    metric: MatchMetric,
    #[command(flatten)]
    backend: BackendArgs,
}

/// One line of a score errors file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErroredItem {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Deserialize)]
struct IdOnly {
    item_id: String,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn errors_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".errors.jsonl");
    PathBuf::from(name)
}

fn synth(args: SynthArgs) -> Result<()> {
    let backend = args.backend.build()?;
    let config = SynthesisConfig {
        dedup_threshold: args.dedup,
        distractor_upper_bound: args.t,
        num_candidates: args.n,
        max_resample_attempts: args.max_attempts,
        rng_seed: args.seed,
        mode: args.mode,
    };
    config.validate()?;
    let pairs = load_pairs(&args.input)?;
    let label_map: Option<BTreeMap<usize, ActionClass>> = match &args.label_map {
        Some(p) => {
            let raw = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_slice(&raw).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line(),
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let report = synthesize(
        &pairs,
        &config,
        label_map.as_ref().map(|m| (args.clusters, m)),
        backend.as_ref(),
        &mut rng,
    )?;
    write_qa_file(&report.items, &args.output)?;
    if let Some(path) = &args.clusters_out {
        let effects: Vec<String> = report.pairs.iter().map(|p| p.effect.clone()).collect();
        let exemplars = cluster_exemplars(&effects, args.clusters, args.seed, 10, backend.as_ref())?;
        std::fs::write(path, serde_json::to_vec_pretty(&exemplars)?).map_err(|e| Error::io(path, e))?;
    }
    eprintln!(
        "pairs: {} read, {} after dedup, {} questions written, {} skipped (sampling exhausted)",
        report.input_pairs,
        report.pairs.len(),
        report.items.len(),
        report.skipped.len()
    );
    Ok(())
}

fn filter(args: FilterArgs) -> Result<()> {
    let items = load_qa_file(&args.input)?;
    let before = items.len();
    let kept = filter_domain_questions(items);
    write_qa_file(&kept, &args.output)?;
    eprintln!("{} of {before} questions kept", kept.len());
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let backend;
    let normalizer = match args.normalizer {
        NormalizerKind::Identity => Normalizer::Identity,
        NormalizerKind::Backend => {
            backend = args.backend.build()?;
            Normalizer::Generate {
                backend: backend.as_ref(),
                max_length: args.normalizer_max_length,
            }
        }
    };
    let paragraphs = ingest_dir(&args.input, args.chunk, normalizer)?;
    write_jsonl(&paragraphs, &args.output)?;
    match corpus_stats(&paragraphs) {
        Ok(stats) => eprintln!(
            "{} paragraphs, mean word count {:.1}",
            stats.paragraph_count, stats.mean_word_count
        ),
        Err(_) => warn!("no paragraphs extracted from {}", args.input.display()),
    }
    Ok(())
}

fn index(args: IndexArgs) -> Result<()> {
    let backend = args.backend.build()?;
    let paragraphs = read_jsonl(&args.paragraphs)?;
    let index = ParagraphIndex::build(paragraphs, backend.as_ref())?;
    index.save(&args.output)?;
    eprintln!("indexed {} paragraphs (dim {})", index.len(), index.dim());
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let backend = args.backend.build()?;
    let items = load_qa_file(&args.items)?;
    let index = args.index.as_deref().map(ParagraphIndex::load).transpose()?;
    let config = ScorerConfig {
        name: args.name,
        max_length: args.max_length,
        metric: args.metric,
        ..ScorerConfig::new(args.scorer)
    };
    let scorer = Scorer::new(config, index.as_ref())?;
    let run = score_items(&items, &scorer, backend.as_ref())?;
    write_predictions(&run.records, &args.output)?;
    if !run.errored.is_empty() {
        let path = errors_path(&args.output);
        let errored: Vec<ErroredItem> = run
            .errored
            .iter()
            .map(|(id, e)| ErroredItem { item_id: id.clone(), error: e.clone() })
            .collect();
        write_jsonl(&errored, &path)?;
        warn!("{} items failed generation; listed in {}", errored.len(), path.display());
    }
    eprintln!("{} predictions written, {} errored", run.records.len(), run.errored.len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let gold = load_qa_file(&args.gold)?;
    let exclude: HashSet<String> = match &args.exclude {
        Some(p) => read_jsonl::<IdOnly>(p)?.into_iter().map(|r| r.item_id).collect(),
        None => HashSet::new(),
    };
    let coverage = if args.lenient { Coverage::Lenient } else { Coverage::Strict };
    let reports = args
        .predictions
        .iter()
        .map(|p| evaluate(&load_predictions(p)?, &gold, coverage, &exclude))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        if !r.missing.is_empty() {
            warn!("{}: {} items without prediction counted wrong", r.scorer_name, r.missing.len());
        }
    }
    write_text(args.output.as_deref(), &emit_report(&reports, args.format)?)
}

fn overlap(args: OverlapArgs) -> Result<()> {
    let gold = load_qa_file(&args.gold)?;
    let a = load_predictions(&args.a)?;
    let b = load_predictions(&args.b)?;
    let report = overlap_analysis(&a, &b, &gold)?;
    print_json(&report)?;
    println!("ensemble upper bound: {:.1}%", 100.0 * report.ensemble_upper_bound);
    Ok(())
}

#[derive(Serialize)]
struct HumanSummary {
    #[serde(flatten)]
    aggregate: crate::evaluation::HumanAggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<crate::evaluation::Tally>,
}

fn human_eval(args: HumanEvalArgs) -> Result<()> {
    let votes: Vec<HumanVote> = read_jsonl(&args.votes)?;
    let aggregate = aggregate_human(&votes)?;
    let accuracy = match &args.gold {
        Some(g) => Some(human_accuracy(&aggregate, &load_qa_file(g)?)?),
        None => None,
    };
    print_json(&HumanSummary { aggregate, accuracy })
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    let backend = args.backend.build()?;
    let index = ParagraphIndex::load(&args.index)?;
    let scorer = ScorerConfig {
        max_length: args.max_length,
        metric: args.metric,
        ..ScorerConfig::new(ScorerKind::Openbook)
    };
    Scorer::new(scorer.clone(), Some(&index))?;
    let state = AppState::new(index, backend, scorer)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("<runtime>", e))?;
    info!("serving on {}", args.addr);
    runtime
        .block_on(serve(args.addr, state))
        .map_err(|e| Error::io(args.addr.to_string(), e))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Filter(a) => filter(a),
        Command::Ingest(a) => ingest(a),
        Command::Index(a) => index(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Overlap(a) => overlap(a),
        Command::HumanEval(a) => human_eval(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_backend_or_io() {
                2
            } else {
                1
            }
        }
    }
}
