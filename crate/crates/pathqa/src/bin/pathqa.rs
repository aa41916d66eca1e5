//! Command-line interface. Every command writes JSON lines to stdout; on
//! failure a single `{"error", "message"}` object goes to stderr and the exit
//! status is nonzero.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pathqa::checkpoint::Checkpoint;
use pathqa::config::TrainConfig;
use pathqa::dataset::{open_records, read_records, write_jsonl, Format};
use pathqa::error::{Error, Result};
use pathqa::evaluate::{evaluate, score_all};
use pathqa::explain::explain;
use pathqa::gradcheck::{self, GradCheckConfig};
use pathqa::pipeline::{load_instances, prepare, table_for, train_from_config, CorpusIndex};
use pathqa::synthetic::{generate, word_vectors, SyntheticConfig};
use pathqa_core::paths::ExtractionConfig;
use pathqa_core::retrieval::{retrieve_chains, RetrievalConfig, DEFAULT_BEAM, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use pathqa_core::scorer::{Composition, ModelConfig, Normalization, ScoreMode};
use pathqa_core::text::tokenize;
use pathqa_core::train::build_report;
use serde::Serialize;
use serde_json::json;

/// Multi-hop question answering over entity paths.
#[derive(Parser)]
#[command(name = "pathqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the entity paths of every instance.
    ExtractPaths(ExtractArgs),
    /// Retrieve two-sentence chains linking a question to candidates.
    Retrieve(RetrieveArgs),
    /// Train a model and checkpoint the best one on dev.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint.
    Evaluate(EvalArgs),
    /// Show top-scoring paths per instance.
    Explain(ExplainArgs),
    /// Write a synthetic relation-composition dataset.
    GenSynthetic(GenArgs),
    /// Compare loss gradients with finite differences.
    GradCheck(GradArgs),
}

#[derive(Args)]
struct DataArgs {
    /// JSON array or JSON-lines file of records.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "wikihop")]
    format: Format,
    /// One-sentence-per-line corpus for open-domain records without supports.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Keep every corpus sentence instead of only general statements.
    #[arg(long)]
    all_sentences: bool,
    #[arg(long)]
    max_hops: Option<usize>,
}

impl DataArgs {
    fn extraction(&self, base: ExtractionConfig) -> ExtractionConfig {
        ExtractionConfig {
            max_hops: self.max_hops.unwrap_or(base.max_hops),
            ..base
        }
    }

    fn load(&self, extraction: &ExtractionConfig) -> Result<Vec<pathqa_core::train::Prepared>> {
        let corpus = match &self.corpus {
            Some(p) => Some(CorpusIndex::load(p, !self.all_sentences)?),
            None => None,
        };
        extraction.validate()?;
        Ok(prepare(load_instances(&self.data, self.format, corpus.as_ref())?, extraction))
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Single question; pair with `--candidate`.
    #[arg(long, conflicts_with = "questions", requires = "candidates")]
    question: Option<String>,
    /// Repeat for each candidate.
    #[arg(long = "candidate")]
    candidates: Vec<String>,
    /// File of open-domain records (`id`, `question`, `choices`).
    #[arg(long, required_unless_present = "question")]
    questions: Option<PathBuf>,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    all_sentences: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: usize,
    /// Apply the threshold to partial chain scores as well.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    prune_prefix: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML (`.toml`) or JSON configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    composition: Option<Composition>,
    #[arg(long)]
    mode: Option<ScoreMode>,
    #[arg(long)]
    normalization: Option<Normalization>,
    #[arg(long)]
    hidden_per_direction: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    max_hops: Option<usize>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone().into(); })*
            };
        }
        set! {
            train => train,
            dev => dev,
            format => format,
            corpus => corpus,
            embeddings => embeddings,
            checkpoint => checkpoint,
            epochs => epochs,
            batch_size => batch_size,
            patience => patience,
            seed => seed,
            learning_rate => optim.learning_rate,
            clip_norm => optim.clip_norm,
            dropout => model.dropout,
            composition => model.composition,
            mode => model.mode,
            normalization => model.normalization,
            hidden_per_direction => model.hidden_per_direction,
            embedding_dim => model.embedding_dim,
            max_hops => extraction.max_hops,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Vector file; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Also write one line per instance.
    #[arg(long)]
    predictions: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Paths shown per instance.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Only these instance ids (repeatable).
    #[arg(long = "id")]
    ids: Vec<String>,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for train.jsonl, dev.jsonl, vectors.txt and rules.json.
    #[arg(long)]
    out: PathBuf,
    /// Width of the vectors written for the non-entity words.
    #[arg(long, default_value_t = ModelConfig::default().embedding_dim)]
    dim: usize,
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    relations: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    paraphrases: Option<usize>,
    #[arg(long)]
    max_name_words: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradArgs {
    /// Defaults to every composition.
    #[arg(long)]
    composition: Option<Composition>,
    #[arg(long, default_value = "joint")]
    normalization: Normalization,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 4)]
    hidden_per_direction: usize,
    #[arg(long, default_value_t = 10)]
    embedding_dim: usize,
    /// Coordinates sampled per parameter; all when omitted.
    #[arg(long)]
    max_coords: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative error bound reported as `pass`.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

struct Out(BufWriter<Box<dyn Write>>, PathBuf);

impl Out {
    fn stdout() -> Self {
        Self(BufWriter::new(Box::new(std::io::stdout().lock())), PathBuf::from("<stdout>"))
    }

    fn file(path: &Path) -> Result<Self> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self(BufWriter::new(Box::new(f)), path.to_path_buf()))
    }

    fn finish(mut self) -> Result<()> {
        self.0.flush().map_err(|e| Error::io(&self.1, e))
    }
}

impl Out {
    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string(value).map_err(|source| Error::Json {
            path: self.1.clone(),
            source,
        })?;
        writeln!(self.0, "{text}").map_err(|e| Error::io(&self.1, e))
    }
}

fn load_model(path: &Path, embeddings: Option<&PathBuf>) -> Result<(Checkpoint, pathqa_core::scorer::Model, Option<PathBuf>)> {
    let ckpt = Checkpoint::load(path)?;
    let model = ckpt.to_model()?;
    let emb = embeddings.cloned().or_else(|| ckpt.embeddings_path.clone());
    Ok((ckpt, model, emb))
}

fn extract_paths_cmd(args: &ExtractArgs, out: &mut Out) -> Result<()> {
    let data = args.data.load(&args.data.extraction(ExtractionConfig::default()))?;
    let mut file = args.out.as_ref().map(|p| Out::file(p)).transpose()?;
    let out = file.as_mut().unwrap_or(out);
    for p in &data {
        let paths: Vec<_> = p
            .paths
            .iter()
            .map(|path| {
                json!({
                    "candidate_index": path.candidate_index,
                    "candidate": p.instance.candidate_texts[path.candidate_index],
                    "hop_count": path.hop_count,
                    "entity_chain": path.entity_chain(),
                    "passage_ids": path.passage_ids,
                    "head": path.head,
                    "links": path.links,
                    "tail": path.tail,
                })
            })
            .collect();
        out.line(&json!({"id": p.instance.id, "num_paths": paths.len(), "paths": paths}))?;
    }
    file.map_or(Ok(()), Out::finish)
}

fn retrieve_cmd(args: &RetrieveArgs, out: &mut Out) -> Result<()> {
    let corpus = CorpusIndex::load(&args.corpus, !args.all_sentences)?;
    let config = RetrievalConfig {
        threshold: args.threshold,
        top_k: args.top_k,
        beam: args.beam,
        prune_prefix: args.prune_prefix,
    };
    let questions: Vec<(String, String, Vec<String>)> = match (&args.questions, &args.question) {
        (Some(path), _) => open_records(read_records(path)?)?
            .into_iter()
            .map(|r| (r.id, r.question, r.choices))
            .collect(),
        (None, Some(q)) => vec![(String::new(), q.clone(), args.candidates.clone())],
        (None, None) => return Err(Error::Config("give --questions or --question".into())),
    };
    let mut file = args.out.as_ref().map(|p| Out::file(p)).transpose()?;
    let out = file.as_mut().unwrap_or(out);
    for (id, question, candidates) in &questions {
        let q = tokenize(question);
        for (ci, c) in candidates.iter().enumerate() {
            for ch in retrieve_chains(&q, &tokenize(c), &corpus.index, &config) {
                out.line(&json!({
                    "id": id,
                    "candidate_index": ci,
                    "candidate": c,
                    "s1_id": ch.s1_id,
                    "s2_id": ch.s2_id,
                    "s1": corpus.sentences[ch.s1_id],
                    "s2": corpus.sentences[ch.s2_id],
                    "score": ch.score,
                    "question_s1": ch.question_s1,
                    "s1_s2": ch.s1_s2,
                    "s2_candidate": ch.s2_candidate,
                }))?;
            }
        }
    }
    file.map_or(Ok(()), Out::finish)
}

fn train_cmd(args: &TrainArgs, out: &mut Out) -> Result<()> {
    let (outcome, summary) = train_from_config(&args.resolve()?)?;
    for record in &outcome.history {
        out.line(&json!({"event": "epoch", "record": record}))?;
    }
    out.line(&json!({"event": "done", "summary": summary}))?;
    match summary.aborted {
        Some(reason) => Err(Error::Aborted(reason)),
        None => Ok(()),
    }
}

fn evaluate_cmd(args: &EvalArgs, out: &mut Out) -> Result<()> {
    let (ckpt, model, emb) = load_model(&args.checkpoint, args.embeddings.as_ref())?;
    let data = args.data.load(&args.data.extraction(ExtractionConfig::default()))?;
    let table = table_for(&data, emb.as_deref(), model.config.embedding_dim, ckpt.embedding_seed)?;
    let labelled = data.iter().any(|p| p.instance.answer_index.is_some());
    let report = if labelled {
        evaluate(&model, &table, &data)?
    } else {
        build_report(&data, score_all(&model, &table, &data)?)?
    };
    if args.predictions || !labelled {
        for p in &report.predictions {
            out.line(p)?;
        }
    }
    if labelled {
        out.line(&json!({
            "total": report.total,
            "correct": report.correct,
            "accuracy": report.accuracy,
            "unanswerable": report.unanswerable,
            "mean_loss": report.mean_loss,
        }))?;
    }
    Ok(())
}

fn explain_cmd(args: &ExplainArgs, out: &mut Out) -> Result<()> {
    let (ckpt, model, emb) = load_model(&args.checkpoint, args.embeddings.as_ref())?;
    let data = args.data.load(&args.data.extraction(ExtractionConfig::default()))?;
    let table = table_for(&data, emb.as_deref(), model.config.embedding_dim, ckpt.embedding_seed)?;
    for p in &data {
        if args.ids.is_empty() || args.ids.contains(&p.instance.id) {
            out.line(&explain(&model, &table, p, args.k)?)?;
        }
    }
    Ok(())
}

fn gen_cmd(args: &GenArgs, out: &mut Out) -> Result<()> {
    let d = SyntheticConfig::default();
    let config = SyntheticConfig {
        entities: args.entities.unwrap_or(d.entities),
        relations: args.relations.unwrap_or(d.relations),
        hops: args.hops.unwrap_or(d.hops),
        candidates: args.candidates.unwrap_or(d.candidates),
        paraphrases: args.paraphrases.unwrap_or(d.paraphrases),
        max_name_words: args.max_name_words.unwrap_or(d.max_name_words),
        train: args.train.unwrap_or(d.train),
        dev: args.dev.unwrap_or(d.dev),
        seed: args.seed,
    };
    let data = generate(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let train = args.out.join("train.jsonl");
    let dev = args.out.join("dev.jsonl");
    let rules = args.out.join("rules.json");
    let vectors = args.out.join("vectors.txt");
    write_jsonl(&train, &data.train)?;
    let mut text = String::new();
    for v in word_vectors(&config, args.dim) {
        text.push_str(&v.word);
        for x in &v.values {
            text.push_str(&format!(" {x}"));
        }
        text.push('\n');
    }
    std::fs::write(&vectors, text).map_err(|e| Error::io(&vectors, e))?;
    write_jsonl(&dev, &data.dev)?;
    let text = serde_json::to_string_pretty(&json!({"config": config, "rules": data.rules}))
        .map_err(|source| Error::Json { path: rules.clone(), source })?;
    std::fs::write(&rules, text).map_err(|e| Error::io(&rules, e))?;
    out.line(&json!({
        "train": train,
        "dev": dev,
        "rules": rules,
        "vectors": vectors,
        "train_instances": data.train.len(),
        "dev_instances": data.dev.len(),
    }))
}

fn grad_check_cmd(args: &GradArgs, out: &mut Out) -> Result<()> {
    let compositions = match args.composition {
        Some(c) => vec![c],
        None => Composition::ALL.to_vec(),
    };
    for composition in compositions {
        let config = GradCheckConfig {
            composition,
            normalization: args.normalization,
            hidden_per_direction: args.hidden_per_direction,
            embedding_dim: args.embedding_dim,
            eps: args.eps,
            max_coords_per_param: args.max_coords.unwrap_or(usize::MAX),
            seed: args.seed,
        };
        let report = gradcheck::run(&config)?;
        out.line(&json!({
            "composition": composition,
            "eps": args.eps,
            "pass": report.max_relative_error < args.tolerance,
            "report": report,
        }))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut out = Out::stdout();
    let result = match &cli.command {
        Command::ExtractPaths(a) => extract_paths_cmd(a, &mut out),
        Command::Retrieve(a) => retrieve_cmd(a, &mut out),
        Command::Train(a) => train_cmd(a, &mut out),
        Command::Evaluate(a) => evaluate_cmd(a, &mut out),
        Command::Explain(a) => explain_cmd(a, &mut out),
        Command::GenSynthetic(a) => gen_cmd(a, &mut out),
        Command::GradCheck(a) => grad_check_cmd(a, &mut out),
    };
    out.finish()?;
    result
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
