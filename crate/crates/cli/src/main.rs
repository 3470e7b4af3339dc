use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlcurate::analytics::{self, EvalRecord, EvalTable, ModelCard, ParetoPoint, TokenEstimate};
use mlcurate::corpus::{self, IngestOptions};
use mlcurate::embedding::{self, EmbeddingVector, DIVERSE_TAG, EMBED_DEDUP_TAG};
use mlcurate::langid::{self, LangPrediction, ProfileSet};
use mlcurate::mixture::{self, MixturePlan, SamplingManifest};
use mlcurate::pipeline::{self, RunError};
use mlcurate::quality::{self, Keep, ScoreRecord, TrainConfig};
use mlcurate::similarity::{self, PplNormalization, WordRule};
use mlcurate::translate::{self, Strategy, TranslateOptions, TranslationJob};
use mlcurate::{languages, reference, Document, QualityModel};
use serde::Serialize;

mod spelling;

#[derive(Parser)]
#[command(name = "mlcurate", version, about = "Multilingual pretraining-data curation")]
struct Cli {
    /// Seed for every randomized step that does not set its own.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Abort on the first malformed record or failed job.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pipeline config used by `run` and `validate` when no path is given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read JSONL shards into one stream and count tokens per pool.
    Ingest(IngestArgs),
    /// Train language profiles and label documents.
    #[command(subcommand)]
    Langid(LangidCmd),
    /// Train a quality classifier or filter documents by its scores.
    #[command(subcommand)]
    Quality(QualityCmd),
    /// Drop near-duplicates by embedding distance.
    Dedup(DedupArgs),
    /// Keep a diverse subset by farthest-point selection.
    Select(SelectArgs),
    /// Pick translation sources and run a translator over them.
    #[command(subcommand)]
    Translate(TranslateCmd),
    /// Plan phase budgets and materialize a training mixture.
    #[command(subcommand)]
    Mixture(MixtureCmd),
    /// Language-similarity proxies and their correlation with uplift.
    #[command(subcommand)]
    Similarity(SimilarityCmd),
    /// Compute and evaluation analytics over model cards and scores.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Execute a pipeline config.
    Run {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Check a pipeline config without executing it.
    Validate {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Also write the pool inventory here.
    #[arg(long)]
    inventory: Option<PathBuf>,
    #[arg(long)]
    lang_default: Option<String>,
    #[arg(long)]
    source_default: Option<String>,
    #[arg(long, default_value = "whitespace-punct")]
    tokenizer: String,
}

#[derive(Subcommand)]
enum LangidCmd {
    /// Build rank profiles from a directory of `<lang>.txt` seed files.
    Train {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = langid::DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value_t = *langid::DEFAULT_N_RANGE.end())]
        n_max: usize,
    },
    /// Label documents with their closest profile.
    Predict {
        /// Profile JSON, or a seed directory to train from on the fly.
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        min_chars: usize,
        /// Overwrite languages already present.
        #[arg(long)]
        relabel: bool,
    },
}

#[derive(Subcommand)]
enum QualityCmd {
    /// Fit a classifier on positive and negative examples.
    Train {
        #[arg(long)]
        positive: PathBuf,
        #[arg(long)]
        negative: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        hash_dim: Option<usize>,
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Score every document with a trained model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Keep the top fraction or everything above a threshold.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        scores: ScoreSource,
        #[command(flatten)]
        keep: KeepArgs,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ScoreSource {
    /// Precomputed scores JSONL.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Model to score with.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct KeepArgs {
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl KeepArgs {
    fn keep(&self) -> Keep {
        match (self.fraction, self.threshold) {
            (Some(fraction), _) => Keep::Fraction { fraction },
            (_, Some(threshold)) => Keep::Threshold { threshold },
            _ => unreachable!("clap enforces one of the two"),
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct EmbeddingSource {
    /// `hashing:DIM`, `http:ID=URL` or `subprocess:ID=COMMAND`.
    #[arg(long)]
    embedder: Option<String>,
    /// Precomputed embeddings JSONL.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    source: EmbeddingSource,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Write the computed embeddings here.
    #[arg(long)]
    save_embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct DedupArgs {
    #[command(flatten)]
    embed: EmbedArgs,
    /// Cosine-distance threshold.
    #[arg(long)]
    tau: f64,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    embed: EmbedArgs,
    #[arg(long)]
    k: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Scored,
}

#[derive(Subcommand)]
enum TranslateCmd {
    /// Pick English source documents and write translation jobs.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        target_lang: String,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        fraction: f64,
        #[arg(long, conflicts_with = "model")]
        scores: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Send jobs to a translator and write the translated documents.
    Run {
        #[arg(long)]
        jobs: PathBuf,
        /// Documents the jobs refer to.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// `mock`, `mock:MARKER`, `http:URL` or `subprocess:COMMAND`.
        #[arg(long, default_value = "mock")]
        translator: String,
        /// Make the mock translator fail on this source id.
        #[arg(long = "fail-id")]
        fail_ids: Vec<String>,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[arg(long)]
        max_in_flight: Option<usize>,
        #[arg(long)]
        retries: Option<usize>,
    },
}

#[derive(Subcommand)]
enum MixtureCmd {
    /// Allocate phase budgets over the available pools.
    Plan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, conflicts_with = "reference_inventory")]
        inventory: Option<PathBuf>,
        /// Use the bundled per-language corpus sizes.
        #[arg(long)]
        reference_inventory: bool,
        /// English pool size for the bundled inventory.
        #[arg(long, default_value_t = 4_000_000_000_000)]
        english_tokens: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sample documents according to a manifest.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Defaults to the manifest's tokenizer.
        #[arg(long)]
        tokenizer: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    PerWord,
    Total,
}

#[derive(Subcommand)]
enum SimilarityCmd {
    /// Mean log cosine distance between parallel sentences, per language.
    EmbedDist {
        /// TSV with columns tgt_lang, en, tgt.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long = "embedder", required = true)]
        embedders: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-word log perplexity of each target language under an LM.
    Ppl {
        /// Training documents for the character LM.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(long, default_value_t = similarity::DEFAULT_LM_ORDER)]
        order: usize,
        /// Target documents, grouped by their `lang`.
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value = "per-word")]
        normalization: NormalizationArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Correlate per-language metrics with uplift.
    Correlate {
        #[arg(long)]
        embed: Option<PathBuf>,
        #[arg(long)]
        ppl: Option<PathBuf>,
        /// Per-language uplift JSON object.
        #[arg(long, conflicts_with = "evals")]
        uplift: Option<PathBuf>,
        /// Compute uplift from evaluations instead.
        #[arg(long, requires_all = ["base", "new"])]
        evals: Option<PathBuf>,
        #[arg(long)]
        base: Option<String>,
        #[arg(long)]
        new: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Training compute for each model card.
    Flops {
        /// Model cards JSONL; defaults to the bundled table.
        #[arg(long)]
        cards: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-language mean accuracy.
    Aggregate {
        #[arg(long)]
        evals: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute vs. error-rate frontier.
    Pareto {
        #[arg(long)]
        cards: Option<PathBuf>,
        #[arg(long)]
        evals: Option<PathBuf>,
        /// Comma-separated languages averaged into the error rate.
        #[arg(long, value_delimiter = ',')]
        langs: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Per-language relative improvement of one model over another.
    Improve {
        #[arg(long)]
        evals: Option<PathBuf>,
        #[arg(long)]
        base: String,
        #[arg(long)]
        new: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score against language-specific training tokens.
    Efficiency {
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long)]
        evals: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

/// Bad user-supplied configuration; exits with status 2.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(run) = e.downcast_ref::<RunError>() {
                eprintln!("{run}");
                return ExitCode::from(run.exit_code() as u8);
            }
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Langid(c) => langid_cmd(c),
        Command::Quality(c) => quality_cmd(cli, c),
        Command::Dedup(a) => {
            let (docs, embs) = embed_input(&a.embed)?;
            let ids = embedding::dedup_near(&embs, a.tau)?;
            let kept = embedding::retain_tagged(&docs, &ids, EMBED_DEDUP_TAG);
            corpus::write_documents_to(&a.embed.output, &kept)?;
            eprintln!("kept {} of {} documents", kept.len(), docs.len());
            Ok(())
        }
        Command::Select(a) => {
            let (docs, embs) = embed_input(&a.embed)?;
            let ids = embedding::select_diverse(&embs, a.k)?;
            let kept = embedding::retain_tagged(&docs, &ids, DIVERSE_TAG);
            corpus::write_documents_to(&a.embed.output, &kept)?;
            eprintln!("selected {} of {} documents", kept.len(), docs.len());
            Ok(())
        }
        Command::Translate(c) => translate_cmd(cli, c),
        Command::Mixture(c) => mixture_cmd(cli, c),
        Command::Similarity(c) => similarity_cmd(c),
        Command::Analyze(c) => analyze_cmd(c),
        Command::Run { path } => {
            let mut cfg = pipeline::load_config(config_path(cli, path)?).map_err(RunError::Config)?;
            apply_globals(cli, &mut cfg);
            let report = pipeline::run(&cfg)?;
            eprintln!(
                "ran {} stage{}, report at {}",
                report.stages.len(),
                if report.stages.len() == 1 { "" } else { "s" },
                cfg.output_dir().join(pipeline::REPORT_FILE).display()
            );
            Ok(())
        }
        Command::Validate { path } => {
            let cfg = pipeline::load_config(config_path(cli, path)?).map_err(RunError::Config)?;
            println!("ok: {} stages", cfg.stages.len());
            Ok(())
        }
    }
}

fn config_path<'a>(cli: &'a Cli, given: &'a Option<PathBuf>) -> anyhow::Result<&'a Path> {
    given
        .as_deref()
        .or(cli.config.as_deref())
        .ok_or_else(|| config_err("no config given (pass a path or --config)"))
}

/// Command-line `--seed` / `--strict` override the config when given.
fn apply_globals(cli: &Cli, cfg: &mut pipeline::ValidatedConfig) {
    if cli.seed != 0 {
        cfg.config.seed = cli.seed;
    }
    cfg.config.strict |= cli.strict;
}

fn ingest(cli: &Cli, a: &IngestArgs) -> anyhow::Result<()> {
    let tok = spelling::tokenizer(&a.tokenizer).map_err(|e| config_err(e.to_string()))?;
    let got = corpus::ingest(
        &a.inputs,
        &IngestOptions {
            lang_default: a.lang_default.clone(),
            source_default: a.source_default.clone(),
            strict: cli.strict,
            ..Default::default()
        },
    )?;
    for e in &got.skipped {
        eprintln!("skipped: {e}");
    }
    corpus::write_documents_to(&a.output, &got.docs)?;
    if let Some(p) = &a.inventory {
        corpus::write_json_file(p, &corpus::build_inventory(&got.docs, &tok)?)?;
    }
    eprintln!("ingested {} documents, skipped {}", got.docs.len(), got.skipped.len());
    Ok(())
}

fn load_profiles(path: &Path) -> anyhow::Result<ProfileSet> {
    if path.is_dir() {
        let seeds = langid::read_seed_dir(path)?;
        Ok(langid::train_profiles(&seeds, langid::DEFAULT_N_RANGE, langid::DEFAULT_TOP_K)?)
    } else {
        Ok(corpus::read_json_file(path)?)
    }
}

fn langid_cmd(c: &LangidCmd) -> anyhow::Result<()> {
    match c {
        LangidCmd::Train {
            seeds,
            output,
            top_k,
            n_max,
        } => {
            let seeds = langid::read_seed_dir(seeds)?;
            let set = langid::train_profiles(&seeds, 1..=*n_max, *top_k)?;
            corpus::write_json_file(output, &set)?;
            eprintln!("trained {} profiles", set.profiles.len());
        }
        LangidCmd::Predict {
            profiles,
            input,
            output,
            min_chars,
            relabel,
        } => {
            let set = load_profiles(profiles)?;
            let mut docs = corpus::read_documents(input)?;
            let (mut labelled, mut unknown) = (0usize, 0usize);
            for d in docs.iter_mut().filter(|d| *relabel || d.lang.is_none()) {
                match set.classify(&d.text, *min_chars)? {
                    LangPrediction::Known { lang, .. } => {
                        d.lang = Some(lang);
                        labelled += 1;
                    }
                    LangPrediction::Unknown => unknown += 1,
                }
            }
            corpus::write_documents_to(output, &docs)?;
            eprintln!("labelled {labelled}, unknown {unknown}");
        }
    }
    Ok(())
}

fn read_model(path: &Path) -> anyhow::Result<QualityModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(QualityModel::from_json(&text)?)
}

fn quality_cmd(cli: &Cli, c: &QualityCmd) -> anyhow::Result<()> {
    match c {
        QualityCmd::Train {
            positive,
            negative,
            output,
            lang,
            epochs,
            learning_rate,
            hash_dim,
            holdout,
        } => {
            let d = TrainConfig::default();
            let cfg = TrainConfig {
                lang: lang.clone(),
                seed: cli.seed,
                epochs: epochs.unwrap_or(d.epochs),
                learning_rate: learning_rate.unwrap_or(d.learning_rate),
                hash_dim: hash_dim.unwrap_or(d.hash_dim),
                holdout_fraction: holdout.unwrap_or(d.holdout_fraction),
                ngrams: d.ngrams,
            };
            let pos = corpus::read_documents(positive)?;
            let neg = corpus::read_documents(negative)?;
            let report = quality::train_quality::<f32>(&pos, &neg, &cfg)?;
            corpus::write_bytes(output, report.model.to_json().as_bytes())?;
            println!(
                "{}",
                serde_json::json!({
                    "heldout_accuracy": report.heldout_accuracy,
                    "train_size": report.train_size,
                    "heldout_size": report.heldout_size,
                })
            );
        }
        QualityCmd::Score { model, input, output } => {
            let model = read_model(model)?;
            let docs = corpus::read_documents(input)?;
            corpus::write_jsonl_file(output, &quality::score(&docs, &model))?;
        }
        QualityCmd::Filter {
            input,
            output,
            scores,
            keep,
        } => {
            let docs = corpus::read_documents(input)?;
            let scores = load_scores(&docs, scores.scores.as_deref(), scores.model.as_deref())?
                .expect("clap requires a score source");
            let kept = quality::filter_top(&docs, &scores, keep.keep())?;
            corpus::write_documents_to(output, &kept)?;
            eprintln!("kept {} of {} documents", kept.len(), docs.len());
        }
    }
    Ok(())
}

fn load_scores(docs: &[Document], scores: Option<&Path>, model: Option<&Path>) -> anyhow::Result<Option<Vec<ScoreRecord>>> {
    match (scores, model) {
        (Some(p), _) => Ok(Some(corpus::read_jsonl_file(p)?)),
        (_, Some(m)) => Ok(Some(quality::score(docs, &read_model(m)?))),
        _ => Ok(None),
    }
}

fn embed_input(a: &EmbedArgs) -> anyhow::Result<(Vec<Document>, Vec<EmbeddingVector<f64>>)> {
    let docs = corpus::read_documents(&a.input)?;
    let embs = match (&a.source.embedder, &a.source.embeddings) {
        (Some(s), _) => {
            let e = spelling::embedder(s).map_err(|e| config_err(e.to_string()))?.build();
            embedding::embed_documents(&docs, e.as_ref(), a.batch)?
        }
        (_, Some(p)) => {
            let by_id: HashMap<String, EmbeddingVector<f64>> =
                embedding::load_embeddings(p)?.into_iter().map(|e| (e.doc_id.clone(), e)).collect();
            docs.iter()
                .map(|d| {
                    by_id
                        .get(&d.id)
                        .cloned()
                        .ok_or_else(|| anyhow!("no embedding for document `{}`", d.id))
                })
                .collect::<anyhow::Result<_>>()?
        }
        _ => unreachable!("clap requires an embedding source"),
    };
    if let Some(p) = &a.save_embeddings {
        corpus::write_jsonl_file(p, &embs)?;
    }
    Ok((docs, embs))
}

fn translate_cmd(cli: &Cli, c: &TranslateCmd) -> anyhow::Result<()> {
    match c {
        TranslateCmd::Select {
            input,
            output,
            target_lang,
            strategy,
            fraction,
            scores,
            model,
        } => {
            let docs: Vec<Document> = corpus::read_documents(input)?
                .into_iter()
                .filter(|d| d.lang.as_deref() == Some(languages::ENGLISH))
                .collect();
            let scores = load_scores(&docs, scores.as_deref(), model.as_deref())?;
            let strategy = match strategy {
                StrategyArg::Random => Strategy::Random,
                StrategyArg::Scored => Strategy::Scored,
            };
            let jobs = translate::select_sources(&docs, strategy, *fraction, scores.as_deref(), target_lang, cli.seed)?;
            corpus::write_jsonl_file(output, &jobs)?;
            eprintln!("{} jobs from {} English documents", jobs.len(), docs.len());
        }
        TranslateCmd::Run {
            jobs,
            input,
            output,
            translator,
            fail_ids,
            failures,
            max_in_flight,
            retries,
        } => {
            let jobs: Vec<TranslationJob> = corpus::read_jsonl_file(jobs)?;
            let Some(target) = jobs.first().map(|j| j.target_lang.clone()) else {
                corpus::write_documents_to(output, &[])?;
                return Ok(());
            };
            if let Some(j) = jobs.iter().find(|j| j.target_lang != target) {
                bail!("jobs mix target languages `{target}` and `{}`", j.target_lang);
            }
            let store: HashMap<String, Document> =
                corpus::read_documents(input)?.into_iter().map(|d| (d.id.clone(), d)).collect();
            let spec = spelling::translator(translator, fail_ids.clone()).map_err(|e| config_err(e.to_string()))?;
            let d = TranslateOptions::default();
            let opts = TranslateOptions {
                max_in_flight: max_in_flight.unwrap_or(d.max_in_flight),
                retries: retries.unwrap_or(d.retries),
                strict: cli.strict,
            };
            let out = translate::translate(&jobs, &store, spec.build().as_ref(), &target, &opts)?;
            corpus::write_documents_to(output, &out.docs)?;
            if let Some(p) = failures {
                corpus::write_jsonl_file(p, &out.failures)?;
            }
            for f in &out.failures {
                eprintln!("failed: {f:?}");
            }
            eprintln!("translated {} of {} jobs", out.docs.len(), jobs.len());
        }
    }
    Ok(())
}

/// Reads a plan, reporting problems as configuration errors.
fn read_plan(path: &Path, seed: u64) -> anyhow::Result<MixturePlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let problems = mixture::check_plan_json(&value);
    if !problems.is_empty() {
        return Err(config_err(problems.join("; ")));
    }
    let mut plan: MixturePlan = parse_value(&value, path)?;
    if value.get("seed").is_none() {
        plan.seed = seed;
    }
    let diags = plan.diagnostics();
    if !diags.is_empty() {
        return Err(config_err(diags.join("; ")));
    }
    Ok(plan)
}

fn parse_value<T: serde::de::DeserializeOwned>(v: &serde_json::Value, path: &Path) -> anyhow::Result<T> {
    T::deserialize(v).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn mixture_cmd(cli: &Cli, c: &MixtureCmd) -> anyhow::Result<()> {
    match c {
        MixtureCmd::Plan {
            plan,
            inventory,
            reference_inventory,
            english_tokens,
            output,
        } => {
            let plan = read_plan(plan, cli.seed)?;
            let inv = match inventory {
                Some(p) => corpus::read_json_file(p)?,
                None if *reference_inventory => languages::reference_inventory(*english_tokens),
                None => return Err(config_err("pass --inventory or --reference-inventory")),
            };
            let manifest = mixture::plan(&plan, &inv, cli.strict)?;
            corpus::write_json_file(output, &manifest)?;
            println!(
                "{}",
                serde_json::json!({
                    "overall_multilingual_fraction": manifest.overall_multilingual_fraction,
                    "multilingual_tokens": manifest.multilingual_total(),
                    "deficit": manifest.total_deficit(),
                    "language_totals": manifest.language_totals(),
                })
            );
        }
        MixtureCmd::Build {
            manifest,
            inputs,
            output,
            report,
            tokenizer,
        } => {
            let manifest: SamplingManifest = corpus::read_json_file(manifest)?;
            let tok_id = tokenizer.clone().unwrap_or_else(|| manifest.tokenizer_id.clone());
            let tok = spelling::tokenizer(&tok_id).map_err(|e| config_err(e.to_string()))?;
            let mut docs = Vec::new();
            for p in inputs {
                docs.extend(corpus::read_documents(p)?);
            }
            let stores = corpus::group_pools(docs);
            let (mixed, rep) = mixture::build(&manifest, &stores, &tok)?;
            corpus::write_documents_to(output, &mixed)?;
            if let Some(p) = report {
                corpus::write_json_file(p, &rep)?;
            }
            eprintln!("emitted {} documents, {} tokens", rep.documents, rep.tokens);
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, output: &Option<PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(p) => corpus::write_json_file(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn emit_text(text: &str, output: &Option<PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(p) => corpus::write_bytes(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_map(path: &Option<PathBuf>) -> anyhow::Result<BTreeMap<String, f64>> {
    match path {
        Some(p) => Ok(corpus::read_json_file(p)?),
        None => Ok(BTreeMap::new()),
    }
}

fn similarity_cmd(c: &SimilarityCmd) -> anyhow::Result<()> {
    match c {
        SimilarityCmd::EmbedDist {
            pairs,
            embedders,
            output,
        } => {
            let pairs = similarity::read_parallel_tsv(pairs)?;
            let built = embedders
                .iter()
                .map(|s| spelling::embedder(s).map(|e| e.build()))
                .collect::<anyhow::Result<Vec<_>>>()
                .map_err(|e| config_err(e.to_string()))?;
            let refs: Vec<&dyn embedding::Embedder> = built.iter().map(|b| b.as_ref()).collect();
            emit_json(&similarity::embed_distance(&pairs, &refs)?, output)
        }
        SimilarityCmd::Ppl {
            train,
            lang,
            order,
            target,
            normalization,
            output,
        } => {
            let lm = similarity::train_char_lm(&corpus::read_documents(train)?, *order, lang)?;
            let mut by_lang: BTreeMap<String, Vec<Document>> = BTreeMap::new();
            for d in corpus::read_documents(target)? {
                by_lang.entry(d.lang_or_und().to_owned()).or_default().push(d);
            }
            let mode = match normalization {
                NormalizationArg::PerWord => PplNormalization::PerWord,
                NormalizationArg::Total => PplNormalization::Total,
            };
            let rule = WordRule::default();
            let out = by_lang
                .iter()
                .map(|(l, docs)| Ok((l.clone(), similarity::log_ppl_per_word(&lm, docs, l, &rule, mode)?)))
                .collect::<mlcurate::Result<BTreeMap<String, f64>>>()?;
            emit_json(&out, output)
        }
        SimilarityCmd::Correlate {
            embed,
            ppl,
            uplift,
            evals,
            base,
            new,
            output,
        } => {
            let uplift = match evals {
                Some(_) => load_evals(evals)?.uplift(base.as_deref().unwrap_or(""), new.as_deref().unwrap_or(""))?,
                None => read_map(uplift)?,
            };
            let report = similarity::correlate(&read_map(embed)?, &read_map(ppl)?, &uplift)?;
            emit_json(&report, output)
        }
    }
}

fn load_cards(path: &Option<PathBuf>) -> anyhow::Result<Vec<ModelCard>> {
    match path {
        Some(p) => Ok(corpus::read_jsonl_file(p)?),
        None => Ok(reference::model_cards()),
    }
}

fn load_evals(path: &Option<PathBuf>) -> anyhow::Result<EvalTable> {
    match path {
        Some(p) => Ok(EvalTable::from_records(&corpus::read_jsonl_file::<EvalRecord>(p)?)?),
        None => Ok(reference::eval_table()),
    }
}

#[derive(Serialize)]
struct MeanRow<'a> {
    model_id: &'a str,
    lang: &'a str,
    mean_accuracy: f64,
}

#[derive(Serialize)]
struct ImproveRow<'a> {
    lang: &'a str,
    base: f64,
    new: f64,
    relative_improvement: f64,
}

fn analyze_cmd(c: &AnalyzeCmd) -> anyhow::Result<()> {
    match c {
        AnalyzeCmd::Flops { cards, output } => {
            let rows: Vec<_> = load_cards(cards)?.iter().map(ModelCard::compute).collect();
            emit_text(&analytics::to_csv(&rows)?, output)
        }
        AnalyzeCmd::Aggregate { evals, model, output } => {
            let table = load_evals(evals)?;
            let mut rows = Vec::new();
            for m in table.models() {
                if model.as_deref().is_some_and(|x| x != m) {
                    continue;
                }
                for l in table.languages(m) {
                    rows.push(MeanRow {
                        model_id: m,
                        lang: l,
                        mean_accuracy: table.aggregate(m, l)?,
                    });
                }
            }
            emit_text(&analytics::to_csv(&rows)?, output)
        }
        AnalyzeCmd::Pareto {
            cards,
            evals,
            langs,
            output,
            svg,
        } => {
            let table = load_evals(evals)?;
            let langs: Vec<&str> = if langs.is_empty() {
                languages::multilingual_codes()
            } else {
                langs.iter().map(String::as_str).collect()
            };
            let mut points = Vec::new();
            for card in load_cards(cards)? {
                // Models without scores in every requested language are left out.
                if let Ok(avg) = table.multilingual_average(&card.model_id, &langs) {
                    points.push(ParetoPoint {
                        x: card.compute().flops,
                        y: analytics::error_rate(avg)?,
                        model_id: card.model_id,
                    });
                }
            }
            let front = analytics::pareto_frontier(&points);
            if let Some(p) = svg {
                corpus::write_bytes(p, analytics::pareto_svg(&points, &front).as_bytes())?;
            }
            emit_text(&analytics::to_csv(&front)?, output)
        }
        AnalyzeCmd::Improve {
            evals,
            base,
            new,
            output,
        } => {
            let table = load_evals(evals)?;
            let (b, n) = (table.language_means(base), table.language_means(new));
            let gains = table.uplift(base, new)?;
            if gains.is_empty() {
                bail!("`{base}` and `{new}` share no languages");
            }
            let rows: Vec<ImproveRow> = gains
                .iter()
                .map(|(l, g)| ImproveRow {
                    lang: l,
                    base: b[l],
                    new: n[l],
                    relative_improvement: *g,
                })
                .collect();
            eprintln!(
                "mean relative improvement: {:.4}",
                analytics::mean_relative_improvement(&b, &n)?
            );
            emit_text(&analytics::to_csv(&rows)?, output)
        }
        AnalyzeCmd::Efficiency {
            estimates,
            evals,
            output,
            svg,
        } => {
            let est: Vec<TokenEstimate> = match estimates {
                Some(p) => corpus::read_jsonl_file(p)?,
                None => reference::token_estimates(),
            };
            let rows = analytics::efficiency_report(&analytics::efficiency_records(&est, &load_evals(evals)?)?);
            if let Some(p) = svg {
                corpus::write_bytes(p, analytics::efficiency_svg(&rows).as_bytes())?;
            }
            emit_text(&analytics::to_csv(&rows)?, output)
        }
    }
}
