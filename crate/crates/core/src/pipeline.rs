//! Config-driven, multi-stage runs with a digest-bearing run report.
//!
//! A config names its input files, an output directory and an ordered list
//! of stages. Stages pass one in-memory document stream along; each writes
//! its outputs under `<output_dir>/<stage name>/` and one entry in
//! `report.json`. Wall times go to `timings.json` so the report itself is
//! reproducible byte for byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::{self, CorpusInventory, Document, IngestOptions, TokenizerSpec};
use crate::embedding::{self, EmbedderSpec, DIVERSE_TAG, EMBED_DEDUP_TAG};
use crate::error::Error;
use crate::langid::{self, LangPrediction, ProfileSet};
use crate::languages;
use crate::mixture::{self, MixturePlan};
use crate::quality::{self, Keep, QualityModel, TrainConfig};
use crate::translate::{self, Strategy, TranslateOptions, TranslatorSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const STAGE_TAG_PREFIX: &str = "stage:";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    /// Named files, relative to the config file.
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    /// Relative to the config file.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    pub op: String,
    #[serde(default)]
    pub params: Value,
}

// ---------------------------------------------------------------------------
// Stage parameters

fn default_min_chars() -> usize {
    200
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestParams {
    pub inputs: Vec<String>,
    #[serde(default)]
    pub lang_default: Option<String>,
    #[serde(default)]
    pub source_default: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangidParams {
    /// Input holding a profile set (JSON) or a directory of seed texts.
    pub profiles: String,
    #[serde(default = "default_min_chars")]
    pub min_chars: usize,
    /// Re-label documents that already carry a language.
    #[serde(default)]
    pub relabel: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityTrainParams {
    pub positive: String,
    pub negative: String,
    #[serde(default)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityFilterParams {
    /// Input or `quality_train` stage holding the model.
    pub model: String,
    pub keep: Keep,
    /// Only documents in this language are filtered; others pass through.
    #[serde(default)]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupParams {
    pub embedder: EmbedderSpec,
    pub tau: f64,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectParams {
    pub embedder: EmbedderSpec,
    pub k: usize,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateParams {
    pub target_lang: String,
    pub strategy: Strategy,
    pub fraction: f64,
    pub translator: TranslatorSpec,
    /// Required by the scored strategy.
    #[serde(default)]
    pub quality_model: Option<String>,
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    #[serde(default)]
    pub retries: Option<usize>,
    /// Source name for the translated documents; defaults to the original's.
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub plan: MixturePlan,
    /// Input holding an inventory; defaults to the current stream's.
    #[serde(default)]
    pub inventory: Option<String>,
    /// Materialize the mixture; defaults to true unless an inventory is given.
    #[serde(default)]
    pub build: Option<bool>,
}

#[derive(Debug, Clone)]
pub enum StageOp {
    Ingest(IngestParams),
    Langid(LangidParams),
    QualityTrain(QualityTrainParams),
    QualityFilter(QualityFilterParams),
    Dedup(DedupParams),
    Select(SelectParams),
    Translate(TranslateParams),
    Mixture(MixtureParams),
}

pub const STAGE_OPS: [&str; 8] = [
    "ingest",
    "langid",
    "quality_train",
    "quality_filter",
    "dedup",
    "select",
    "translate",
    "mixture",
];

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// A config that passed every check, with paths resolved.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    pub stages: Vec<(StageSpec, StageOp)>,
}

impl ValidatedConfig {
    pub fn output_dir(&self) -> PathBuf {
        corpus::resolve_path(&self.base_dir, &self.config.output_dir)
    }

    pub fn input_path(&self, name: &str) -> Option<PathBuf> {
        self.config.inputs.get(name).map(|p| corpus::resolve_path(&self.base_dir, p))
    }
}

fn typed<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T, Diagnostic> {
    serde_path_to_error::deserialize(v.clone()).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_owned() } else { format!("{prefix}.{inner}") };
        Diagnostic::new(path, e.into_inner().to_string())
    })
}

/// Reads and checks a config file without running anything.
pub fn load_config(path: &Path) -> Result<ValidatedConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        vec![Diagnostic::new("", format!("{}: invalid JSON at line {}, column {}: {e}", path.display(), e.line(), e.column()))]
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate_value(&value, &base)
}

/// Full schema and cross-reference check of a parsed config. Relative
/// paths resolve against `base_dir`.
pub fn validate_value(value: &Value, base_dir: &Path) -> Result<ValidatedConfig, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    // Plan checks on the raw value first, so that e.g. a negative token
    // count is reported against its phase rather than as a type error.
    if let Some(stages) = value.get("stages").and_then(Value::as_array) {
        for (i, s) in stages.iter().enumerate() {
            if s.get("op").and_then(Value::as_str) == Some("mixture") {
                if let Some(plan) = s.get("params").and_then(|p| p.get("plan")) {
                    let path = format!("stages[{i}].params.plan");
                    diags.extend(mixture::check_plan_json(plan).into_iter().map(|m| Diagnostic::new(&path, m)));
                }
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let config: PipelineConfig = typed(value, "").map_err(|d| vec![d])?;
    if config.schema_version != SCHEMA_VERSION {
        diags.push(Diagnostic::new(
            "schema_version",
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", config.schema_version),
        ));
    }
    for (name, p) in &config.inputs {
        let full = corpus::resolve_path(base_dir, p);
        if !full.exists() {
            diags.push(Diagnostic::new(format!("inputs.{name}"), format!("{} does not exist", full.display())));
        }
    }

    let mut names = HashSet::new();
    // Names that later stages may reference: inputs and model-producing stages.
    let mut models: HashSet<String> = HashSet::new();
    let mut stages = Vec::new();
    for (i, spec) in config.stages.iter().enumerate() {
        let at = format!("stages[{i}]");
        if spec.name.is_empty() {
            diags.push(Diagnostic::new(format!("{at}.name"), "stage name is empty"));
        } else if !names.insert(spec.name.clone()) {
            diags.push(Diagnostic::new(format!("{at}.name"), format!("duplicate stage name `{}`", spec.name)));
        } else if config.inputs.contains_key(&spec.name) {
            diags.push(Diagnostic::new(format!("{at}.name"), format!("stage name `{}` shadows an input", spec.name)));
        }
        let params_at = format!("{at}.params");
        let params = if spec.params.is_null() { Value::Object(Default::default()) } else { spec.params.clone() };
        let input = |name: &str, field: &str, diags: &mut Vec<Diagnostic>| {
            if !config.inputs.contains_key(name) {
                diags.push(Diagnostic::new(format!("{params_at}.{field}"), format!("`{name}` is not a declared input")));
            }
        };
        let model_ref = |name: &str, field: &str, diags: &mut Vec<Diagnostic>| {
            if !config.inputs.contains_key(name) && !models.contains(name) {
                diags.push(Diagnostic::new(
                    format!("{params_at}.{field}"),
                    format!("`{name}` is neither a declared input nor an earlier quality_train stage"),
                ));
            }
        };
        let op = match spec.op.as_str() {
            "ingest" => typed::<IngestParams>(&params, &params_at).map(|p| {
                for (j, n) in p.inputs.iter().enumerate() {
                    input(n, &format!("inputs[{j}]"), &mut diags);
                }
                StageOp::Ingest(p)
            }),
            "langid" => typed::<LangidParams>(&params, &params_at).map(|p| {
                input(&p.profiles, "profiles", &mut diags);
                StageOp::Langid(p)
            }),
            "quality_train" => typed::<QualityTrainParams>(&params, &params_at).map(|p| {
                input(&p.positive, "positive", &mut diags);
                input(&p.negative, "negative", &mut diags);
                if !(p.config.hash_dim > 0) {
                    diags.push(Diagnostic::new(format!("{params_at}.config.hash_dim"), "must be positive"));
                }
                StageOp::QualityTrain(p)
            }),
            "quality_filter" => typed::<QualityFilterParams>(&params, &params_at).map(|p| {
                model_ref(&p.model, "model", &mut diags);
                match p.keep {
                    Keep::Fraction { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                        diags.push(Diagnostic::new(format!("{params_at}.keep.fraction"), "must be in (0, 1]"))
                    }
                    Keep::Threshold { threshold } if !(0.0..=1.0).contains(&threshold) => {
                        diags.push(Diagnostic::new(format!("{params_at}.keep.threshold"), "must be in [0, 1]"))
                    }
                    _ => {}
                }
                StageOp::QualityFilter(p)
            }),
            "dedup" => typed::<DedupParams>(&params, &params_at).map(|p| {
                if !(p.tau > 0.0 && p.tau < 2.0) {
                    diags.push(Diagnostic::new(format!("{params_at}.tau"), "must be in (0, 2)"));
                }
                StageOp::Dedup(p)
            }),
            "select" => typed::<SelectParams>(&params, &params_at).map(|p| {
                if p.k == 0 {
                    diags.push(Diagnostic::new(format!("{params_at}.k"), "must be at least 1"));
                }
                StageOp::Select(p)
            }),
            "translate" => typed::<TranslateParams>(&params, &params_at).map(|p| {
                if !languages::is_supported(&p.target_lang) || p.target_lang == languages::ENGLISH {
                    diags.push(Diagnostic::new(
                        format!("{params_at}.target_lang"),
                        format!("unsupported target language `{}`", p.target_lang),
                    ));
                }
                if !(p.fraction > 0.0 && p.fraction <= 1.0) {
                    diags.push(Diagnostic::new(format!("{params_at}.fraction"), "must be in (0, 1]"));
                }
                match (&p.strategy, &p.quality_model) {
                    (Strategy::Scored, None) => diags.push(Diagnostic::new(
                        format!("{params_at}.quality_model"),
                        "the scored strategy needs a quality model",
                    )),
                    (_, Some(m)) => model_ref(m, "quality_model", &mut diags),
                    _ => {}
                }
                StageOp::Translate(p)
            }),
            "mixture" => typed::<MixtureParams>(&params, &params_at).map(|p| {
                for m in p.plan.diagnostics() {
                    diags.push(Diagnostic::new(format!("{params_at}.plan"), m));
                }
                if let Some(inv) = &p.inventory {
                    input(inv, "inventory", &mut diags);
                }
                StageOp::Mixture(p)
            }),
            other => Err(Diagnostic::new(
                format!("{at}.op"),
                format!("unknown stage op `{other}` (expected one of {})", STAGE_OPS.join(", ")),
            )),
        };
        match op {
            Ok(op) => {
                if matches!(op, StageOp::QualityTrain(_)) {
                    models.insert(spec.name.clone());
                }
                stages.push((spec.clone(), op));
            }
            Err(d) => diags.push(d),
        }
    }

    if diags.is_empty() {
        Ok(ValidatedConfig {
            config,
            base_dir: base_dir.to_path_buf(),
            stages,
        })
    } else {
        Err(diags)
    }
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug)]
pub enum RunError {
    Config(Vec<Diagnostic>),
    Stage { stage: String, source: Error },
}

impl RunError {
    /// 2 for configuration errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(diags) => {
                for (i, d) in diags.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "config error: {d}")?;
                }
                Ok(())
            }
            RunError::Stage { stage, source } => write!(f, "stage `{stage}` failed: {source}"),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub op: String,
    pub params: Value,
    /// Digest of everything the stage consumed: incoming stream, referenced
    /// files, parameters, seed and tokenizer.
    pub inputs_digest: String,
    /// Output file (relative to the output directory) to its digest.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub strict: bool,
    pub tokenizer_id: String,
    pub stages: Vec<StageReport>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn docs_bytes(docs: &[Document]) -> Vec<u8> {
    let mut buf = Vec::new();
    corpus::write_documents(&mut buf, docs).expect("writing to memory");
    buf
}

/// Digest of a file or, for a directory, of its sorted entries.
fn path_digest(p: &Path) -> crate::Result<String> {
    let mut h = Sha256::new();
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            h.update(e.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            h.update(path_digest(&e)?);
        }
    } else {
        h.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

struct Run<'a> {
    cfg: &'a ValidatedConfig,
    out_dir: PathBuf,
    docs: Vec<Document>,
    /// quality_train stage name to its model file.
    models: HashMap<String, PathBuf>,
}

struct StageOutput {
    files: Vec<(String, Vec<u8>)>,
    counts: BTreeMap<String, u64>,
}

impl StageOutput {
    fn new() -> Self {
        StageOutput {
            files: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
        bytes.push(b'\n');
        self.file(name, bytes);
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) {
        let mut bytes = Vec::new();
        for r in rows {
            bytes.extend(serde_json::to_vec(r).expect("serializable"));
            bytes.push(b'\n');
        }
        self.file(name, bytes);
    }

    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_owned(), n as u64);
    }
}

fn tag_stage(doc: &mut Document, stage: &str) {
    doc.tag(format!("{STAGE_TAG_PREFIX}{stage}"));
}

fn in_scope(doc: &Document, lang: &Option<String>) -> bool {
    lang.as_ref().is_none_or(|l| doc.lang.as_deref() == Some(l.as_str()))
}

impl Run<'_> {
    fn input(&self, name: &str) -> PathBuf {
        self.cfg.input_path(name).expect("validated input reference")
    }

    fn model_path(&self, name: &str) -> PathBuf {
        self.models.get(name).cloned().unwrap_or_else(|| self.input(name))
    }

    fn referenced_paths(&self, op: &StageOp) -> Vec<PathBuf> {
        match op {
            StageOp::Ingest(p) => p.inputs.iter().map(|n| self.input(n)).collect(),
            StageOp::Langid(p) => vec![self.input(&p.profiles)],
            StageOp::QualityTrain(p) => vec![self.input(&p.positive), self.input(&p.negative)],
            StageOp::QualityFilter(p) => vec![self.model_path(&p.model)],
            StageOp::Translate(p) => p.quality_model.iter().map(|m| self.model_path(m)).collect(),
            StageOp::Mixture(p) => p.inventory.iter().map(|n| self.input(n)).collect(),
            StageOp::Dedup(_) | StageOp::Select(_) => Vec::new(),
        }
    }

    fn inputs_digest(&self, spec: &StageSpec, op: &StageOp) -> crate::Result<String> {
        let c = &self.cfg.config;
        let mut h = Sha256::new();
        h.update(spec.op.as_bytes());
        h.update(serde_json::to_vec(&spec.params)?);
        h.update(c.seed.to_le_bytes());
        h.update([c.strict as u8]);
        h.update(c.tokenizer.id());
        h.update(Sha256::digest(docs_bytes(&self.docs)));
        for p in self.referenced_paths(op) {
            h.update(path_digest(&p)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn stage_seed(&self, name: &str) -> u64 {
        mixture::mix_seed(self.cfg.config.seed, name)
    }

    fn run_stage(&mut self, spec: &StageSpec, op: &StageOp) -> crate::Result<StageOutput> {
        let mut out = StageOutput::new();
        let name = spec.name.as_str();
        let strict = self.cfg.config.strict;
        let tok = &self.cfg.config.tokenizer;
        out.count("docs_in", self.docs.len());
        match op {
            StageOp::Ingest(p) => {
                let paths: Vec<PathBuf> = p.inputs.iter().map(|n| self.input(n)).collect();
                let got = corpus::ingest(
                    &paths,
                    &IngestOptions {
                        lang_default: p.lang_default.clone(),
                        source_default: p.source_default.clone(),
                        strict,
                        ..Default::default()
                    },
                )?;
                let mut seen: HashSet<&str> = self.docs.iter().map(|d| d.id.as_str()).collect();
                for d in &got.docs {
                    if !seen.insert(&d.id) {
                        return Err(Error::DuplicateId(d.id.clone()));
                    }
                }
                out.count("ingested", got.docs.len());
                out.count("skipped_records", got.skipped.len());
                if !got.skipped.is_empty() {
                    let lines: Vec<String> = got.skipped.iter().map(|e| e.to_string()).collect();
                    out.jsonl("skipped.jsonl", &lines);
                }
                self.docs.extend(got.docs.into_iter().map(|mut d| {
                    tag_stage(&mut d, name);
                    d
                }));
                let inv = corpus::build_inventory(&self.docs, tok)?;
                out.json("inventory.json", &inv);
            }
            StageOp::Langid(p) => {
                let src = self.input(&p.profiles);
                let profiles: ProfileSet = if src.is_dir() {
                    let seeds = langid::read_seed_dir(&src)?;
                    langid::train_profiles(&seeds, langid::DEFAULT_N_RANGE, langid::DEFAULT_TOP_K)?
                } else {
                    corpus::read_json_file(&src)?
                };
                use rayon::prelude::*;
                let preds: Vec<Option<LangPrediction>> = self
                    .docs
                    .par_iter()
                    .map(|d| {
                        if (d.lang.is_some() && !p.relabel) || d.text.trim().is_empty() {
                            Ok(None)
                        } else {
                            profiles.classify(&d.text, p.min_chars).map(Some)
                        }
                    })
                    .collect::<crate::Result<_>>()?;
                let (mut labelled, mut unknown) = (0, 0);
                for (d, pred) in self.docs.iter_mut().zip(preds) {
                    match pred {
                        Some(LangPrediction::Known { lang, .. }) => {
                            d.lang = Some(lang);
                            tag_stage(d, name);
                            labelled += 1;
                        }
                        Some(LangPrediction::Unknown) => unknown += 1,
                        None => {}
                    }
                }
                out.count("labelled", labelled);
                out.count("unknown", unknown);
            }
            StageOp::QualityTrain(p) => {
                let pos = corpus::read_documents(&self.input(&p.positive))?;
                let neg = corpus::read_documents(&self.input(&p.negative))?;
                let mut cfg = p.config.clone();
                if !spec.params.get("config").is_some_and(|c| c.get("seed").is_some()) {
                    cfg.seed = self.stage_seed(name);
                }
                let report = quality::train_quality::<f32>(&pos, &neg, &cfg)?;
                out.file("model.json", report.model.to_json().into_bytes());
                out.json(
                    "training.json",
                    &serde_json::json!({
                        "heldout_accuracy": report.heldout_accuracy,
                        "train_size": report.train_size,
                        "heldout_size": report.heldout_size,
                    }),
                );
                self.models.insert(name.to_owned(), self.out_dir.join(name).join("model.json"));
            }
            StageOp::QualityFilter(p) => {
                let path = self.model_path(&p.model);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let model = QualityModel::<f32>::from_json(&text)?;
                let (scope, rest): (Vec<Document>, Vec<Document>) =
                    std::mem::take(&mut self.docs).into_iter().partition(|d| in_scope(d, &p.lang));
                let scores = quality::score(&scope, &model);
                let kept = quality::filter_top(&scope, &scores, p.keep)?;
                out.jsonl("scores.jsonl", &scores);
                out.count("scored", scope.len());
                out.count("kept", kept.len());
                self.docs = merge_in_order(rest, kept, name);
            }
            StageOp::Dedup(p) => {
                let (scope, rest): (Vec<Document>, Vec<Document>) =
                    std::mem::take(&mut self.docs).into_iter().partition(|d| in_scope(d, &p.lang));
                let embs = embedding::embed_documents(&scope, p.embedder.build().as_ref(), p.batch)?;
                let ids = embedding::dedup_near(&embs, p.tau)?;
                let kept = embedding::retain_tagged(&scope, &ids, EMBED_DEDUP_TAG);
                out.count("kept", kept.len());
                self.docs = merge_in_order(rest, kept, name);
            }
            StageOp::Select(p) => {
                let (scope, rest): (Vec<Document>, Vec<Document>) =
                    std::mem::take(&mut self.docs).into_iter().partition(|d| in_scope(d, &p.lang));
                let embs = embedding::embed_documents(&scope, p.embedder.build().as_ref(), p.batch)?;
                let ids = embedding::select_diverse(&embs, p.k)?;
                let kept = embedding::retain_tagged(&scope, &ids, DIVERSE_TAG);
                out.jsonl("selected.jsonl", &ids);
                out.count("kept", kept.len());
                self.docs = merge_in_order(rest, kept, name);
            }
            StageOp::Translate(p) => {
                let english: Vec<Document> = self
                    .docs
                    .iter()
                    .filter(|d| {
                        d.lang.as_deref() == Some(languages::ENGLISH)
                            && !d.provenance.iter().any(|t| t.starts_with(translate::TRANSLATED_FROM_PREFIX))
                    })
                    .cloned()
                    .collect();
                let scores = match &p.quality_model {
                    Some(m) => {
                        let path = self.model_path(m);
                        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                        Some(quality::score(&english, &QualityModel::<f32>::from_json(&text)?))
                    }
                    None => None,
                };
                let jobs = translate::select_sources(
                    &english,
                    p.strategy,
                    p.fraction,
                    scores.as_deref(),
                    &p.target_lang,
                    self.stage_seed(name),
                )?;
                let store: HashMap<String, Document> = english.into_iter().map(|d| (d.id.clone(), d)).collect();
                let defaults = TranslateOptions::default();
                let opts = TranslateOptions {
                    max_in_flight: p.max_in_flight.unwrap_or(defaults.max_in_flight),
                    retries: p.retries.unwrap_or(defaults.retries),
                    strict,
                };
                let result = translate::translate(&jobs, &store, p.translator.build().as_ref(), &p.target_lang, &opts)?;
                out.jsonl("jobs.jsonl", &jobs);
                out.jsonl("failures.jsonl", &result.failures);
                out.count("jobs", jobs.len());
                out.count("translated", result.docs.len());
                out.count("failed", result.failures.len());
                let existing: HashSet<&str> = self.docs.iter().map(|d| d.id.as_str()).collect();
                if let Some(d) = result.docs.iter().find(|d| existing.contains(d.id.as_str())) {
                    return Err(Error::DuplicateId(d.id.clone()));
                }
                self.docs.extend(result.docs.into_iter().map(|mut d| {
                    if let Some(s) = &p.source {
                        d.source = s.clone();
                    }
                    tag_stage(&mut d, name);
                    d
                }));
            }
            StageOp::Mixture(p) => {
                let mut plan = p.plan.clone();
                if !spec.params.get("plan").is_some_and(|v| v.get("seed").is_some()) {
                    plan.seed = self.stage_seed(name);
                }
                let inventory: CorpusInventory = match &p.inventory {
                    Some(n) => corpus::read_json_file(&self.input(n))?,
                    None => corpus::build_inventory(&self.docs, tok)?,
                };
                let manifest = mixture::plan(&plan, &inventory, strict)?;
                out.json("manifest.json", &manifest);
                out.count("deficit_tokens", manifest.total_deficit() as usize);
                if p.build.unwrap_or(p.inventory.is_none()) {
                    let stores = corpus::group_pools(std::mem::take(&mut self.docs));
                    let (docs, report) = mixture::build(&manifest, &stores, tok)?;
                    out.json("build_report.json", &report);
                    self.docs = docs
                        .into_iter()
                        .map(|mut d| {
                            tag_stage(&mut d, name);
                            d
                        })
                        .collect();
                }
            }
        }
        out.count("docs_out", self.docs.len());
        out.file("docs.jsonl", docs_bytes(&self.docs));
        Ok(out)
    }
}

/// Re-merges kept in-scope docs with pass-through docs, ordered by id so the
/// result does not depend on how the partition interleaved them.
fn merge_in_order(rest: Vec<Document>, kept: Vec<Document>, stage: &str) -> Vec<Document> {
    let mut all: Vec<Document> = rest
        .into_iter()
        .chain(kept.into_iter().map(|mut d| {
            tag_stage(&mut d, stage);
            d
        }))
        .collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    all
}

/// Executes every stage in order. Outputs land under the config's output
/// directory; the report is also written there.
pub fn run(cfg: &ValidatedConfig) -> Result<RunReport, RunError> {
    let out_dir = cfg.output_dir();
    let io_err = |e: Error| RunError::Stage {
        stage: "<report>".into(),
        source: e,
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err(Error::io(&out_dir, e)))?;
    let mut run = Run {
        cfg,
        out_dir: out_dir.clone(),
        docs: Vec::new(),
        models: HashMap::new(),
    };
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.config.seed,
        strict: cfg.config.strict,
        tokenizer_id: cfg.config.tokenizer.id(),
        stages: Vec::new(),
    };
    let mut timings = BTreeMap::new();
    for (spec, op) in &cfg.stages {
        let started = Instant::now();
        let fail = |source: Error| RunError::Stage {
            stage: spec.name.clone(),
            source,
        };
        let inputs_digest = run.inputs_digest(spec, op).map_err(fail)?;
        let output = run.run_stage(spec, op).map_err(fail)?;
        let mut outputs = BTreeMap::new();
        for (file, bytes) in &output.files {
            let rel = format!("{}/{file}", spec.name);
            corpus::write_bytes(&out_dir.join(&rel), bytes).map_err(fail)?;
            outputs.insert(rel, sha256_hex(bytes));
        }
        report.stages.push(StageReport {
            name: spec.name.clone(),
            op: spec.op.clone(),
            params: spec.params.clone(),
            inputs_digest,
            outputs,
            counts: output.counts,
        });
        timings.insert(spec.name.clone(), started.elapsed().as_secs_f64());
    }
    corpus::write_json_file(&out_dir.join(REPORT_FILE), &report).map_err(io_err)?;
    corpus::write_json_file(&out_dir.join(TIMINGS_FILE), &timings).map_err(io_err)?;
    Ok(report)
}

/// Validates then runs the config at `path`.
pub fn run_file(path: &Path) -> Result<RunReport, RunError> {
    let cfg = load_config(path).map_err(RunError::Config)?;
    run(&cfg)
}
