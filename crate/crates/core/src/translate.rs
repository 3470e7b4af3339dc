//! Source selection and translation-based augmentation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::external;
use crate::languages::{self, ENGLISH};
use crate::quality::{filter_top, Keep, ScoreRecord};
use crate::scalar::ceil_fraction;

pub const TRANSLATED_FROM_PREFIX: &str = "translated-from:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Scored,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Scored => "scored",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationJob {
    pub source_doc_id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl TranslationJob {
    pub fn validate(&self) -> Result<()> {
        if !languages::is_supported(&self.target_lang) {
            return Err(Error::UnsupportedLanguage(self.target_lang.clone()));
        }
        if self.strategy == Strategy::Scored && self.score.is_none() {
            return Err(Error::invalid(format!(
                "scored job for `{}` carries no score",
                self.source_doc_id
            )));
        }
        Ok(())
    }

    pub fn output_id(&self) -> String {
        format!("{}::tr::{}", self.source_doc_id, self.target_lang)
    }
}

/// Picks English sources to translate.
///
/// `Random` samples `ceil(f·N)` documents without replacement from a seeded
/// generator; `Scored` is exactly [`filter_top`] with the same fraction.
/// Jobs come out in source stream order.
pub fn select_sources(
    docs: &[Document],
    strategy: Strategy,
    fraction: f64,
    scores: Option<&[ScoreRecord]>,
    target_lang: &str,
    seed: u64,
) -> Result<Vec<TranslationJob>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    if !languages::is_supported(target_lang) {
        return Err(Error::UnsupportedLanguage(target_lang.to_owned()));
    }
    let job = |d: &Document, score: Option<f64>| TranslationJob {
        source_doc_id: d.id.clone(),
        source_lang: ENGLISH.to_owned(),
        target_lang: target_lang.to_owned(),
        strategy,
        score,
    };
    match strategy {
        Strategy::Random => {
            let k = ceil_fraction(fraction, docs.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, docs.len(), k).into_vec();
            picked.sort_unstable();
            let score_of: HashMap<&str, f64> = scores
                .unwrap_or_default()
                .iter()
                .map(|r| (r.doc_id.as_str(), r.score))
                .collect();
            Ok(picked
                .into_iter()
                .map(|i| job(&docs[i], score_of.get(docs[i].id.as_str()).copied()))
                .collect())
        }
        Strategy::Scored => {
            let scores = scores.ok_or_else(|| Error::invalid("scored selection needs scores"))?;
            let score_of: HashMap<&str, f64> = scores.iter().map(|r| (r.doc_id.as_str(), r.score)).collect();
            let kept = filter_top(docs, scores, Keep::Fraction { fraction })?;
            Ok(kept.iter().map(|d| job(d, Some(score_of[d.id.as_str()]))).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Translators

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub id: String,
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TranslateError {
    /// Worth retrying; counted as a failure once retries run out.
    Transient(String),
    /// The translator broke its contract; aborts the run.
    Protocol(String),
}

pub trait Translator: Send + Sync {
    fn translate(&self, req: &TranslateRequest) -> std::result::Result<String, TranslateError>;
}

/// Identity translator with an optional marker prefix, for tests and dry
/// runs. Ids listed in `fail_ids` come back as empty translations.
#[derive(Debug, Clone, Default)]
pub struct MockTranslator {
    pub marker: String,
    pub fail_ids: HashSet<String>,
}

impl MockTranslator {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with_marker(marker: impl Into<String>) -> Self {
        MockTranslator {
            marker: marker.into(),
            ..Default::default()
        }
    }

    pub fn failing_on<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.fail_ids.extend(ids.into_iter().map(Into::into));
        self
    }
}

impl Translator for MockTranslator {
    fn translate(&self, req: &TranslateRequest) -> std::result::Result<String, TranslateError> {
        if self.fail_ids.contains(&req.id) {
            return Ok(String::new());
        }
        Ok(format!("{}{}", self.marker, req.text))
    }
}

#[derive(Serialize, Deserialize)]
struct HttpTranslateBody<'a> {
    text: &'a str,
    source_lang: &'a str,
    target_lang: &'a str,
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

/// `POST {base}/translate {"text","source_lang","target_lang"}` → `{"text"}`.
pub struct HttpTranslator {
    url: String,
}

impl HttpTranslator {
    pub fn new(base_url: &str) -> Self {
        HttpTranslator {
            url: external::endpoint(base_url, "/translate"),
        }
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, req: &TranslateRequest) -> std::result::Result<String, TranslateError> {
        let body = HttpTranslateBody {
            text: &req.text,
            source_lang: &req.source_lang,
            target_lang: &req.target_lang,
        };
        let v: serde_json::Value = external::post_json(&self.url, &body).map_err(TranslateError::Transient)?;
        let reply: TextReply = serde_json::from_value(v)
            .map_err(|e| TranslateError::Protocol(format!("response lacks `text`: {e}")))?;
        Ok(reply.text)
    }
}

#[derive(Deserialize)]
struct SubprocessReply {
    id: String,
    text: String,
}

/// Persistent child process speaking one JSONL request/response per line:
/// `{"id","text","source_lang","target_lang"}` → `{"id","text"}`.
pub struct SubprocessTranslator {
    proc: external::LineProcess,
}

impl SubprocessTranslator {
    pub fn new(command: Vec<String>) -> Self {
        SubprocessTranslator {
            proc: external::LineProcess::new(command),
        }
    }
}

impl Translator for SubprocessTranslator {
    fn translate(&self, req: &TranslateRequest) -> std::result::Result<String, TranslateError> {
        let line = serde_json::to_string(req).expect("request serializes");
        let reply = self.proc.request(&line).map_err(TranslateError::Transient)?;
        let parsed: SubprocessReply = serde_json::from_str(&reply)
            .map_err(|e| TranslateError::Protocol(format!("bad reply line: {e}")))?;
        if parsed.id != req.id {
            return Err(TranslateError::Protocol(format!(
                "reply id `{}` does not match request",
                parsed.id
            )));
        }
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranslatorSpec {
    Mock {
        #[serde(default)]
        marker: String,
        #[serde(default)]
        fail_ids: Vec<String>,
    },
    Http {
        url: String,
    },
    Subprocess {
        command: Vec<String>,
    },
}

impl TranslatorSpec {
    pub fn build(&self) -> Box<dyn Translator> {
        match self {
            TranslatorSpec::Mock { marker, fail_ids } => {
                Box::new(MockTranslator::with_marker(marker.clone()).failing_on(fail_ids.iter().cloned()))
            }
            TranslatorSpec::Http { url } => Box::new(HttpTranslator::new(url)),
            TranslatorSpec::Subprocess { command } => Box::new(SubprocessTranslator::new(command.clone())),
        }
    }
}

// ---------------------------------------------------------------------------
// Running jobs

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslateOptions {
    /// Requests in flight at once.
    pub max_in_flight: usize,
    /// Extra attempts after a transient failure.
    pub retries: usize,
    /// Abort on the first failed job.
    pub strict: bool,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            max_in_flight: 8,
            retries: 2,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub source_doc_id: String,
    pub reason: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TranslationOutput {
    pub docs: Vec<Document>,
    pub failures: Vec<JobFailure>,
}

enum Outcome {
    Done(String),
    Failed(JobFailure),
    Protocol(String),
}

fn run_job(translator: &dyn Translator, req: &TranslateRequest, retries: usize) -> Outcome {
    let mut last = String::new();
    for attempt in 1..=retries + 1 {
        match translator.translate(req) {
            Ok(text) if !text.trim().is_empty() => return Outcome::Done(text),
            Ok(_) => last = "empty translation".into(),
            Err(TranslateError::Transient(m)) => last = m,
            Err(TranslateError::Protocol(m)) => return Outcome::Protocol(m),
        }
        if attempt == retries + 1 {
            break;
        }
    }
    Outcome::Failed(JobFailure {
        source_doc_id: req.id.clone(),
        reason: last,
        attempts: retries + 1,
    })
}

/// Translates every job with bounded parallelism and emits the results in
/// job order. Failed jobs are recorded and skipped unless `strict`.
pub fn translate(
    jobs: &[TranslationJob],
    store: &HashMap<String, Document>,
    translator: &dyn Translator,
    target_lang: &str,
    opts: &TranslateOptions,
) -> Result<TranslationOutput> {
    let mut requests = Vec::with_capacity(jobs.len());
    for job in jobs {
        job.validate()?;
        if job.target_lang != target_lang {
            return Err(Error::invalid(format!(
                "job `{}` targets `{}`, run targets `{target_lang}`",
                job.source_doc_id, job.target_lang
            )));
        }
        let src = store
            .get(&job.source_doc_id)
            .ok_or_else(|| Error::MissingSource(job.source_doc_id.clone()))?;
        if src.provenance.iter().any(|t| t.starts_with(TRANSLATED_FROM_PREFIX)) {
            return Err(Error::AlreadyTranslated(src.id.clone()));
        }
        requests.push(TranslateRequest {
            id: job.source_doc_id.clone(),
            text: src.text.clone(),
            source_lang: job.source_lang.clone(),
            target_lang: target_lang.to_owned(),
        });
    }

    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, requests.len().max(1));
    let mut slots: Vec<Option<Outcome>> = Vec::new();
    slots.resize_with(requests.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let outcome = run_job(translator, &requests[i], opts.retries);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(outcome);
            });
        }
    });

    let mut out = TranslationOutput::default();
    for (job, slot) in jobs.iter().zip(slots.into_inner().unwrap_or_else(|p| p.into_inner())) {
        match slot.expect("every job ran") {
            Outcome::Done(text) => {
                let src = &store[&job.source_doc_id];
                let mut doc = src.clone();
                doc.id = job.output_id();
                doc.text = text;
                doc.lang = Some(target_lang.to_owned());
                doc.tag(format!("{TRANSLATED_FROM_PREFIX}{}", job.source_lang));
                doc.tag(format!("strategy:{}", job.strategy));
                out.docs.push(doc);
            }
            Outcome::Failed(f) => {
                if opts.strict {
                    return Err(Error::TranslationFailed {
                        job: f.source_doc_id,
                        message: f.reason,
                    });
                }
                out.failures.push(f);
            }
            Outcome::Protocol(message) => {
                return Err(Error::Protocol {
                    job: job.source_doc_id.clone(),
                    message,
                })
            }
        }
    }
    Ok(out)
}
