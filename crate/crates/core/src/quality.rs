//! Hashed bag-of-n-grams logistic quality classifier and score filtering.
//!
//! A document's feature vector is the mean of the one-hot vectors of all of
//! its word and character n-grams, hashed into `hash_dim` buckets.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::{ceil_fraction, Real};

pub const SCORE_FILTERED_TAG: &str = "score-filtered";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramSpec {
    /// Word n-grams of order `1..=word_max`.
    pub word_max: usize,
    pub char_min: usize,
    pub char_max: usize,
}

impl Default for NgramSpec {
    fn default() -> Self {
        NgramSpec {
            word_max: 2,
            char_min: 3,
            char_max: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lang: String,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hash_dim: usize,
    pub ngrams: NgramSpec,
    /// Share of each class held out for the accuracy estimate.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lang: "en".into(),
            seed: 0,
            epochs: 10,
            learning_rate: 5.0,
            hash_dim: 1 << 20,
            ngrams: NgramSpec::default(),
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel<T> {
    pub lang: String,
    pub hash_dim: usize,
    pub weights: Vec<T>,
    pub bias: T,
    pub ngrams: NgramSpec,
    pub training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub model: QualityModel<T>,
    /// `None` when a class is too small to hold anything out.
    pub heldout_accuracy: Option<f64>,
    pub train_size: usize,
    pub heldout_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Keep {
    /// Keep the `ceil(fraction * N)` best-scoring documents.
    Fraction { fraction: f64 },
    /// Keep documents with `score >= threshold`.
    Threshold { threshold: f64 },
}

// ---------------------------------------------------------------------------
// Hashing

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Copy)]
struct Fnv(u64);

impl Fnv {
    fn new(namespace: u8) -> Self {
        Fnv(FNV_OFFSET).feed(&[namespace])
    }

    fn feed(mut self, bytes: &[u8]) -> Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
        self
    }

    fn bucket(self, dim: usize) -> usize {
        if dim.is_power_of_two() {
            (self.0 & (dim as u64 - 1)) as usize
        } else {
            (self.0 % dim as u64) as usize
        }
    }
}

/// Calls `f(bucket)` once per n-gram occurrence in `text`.
fn for_each_ngram(text: &str, spec: &NgramSpec, dim: usize, mut f: impl FnMut(usize)) {
    let words: Vec<&str> = text.split_whitespace().collect();
    for n in 1..=spec.word_max {
        for w in words.windows(n) {
            let mut h = Fnv::new(b'w').feed(w[0].as_bytes());
            for word in &w[1..] {
                h = h.feed(b" ").feed(word.as_bytes());
            }
            f(h.bucket(dim));
        }
    }
    if spec.char_max == 0 || words.is_empty() {
        return;
    }
    let normalized = words.join(" ");
    let bounds: Vec<usize> = normalized
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(normalized.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    let bytes = normalized.as_bytes();
    let lo = spec.char_min.max(1);
    // Grams sharing a start position extend one hash.
    for i in 0..n_chars {
        let mut h = Fnv::new(b'c');
        let mut end = i;
        for n in 1..=spec.char_max.min(n_chars - i) {
            h = h.feed(&bytes[bounds[end]..bounds[end + 1]]);
            end += 1;
            if n >= lo {
                f(h.bucket(dim));
            }
        }
    }
}

/// Sparse mean-of-indicators feature vector, sorted by bucket.
pub fn featurize<T: Real>(text: &str, spec: &NgramSpec, dim: usize) -> Vec<(usize, T)> {
    let mut counts: HashMap<usize, u32> = HashMap::new();
    let mut total = 0u32;
    for_each_ngram(text, spec, dim, |b| {
        *counts.entry(b).or_insert(0) += 1;
        total += 1;
    });
    if total == 0 {
        return Vec::new();
    }
    let inv = T::one() / T::from_u32(total).unwrap();
    let mut v: Vec<(usize, T)> = counts
        .into_iter()
        .map(|(b, c)| (b, T::from_u32(c).unwrap() * inv))
        .collect();
    v.sort_unstable_by_key(|e| e.0);
    v
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Real> QualityModel<T> {
    pub fn new(lang: impl Into<String>, hash_dim: usize, ngrams: NgramSpec, training: TrainingMeta) -> Result<Self> {
        if hash_dim == 0 {
            return Err(Error::invalid("hash_dim must be positive"));
        }
        Ok(QualityModel {
            lang: lang.into(),
            hash_dim,
            weights: vec![T::zero(); hash_dim],
            bias: T::zero(),
            ngrams,
            training,
        })
    }

    fn logit_sparse(&self, x: &[(usize, T)]) -> T {
        x.iter().fold(self.bias, |acc, &(i, v)| acc + self.weights[i] * v)
    }

    /// `sigmoid(w · phi(text) + b)`.
    pub fn score_text(&self, text: &str) -> f64 {
        let mut sum = T::zero();
        let mut total = 0u32;
        for_each_ngram(text, &self.ngrams, self.hash_dim, |b| {
            sum = sum + self.weights[b];
            total += 1;
        });
        let z = if total == 0 {
            self.bias
        } else {
            self.bias + sum / T::from_u32(total).unwrap()
        };
        sigmoid(z).to_f64_lossy()
    }
}

pub fn train_quality<T: Real>(pos: &[Document], neg: &[Document], cfg: &TrainConfig) -> Result<TrainReport<T>> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("both positive and negative streams must be non-empty"));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::invalid("holdout_fraction must be in [0, 1)"));
    }
    let meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
    };
    let mut model = QualityModel::<T>::new(&cfg.lang, cfg.hash_dim, cfg.ngrams, meta)?;

    // Stratified split: each class is permuted by a generator seeded
    // identically, so equal streams yield equal held-out positions.
    let split = |n: usize| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let held = if n >= 2 { ceil_fraction(cfg.holdout_fraction, n).min(n - 1) } else { 0 };
        let train = idx.split_off(held);
        (train, idx)
    };
    let (pos_train, pos_held) = split(pos.len());
    let (neg_train, neg_held) = split(neg.len());

    let feats = |docs: &[Document], idx: &[usize]| -> Vec<Vec<(usize, T)>> {
        idx.par_iter()
            .map(|&i| featurize(&docs[i].text, &cfg.ngrams, cfg.hash_dim))
            .collect()
    };
    let mut train: Vec<(Vec<(usize, T)>, T)> = Vec::new();
    train.extend(feats(pos, &pos_train).into_iter().map(|x| (x, T::one())));
    train.extend(feats(neg, &neg_train).into_iter().map(|x| (x, T::zero())));

    let lr = T::lit(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    // Linear decay to zero keeps the last updates from leaving the bias
    // wherever the final few examples pushed it.
    let total_steps = (cfg.epochs * order.len()).max(1);
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &train[i];
            let g = sigmoid(model.logit_sparse(x)) - *y;
            let decay = T::lit(1.0 - t as f64 / total_steps as f64);
            t += 1;
            let step = lr * decay * g;
            for &(j, v) in x {
                model.weights[j] = model.weights[j] - step * v;
            }
            model.bias = model.bias - step;
        }
    }

    let heldout_size = pos_held.len() + neg_held.len();
    let heldout_accuracy = (!pos_held.is_empty() && !neg_held.is_empty()).then(|| {
        let correct = pos_held.iter().filter(|&&i| model.score_text(&pos[i].text) >= 0.5).count()
            + neg_held.iter().filter(|&&i| model.score_text(&neg[i].text) < 0.5).count();
        correct as f64 / heldout_size as f64
    });
    Ok(TrainReport {
        model,
        heldout_accuracy,
        train_size: train.len(),
        heldout_size,
    })
}

/// Scores documents in parallel; output order matches input order.
pub fn score<T: Real>(docs: &[Document], model: &QualityModel<T>) -> Vec<ScoreRecord> {
    docs.par_iter()
        .map(|d| ScoreRecord {
            doc_id: d.id.clone(),
            score: model.score_text(&d.text),
        })
        .collect()
}

/// Ids chosen by `keep`, as a membership set.
fn kept_ids<'a>(docs: &'a [Document], scores: &HashMap<&str, f64>, keep: Keep) -> Result<Vec<&'a str>> {
    let mut scored = Vec::with_capacity(docs.len());
    for d in docs {
        let s = *scores
            .get(d.id.as_str())
            .ok_or_else(|| Error::MissingScore(d.id.clone()))?;
        scored.push((d.id.as_str(), s));
    }
    match keep {
        Keep::Fraction { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
            }
            let k = ceil_fraction(fraction, scored.len());
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            scored.truncate(k);
            Ok(scored.into_iter().map(|(id, _)| id).collect())
        }
        Keep::Threshold { threshold } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
            }
            Ok(scored
                .into_iter()
                .filter(|&(_, s)| s >= threshold)
                .map(|(id, _)| id)
                .collect())
        }
    }
}

/// Keeps the selected documents in stream order and tags them
/// `score-filtered`.
pub fn filter_top(docs: &[Document], scores: &[ScoreRecord], keep: Keep) -> Result<Vec<Document>> {
    let by_id: HashMap<&str, f64> = scores.iter().map(|r| (r.doc_id.as_str(), r.score)).collect();
    let kept: std::collections::HashSet<&str> = kept_ids(docs, &by_id, keep)?.into_iter().collect();
    Ok(docs
        .iter()
        .filter(|d| kept.contains(d.id.as_str()))
        .map(|d| {
            let mut d = d.clone();
            d.tag(SCORE_FILTERED_TAG);
            d
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Serialization: weights are written sparsely.

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    version: u32,
    lang: String,
    hash_dim: usize,
    bias: f64,
    ngrams: NgramSpec,
    training: TrainingMeta,
    weights: Vec<(usize, f64)>,
}

impl<T: Real> QualityModel<T> {
    pub fn to_json(&self) -> String {
        let repr = ModelRepr {
            version: MODEL_FORMAT_VERSION,
            lang: self.lang.clone(),
            hash_dim: self.hash_dim,
            bias: self.bias.to_f64_lossy(),
            ngrams: self.ngrams,
            training: self.training,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| !w.is_zero())
                .map(|(i, w)| (i, w.to_f64_lossy()))
                .collect(),
        };
        serde_json::to_string(&repr).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: ModelRepr = serde_json::from_str(s)?;
        if repr.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported model version {}", repr.version)));
        }
        let mut model = QualityModel::new(repr.lang, repr.hash_dim, repr.ngrams, repr.training)?;
        model.bias = T::lit(repr.bias);
        for (i, w) in repr.weights {
            *model
                .weights
                .get_mut(i)
                .ok_or_else(|| Error::invalid(format!("weight index {i} out of range")))? = T::lit(w);
        }
        Ok(model)
    }
}
