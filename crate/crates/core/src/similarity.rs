//! Language-distance proxies on parallel text and their correlation with
//! per-language outcome deltas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::Document;
use crate::embedding::{cosine_distance, Embedder};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub sentence_en: String,
    pub sentence_tgt: String,
    pub tgt_lang: String,
}

impl ParallelPair {
    pub fn new(tgt_lang: &str, en: &str, tgt: &str) -> Result<Self> {
        if en.trim().is_empty() || tgt.trim().is_empty() {
            return Err(Error::invalid(format!("empty side in a `{tgt_lang}` pair")));
        }
        Ok(ParallelPair {
            sentence_en: en.to_owned(),
            sentence_tgt: tgt.to_owned(),
            tgt_lang: tgt_lang.to_owned(),
        })
    }
}

/// Reads `tgt_lang<TAB>sentence_en<TAB>sentence_tgt` rows. A first row
/// starting with `tgt_lang` is taken as a header.
pub fn read_parallel_tsv(path: &Path) -> Result<Vec<ParallelPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("tgt_lang\t")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| crate::error::RecordError {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated columns, found {}", cols.len())).into());
        }
        out.push(ParallelPair::new(cols[0], cols[1], cols[2]).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

fn group_pairs(pairs: &[ParallelPair]) -> BTreeMap<&str, Vec<&ParallelPair>> {
    let mut by_lang: BTreeMap<&str, Vec<&ParallelPair>> = BTreeMap::new();
    for p in pairs {
        by_lang.entry(p.tgt_lang.as_str()).or_default().push(p);
    }
    for v in by_lang.values_mut() {
        v.sort_by(|a, b| (&a.sentence_en, &a.sentence_tgt).cmp(&(&b.sentence_en, &b.sentence_tgt)));
    }
    by_lang
}

/// Mean cosine distance between the two sides of `pairs` under `embedder`.
pub fn mean_pair_distance(pairs: &[&ParallelPair], embedder: &dyn Embedder) -> Result<f64> {
    let en: Vec<String> = pairs.iter().map(|p| p.sentence_en.clone()).collect();
    let tgt: Vec<String> = pairs.iter().map(|p| p.sentence_tgt.clone()).collect();
    let (a, b) = (embedder.embed(&en)?, embedder.embed(&tgt)?);
    if a.len() != pairs.len() || b.len() != pairs.len() {
        return Err(Error::Embedder {
            embedder: embedder.id().to_owned(),
            message: "returned the wrong number of vectors".into(),
        });
    }
    let mut sum = 0.0;
    for (u, v) in a.iter().zip(&b) {
        sum += cosine_distance(u, v)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Per target language: the mean over embedders of `ln(mean pair distance)`.
///
/// Pairs are summed in a canonical order so the result does not depend on
/// input order.
pub fn embed_distance(pairs: &[ParallelPair], embedders: &[&dyn Embedder]) -> Result<BTreeMap<String, f64>> {
    if embedders.is_empty() {
        return Err(Error::invalid("embed_distance needs at least one embedder"));
    }
    let mut out = BTreeMap::new();
    for (lang, group) in group_pairs(pairs) {
        let mut acc = 0.0;
        for e in embedders {
            let m = mean_pair_distance(&group, *e)?;
            if m <= 0.0 {
                return Err(Error::DegenerateDistance(lang.to_owned()));
            }
            acc += m.ln();
        }
        out.insert(lang.to_owned(), acc / embedders.len() as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Character n-gram language model

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    counts: HashMap<char, u64>,
    total: u64,
}

/// Interpolated Witten-Bell character n-gram model.
///
/// The order-0 distribution backs off to a uniform distribution over the
/// training alphabet plus one unknown symbol. An unknown character `c`
/// receives the unknown mass times `256^-len_utf8(c)`, i.e. it is spelled
/// out as uniformly random bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharNgramLm {
    order: usize,
    trained_lang: String,
    contexts: HashMap<String, ContextStats>,
    alphabet: BTreeSet<char>,
}

pub const DEFAULT_LM_ORDER: usize = 5;

/// Byte offsets of each char plus the end offset.
fn char_offsets(text: &str) -> (Vec<char>, Vec<usize>) {
    let mut chars = Vec::with_capacity(text.len());
    let mut offs = Vec::with_capacity(text.len() + 1);
    for (i, c) in text.char_indices() {
        chars.push(c);
        offs.push(i);
    }
    offs.push(text.len());
    (chars, offs)
}

pub fn train_char_lm(docs: &[Document], order: usize, lang: &str) -> Result<CharNgramLm> {
    if order < 2 {
        return Err(Error::invalid(format!("LM order must be at least 2, got {order}")));
    }
    let mut lm = CharNgramLm {
        order,
        trained_lang: lang.to_owned(),
        contexts: HashMap::new(),
        alphabet: BTreeSet::new(),
    };
    for d in docs {
        let (chars, offs) = char_offsets(&d.text);
        for (i, &c) in chars.iter().enumerate() {
            lm.alphabet.insert(c);
            for k in 0..order.min(i + 1) {
                let ctx = &d.text[offs[i - k]..offs[i]];
                let stats = match lm.contexts.get_mut(ctx) {
                    Some(s) => s,
                    None => lm.contexts.entry(ctx.to_owned()).or_default(),
                };
                *stats.counts.entry(c).or_insert(0) += 1;
                stats.total += 1;
            }
        }
    }
    if lm.alphabet.is_empty() {
        return Err(Error::invalid("cannot train a language model on an empty corpus"));
    }
    Ok(lm)
}

impl CharNgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn trained_lang(&self) -> &str {
        &self.trained_lang
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    /// `P(c | history)` over the training alphabet, with `None` standing for
    /// the unknown symbol. Only the last `order - 1` chars of `history` count.
    pub fn prob(&self, history: &str, c: Option<char>) -> f64 {
        let start: Vec<usize> = history.char_indices().map(|(i, _)| i).collect();
        let keep = start.len().min(self.order - 1);
        let mut p = 1.0 / (self.alphabet.len() as f64 + 1.0);
        for k in 0..=keep {
            let ctx = if k == 0 { "" } else { &history[start[start.len() - k]..] };
            if let Some(s) = self.contexts.get(ctx) {
                let types = s.counts.len() as f64;
                let count = c.and_then(|c| s.counts.get(&c)).copied().unwrap_or(0) as f64;
                p = (count + types * p) / (s.total as f64 + types);
            }
        }
        p
    }

    /// Total `-log2` probability of `text`, history reset at its start.
    pub fn bits(&self, text: &str) -> f64 {
        let (chars, offs) = char_offsets(text);
        let mut bits = 0.0;
        for (i, &c) in chars.iter().enumerate() {
            let lo = i.saturating_sub(self.order - 1);
            let hist = &text[offs[lo]..offs[i]];
            bits -= if self.alphabet.contains(&c) {
                self.prob(hist, Some(c)).log2()
            } else {
                self.prob(hist, None).log2() - 8.0 * c.len_utf8() as f64
            };
        }
        bits
    }
}

/// How words are counted per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordRule {
    /// Languages whose every non-space character counts as a word.
    pub unspaced: BTreeSet<String>,
}

impl Default for WordRule {
    fn default() -> Self {
        WordRule {
            unspaced: ["zh", "ja"].into_iter().map(String::from).collect(),
        }
    }
}

impl WordRule {
    pub fn count(&self, text: &str, lang: &str) -> u64 {
        if self.unspaced.contains(lang) {
            text.chars().filter(|c| !c.is_whitespace()).count() as u64
        } else {
            text.split_whitespace().count() as u64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PplNormalization {
    /// Total bits over total words.
    #[default]
    PerWord,
    /// Total bits, unnormalized.
    Total,
}

/// Average negative log2 probability per word of `docs` under `lm`.
pub fn log_ppl_per_word(
    lm: &CharNgramLm,
    docs: &[Document],
    lang: &str,
    rule: &WordRule,
    mode: PplNormalization,
) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::invalid("no target documents"));
    }
    let (bits, words) = docs
        .par_iter()
        .map(|d| (lm.bits(&d.text), rule.count(&d.text, lang)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0u64), |(b, w), (db, dw)| (b + db, w + dw));
    match mode {
        PplNormalization::Total => Ok(bits),
        PplNormalization::PerWord if words == 0 => Err(Error::invalid(format!("`{lang}` documents contain no words"))),
        PplNormalization::PerWord => Ok(bits / words as f64),
    }
}

// ---------------------------------------------------------------------------
// Correlation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation<T> {
    pub r: T,
    pub p: T,
    pub n: usize,
}

/// Pearson's r with population moments, and its two-tailed Student-t
/// p-value at `n - 2` degrees of freedom.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Statistics(format!("pearson needs at least 3 points, got {n}")));
    }
    let nf = T::from_usize(n).expect("count fits");
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::Statistics("pearson is undefined for a constant series".into()));
    }
    let r = (sxy / nf) / ((sxx / nf).sqrt() * (syy / nf).sqrt());
    let r = r.max(-T::one()).min(T::one());
    let p = t_test_p(r.to_f64_lossy(), n);
    Ok(Correlation { r, p: T::lit(p), n })
}

/// Two-tailed p-value of a sample correlation `r` over `n` points.
pub fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t)).min(1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub lang: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embed_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_ppl_per_word: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uplift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub languages: Vec<LanguageRow>,
    /// Present when at least three languages have both values.
    pub embed_distance_vs_uplift: Option<Correlation<f64>>,
    pub log_ppl_vs_uplift: Option<Correlation<f64>>,
}

fn correlate_on(rows: &[LanguageRow], metric: impl Fn(&LanguageRow) -> Option<f64>) -> Result<Option<Correlation<f64>>> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((metric(r)?, r.uplift?)))
        .unzip();
    if x.len() < 3 {
        return Ok(None);
    }
    pearson(&x, &y).map(Some)
}

/// Joins per-language metric maps and correlates each metric with uplift.
pub fn correlate(
    embed: &BTreeMap<String, f64>,
    ppl: &BTreeMap<String, f64>,
    uplift: &BTreeMap<String, f64>,
) -> Result<SimilarityReport> {
    let langs: BTreeSet<&String> = embed.keys().chain(ppl.keys()).chain(uplift.keys()).collect();
    let languages: Vec<LanguageRow> = langs
        .into_iter()
        .map(|l| LanguageRow {
            lang: l.clone(),
            embed_distance: embed.get(l).copied(),
            log_ppl_per_word: ppl.get(l).copied(),
            uplift: uplift.get(l).copied(),
        })
        .collect();
    Ok(SimilarityReport {
        embed_distance_vs_uplift: correlate_on(&languages, |r| r.embed_distance)?,
        log_ppl_vs_uplift: correlate_on(&languages, |r| r.log_ppl_per_word)?,
        languages,
    })
}
