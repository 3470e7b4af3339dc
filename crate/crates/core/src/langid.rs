//! Rank-order character n-gram language identification.
//!
//! Each language keeps its `top_k` most frequent character n-grams in rank
//! order. A document is ranked the same way and assigned to the profile with
//! the smallest out-of-place distance.

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_RANGE: RangeInclusive<usize> = 1..=4;
pub const DEFAULT_TOP_K: usize = 3000;
pub const MIN_TOP_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ProfileRepr", into = "ProfileRepr")]
pub struct LanguageProfile {
    pub lang: String,
    /// N-grams in rank order; rank of `ngrams[i]` is `i + 1`.
    ngrams: Vec<String>,
    ranks: HashMap<String, usize>,
    pub trained_on_chars: u64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    lang: String,
    ngrams: Vec<String>,
    trained_on_chars: u64,
}

impl From<ProfileRepr> for LanguageProfile {
    fn from(r: ProfileRepr) -> Self {
        LanguageProfile::from_ranked(r.lang, r.ngrams, r.trained_on_chars)
    }
}

impl From<LanguageProfile> for ProfileRepr {
    fn from(p: LanguageProfile) -> Self {
        ProfileRepr {
            lang: p.lang,
            ngrams: p.ngrams,
            trained_on_chars: p.trained_on_chars,
        }
    }
}

impl LanguageProfile {
    fn from_ranked(lang: String, ngrams: Vec<String>, trained_on_chars: u64) -> Self {
        let ranks = ngrams.iter().enumerate().map(|(i, g)| (g.clone(), i + 1)).collect();
        LanguageProfile {
            lang,
            ngrams,
            ranks,
            trained_on_chars,
        }
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    /// 1-based rank of `ngram`, if retained.
    pub fn rank(&self, ngram: &str) -> Option<usize> {
        self.ranks.get(ngram).copied()
    }

    pub fn ranked(&self) -> &[String] {
        &self.ngrams
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub n_min: usize,
    pub n_max: usize,
    pub top_k: usize,
    /// Sorted by language code.
    pub profiles: Vec<LanguageProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum LangPrediction {
    Known { lang: String, confidence: f64 },
    Unknown,
}

impl LangPrediction {
    pub fn lang(&self) -> Option<&str> {
        match self {
            LangPrediction::Known { lang, .. } => Some(lang),
            LangPrediction::Unknown => None,
        }
    }
}

/// Collapses every whitespace run to one space and trims both ends.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn count_ngrams(text: &str, n_range: &RangeInclusive<usize>, counts: &mut HashMap<String, u64>) {
    let chars: Vec<char> = text.chars().collect();
    for n in n_range.clone() {
        if n == 0 || n > chars.len() {
            continue;
        }
        for w in chars.windows(n) {
            *counts.entry(w.iter().collect()).or_insert(0) += 1;
        }
    }
}

/// Frequency descending, ties lexicographic, truncated to `top_k`.
fn rank_counts(counts: HashMap<String, u64>, top_k: usize) -> Vec<String> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(top_k);
    v.into_iter().map(|(g, _)| g).collect()
}

/// Splits seed text into passages at blank lines.
pub fn split_passages(text: &str) -> Vec<String> {
    text.split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Reads `<lang>.txt` files from `dir`; each file holds blank-line
/// separated passages.
pub fn read_seed_dir(dir: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.insert(lang.to_owned(), split_passages(&text.replace("\r\n", "\n")));
    }
    Ok(out)
}

pub fn train_profiles<S: AsRef<str>>(
    seeds: &BTreeMap<String, Vec<S>>,
    n_range: RangeInclusive<usize>,
    top_k: usize,
) -> Result<ProfileSet> {
    if top_k < MIN_TOP_K {
        return Err(Error::invalid(format!("top_k must be at least {MIN_TOP_K}, got {top_k}")));
    }
    if n_range.is_empty() || *n_range.start() == 0 {
        return Err(Error::invalid(format!("invalid n-gram range {n_range:?}")));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("no seed corpora"));
    }
    let mut profiles = Vec::with_capacity(seeds.len());
    for (lang, docs) in seeds {
        let mut counts = HashMap::new();
        let mut chars = 0u64;
        for d in docs {
            let t = normalize(d.as_ref());
            chars += t.chars().count() as u64;
            count_ngrams(&t, &n_range, &mut counts);
        }
        if chars == 0 {
            return Err(Error::EmptySeed(lang.clone()));
        }
        profiles.push(LanguageProfile::from_ranked(
            lang.clone(),
            rank_counts(counts, top_k),
            chars,
        ));
    }
    Ok(ProfileSet {
        n_min: *n_range.start(),
        n_max: *n_range.end(),
        top_k,
        profiles,
    })
}

impl ProfileSet {
    pub fn n_range(&self) -> RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    /// Out-of-place distance from a ranked document profile to `profile`.
    /// N-grams absent from the profile cost `top_k`.
    pub fn distance(&self, doc_ranked: &[String], profile: &LanguageProfile) -> u64 {
        doc_ranked
            .iter()
            .enumerate()
            .map(|(i, g)| match profile.rank(g) {
                Some(r) => (i + 1).abs_diff(r) as u64,
                None => self.top_k as u64,
            })
            .sum()
    }

    /// Distances to every profile, ascending, ties by language code.
    pub fn distances(&self, text: &str) -> Vec<(String, u64)> {
        let t = normalize(text);
        let mut counts = HashMap::new();
        count_ngrams(&t, &self.n_range(), &mut counts);
        let ranked = rank_counts(counts, self.top_k);
        let mut d: Vec<(String, u64)> = self
            .profiles
            .iter()
            .map(|p| (p.lang.clone(), self.distance(&ranked, p)))
            .collect();
        d.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        d
    }

    pub fn classify(&self, text: &str, min_chars: usize) -> Result<LangPrediction> {
        let t = normalize(text);
        if t.is_empty() {
            return Err(Error::EmptyText);
        }
        if t.chars().count() < min_chars {
            return Ok(LangPrediction::Unknown);
        }
        let d = self.distances(&t);
        let Some((lang, best)) = d.first().cloned() else {
            return Ok(LangPrediction::Unknown);
        };
        let confidence = match d.get(1) {
            None => 1.0,
            Some(&(_, second)) if second == best => 0.0,
            Some(&(_, second)) => (1.0 - best as f64 / second as f64).clamp(0.0, 1.0),
        };
        Ok(LangPrediction::Known { lang, confidence })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(pairs: &[(&str, &str)]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(l, t)| (l.to_string(), vec![t.to_string()]))
            .collect()
    }

    #[test]
    fn top_ngrams_follow_training_text() {
        let set = train_profiles(&seeds(&[("en", "the the the"), ("de", "der der der")]), 1..=4, 100)
            .unwrap();
        let en = &set.profiles[1];
        assert_eq!(en.lang, "en");
        // 't','h','e' each occur 3 times, as do "th","he","the"; only the
        // space (2x) and cross-word grams rank lower.
        for g in ["t", "h", "e", "th", "he", "the"] {
            assert!(en.rank(g).unwrap() <= 7, "{g}");
        }
        assert!(en.rank("der").is_none());
    }

    #[test]
    fn small_corpus_keeps_all_ngrams() {
        let set = train_profiles(&seeds(&[("en", "ab")]), 1..=4, 100).unwrap();
        // a, b, ab
        assert_eq!(set.profiles[0].len(), 3);
        assert_eq!(set.profiles[0].ranked(), ["a", "ab", "b"]);
    }

    #[test]
    fn training_is_deterministic() {
        let s = seeds(&[("en", "some english words here"), ("es", "algunas palabras aquí")]);
        assert_eq!(train_profiles(&s, 1..=4, 300).unwrap(), train_profiles(&s, 1..=4, 300).unwrap());
    }

    #[test]
    fn empty_seed_names_language() {
        let s = seeds(&[("en", "text"), ("fr", "   ")]);
        assert!(matches!(train_profiles(&s, 1..=4, 100), Err(Error::EmptySeed(l)) if l == "fr"));
        assert!(train_profiles(&seeds(&[("en", "x")]), 1..=4, 99).is_err());
    }

    #[test]
    fn short_and_empty_text() {
        let set = train_profiles(&seeds(&[("en", "hello there")]), 1..=3, 100).unwrap();
        assert_eq!(set.classify("hi", 10).unwrap(), LangPrediction::Unknown);
        assert!(matches!(set.classify("  \n", 0), Err(Error::EmptyText)));
    }

    #[test]
    fn seed_document_classifies_with_full_confidence() {
        let set = train_profiles(
            &seeds(&[("aa", "abab abba baab"), ("bb", "xyzzy zyx yzx")]),
            1..=4,
            100,
        )
        .unwrap();
        let p = set.classify("abab abba baab", 1).unwrap();
        assert_eq!(p, LangPrediction::Known { lang: "aa".into(), confidence: 1.0 });
    }

    #[test]
    fn tie_picks_smaller_code_with_zero_confidence() {
        let set = train_profiles(&seeds(&[("xx", "abc"), ("aa", "abc")]), 1..=2, 100).unwrap();
        let p = set.classify("abc", 1).unwrap();
        assert_eq!(p, LangPrediction::Known { lang: "aa".into(), confidence: 0.0 });
    }

    #[test]
    fn leading_and_trailing_whitespace_is_ignored() {
        let set = train_profiles(
            &seeds(&[("en", "the quick brown fox"), ("es", "el rápido zorro marrón")]),
            1..=4,
            100,
        )
        .unwrap();
        assert_eq!(
            set.classify("  the brown fox \n", 1).unwrap(),
            set.classify("the brown fox", 1).unwrap()
        );
    }

    #[test]
    fn profiles_roundtrip_through_json() {
        let set = train_profiles(&seeds(&[("en", "hello world")]), 1..=4, 100).unwrap();
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(serde_json::from_str::<ProfileSet>(&json).unwrap(), set);
    }
}
