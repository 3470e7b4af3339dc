//! Phase-structured mixture planning and materialization.
//!
//! A plan lists token-budget phases, each with a multilingual fraction.
//! Planning turns it into exact integer token targets per `(source, lang)`
//! pool, honouring a repetition cap on every pool; building samples
//! documents from the pools until each target is reached.

use std::collections::{BTreeMap, HashMap};

use num_traits::Num;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{CorpusInventory, Document, PoolKey, TokenizerSpec};
use crate::error::{Error, Result};
use crate::languages;

pub const DEFAULT_REPETITION_CAP: f64 = 4.0;
pub const DEFAULT_MULTILINGUAL_SOURCE: &str = "fineweb2";
pub const DEFAULT_GENERAL_SOURCE: &str = "dclm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub name: String,
    pub tokens: u64,
    pub multilingual_fraction: f64,
}

impl PhaseSpec {
    pub fn new(name: impl Into<String>, tokens: u64, multilingual_fraction: f64) -> Self {
        PhaseSpec {
            name: name.into(),
            tokens,
            multilingual_fraction,
        }
    }
}

/// One pool of the non-multilingual remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub source: String,
    pub lang: String,
    pub weight: f64,
}

fn default_cap() -> f64 {
    DEFAULT_REPETITION_CAP
}

fn default_ml_source() -> String {
    DEFAULT_MULTILINGUAL_SOURCE.into()
}

fn default_general() -> Vec<StreamSpec> {
    vec![StreamSpec {
        source: DEFAULT_GENERAL_SOURCE.into(),
        lang: languages::ENGLISH.into(),
        weight: 1.0,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub phases: Vec<PhaseSpec>,
    /// The multilingual language set.
    pub languages: Vec<String>,
    /// Empty means uniform over `languages`.
    #[serde(default)]
    pub language_weights: BTreeMap<String, f64>,
    /// Maximum epochs over any pool, summed across phases.
    #[serde(default = "default_cap")]
    pub repetition_cap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ml_source")]
    pub multilingual_source: String,
    /// Per-language source overrides.
    #[serde(default)]
    pub language_sources: BTreeMap<String, String>,
    #[serde(default = "default_general")]
    pub general_streams: Vec<StreamSpec>,
}

impl MixturePlan {
    pub fn new(phases: Vec<PhaseSpec>, languages: Vec<String>) -> Self {
        MixturePlan {
            phases,
            languages,
            language_weights: BTreeMap::new(),
            repetition_cap: DEFAULT_REPETITION_CAP,
            seed: 0,
            multilingual_source: default_ml_source(),
            language_sources: BTreeMap::new(),
            general_streams: default_general(),
        }
    }

    /// The three-phase curriculum over the thirteen languages.
    pub fn reference_curriculum() -> Self {
        MixturePlan::new(
            vec![
                PhaseSpec::new("phase-1", 650_000_000_000, 0.05),
                PhaseSpec::new("phase-2", 250_000_000_000, 0.10),
                PhaseSpec::new("phase-3", 100_000_000_000, 0.20),
            ],
            languages::multilingual_codes().into_iter().map(String::from).collect(),
        )
    }

    pub fn overall_fraction(&self) -> f64 {
        overall_fraction(self.phases.iter().map(|p| (p.tokens as f64, p.multilingual_fraction)))
    }

    /// [`overall_fraction`] in exact arithmetic, each phase fraction taken
    /// as its closest small rational (`0.05` becomes `1/20`).
    pub fn overall_fraction_exact(&self) -> Option<crate::Fraction> {
        let phases = self
            .phases
            .iter()
            .map(|p| Some((crate::Fraction::from(p.tokens as i128), crate::Fraction::approximate_float(p.multilingual_fraction)?)))
            .collect::<Option<Vec<_>>>()?;
        Some(overall_fraction(phases))
    }

    pub fn total_tokens(&self) -> u64 {
        self.phases.iter().map(|p| p.tokens).sum()
    }

    pub fn weight(&self, lang: &str) -> f64 {
        if self.language_weights.is_empty() {
            1.0 / self.languages.len() as f64
        } else {
            self.language_weights.get(lang).copied().unwrap_or(0.0)
        }
    }

    pub fn source_for(&self, lang: &str) -> &str {
        self.language_sources
            .get(lang)
            .map(String::as_str)
            .unwrap_or(&self.multilingual_source)
    }

    /// Semantic checks; each message names the offending item.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.phases.is_empty() {
            out.push("plan has no phases".into());
        }
        for p in &self.phases {
            if p.tokens == 0 {
                out.push(format!("phase `{}`: tokens must be positive", p.name));
            }
            if !(0.0..=1.0).contains(&p.multilingual_fraction) {
                out.push(format!(
                    "phase `{}`: multilingual_fraction {} outside [0, 1]",
                    p.name, p.multilingual_fraction
                ));
            }
        }
        let mut names: Vec<&str> = self.phases.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            out.push("phase names must be unique".into());
        }
        let needs_ml = self.phases.iter().any(|p| p.multilingual_fraction > 0.0);
        if needs_ml && self.languages.is_empty() {
            out.push("multilingual phases need at least one language".into());
        }
        let mut langs = self.languages.clone();
        langs.sort();
        if langs.windows(2).any(|w| w[0] == w[1]) {
            out.push("languages must be unique".into());
        }
        if !self.language_weights.is_empty() {
            let mut sum = 0.0;
            for (l, w) in &self.language_weights {
                if !self.languages.contains(l) {
                    out.push(format!("language_weights: `{l}` is not in languages"));
                }
                if !(w.is_finite() && *w >= 0.0) {
                    out.push(format!("language_weights: `{l}` has invalid weight {w}"));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                out.push(format!("language_weights sum to {sum}, not 1"));
            }
        }
        if !(self.repetition_cap >= 1.0 && self.repetition_cap.is_finite()) {
            out.push(format!("repetition_cap {} must be a finite value >= 1", self.repetition_cap));
        }
        let needs_general = self.phases.iter().any(|p| p.multilingual_fraction < 1.0);
        if needs_general && self.general_streams.is_empty() {
            out.push("general_streams is empty but some phase has a general share".into());
        }
        if !self.general_streams.is_empty() {
            let sum: f64 = self.general_streams.iter().map(|s| s.weight).sum();
            if self.general_streams.iter().any(|s| !(s.weight.is_finite() && s.weight >= 0.0))
                || (sum - 1.0).abs() > 1e-9
            {
                out.push(format!("general_streams weights must be non-negative and sum to 1 (got {sum})"));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            None => Ok(()),
            Some(d) => Err(Error::invalid(d)),
        }
    }
}

/// Token-weighted mean of the phase fractions, `Σ T·f / Σ T`.
///
/// Generic so the same formula runs over floats or exact rationals.
pub fn overall_fraction<T, I>(phases: I) -> T
where
    T: Num + Copy,
    I: IntoIterator<Item = (T, T)>,
{
    let (num, den) = phases
        .into_iter()
        .fold((T::zero(), T::zero()), |(n, d), (tokens, f)| (n + tokens * f, d + tokens));
    if den.is_zero() {
        T::zero()
    } else {
        num / den
    }
}

/// Single-phase English/target mixture with a token split of
/// `(1 - ratio, ratio)`.
pub fn bilingual_plan(total: u64, ratio: f64, target_lang: &str) -> Result<MixturePlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("ratio {ratio} outside (0, 1)")));
    }
    if total == 0 {
        return Err(Error::invalid("total tokens must be positive"));
    }
    Ok(MixturePlan::new(
        vec![PhaseSpec::new(format!("bilingual-{target_lang}"), total, ratio)],
        vec![target_lang.to_owned()],
    ))
}

/// Like [`bilingual_plan`], with `doc_ratio` counted in documents and
/// converted to tokens through the pools' mean document lengths.
pub fn bilingual_plan_documents(
    total: u64,
    doc_ratio: f64,
    target_lang: &str,
    inventory: &CorpusInventory,
) -> Result<MixturePlan> {
    if !(doc_ratio > 0.0 && doc_ratio < 1.0) {
        return Err(Error::invalid(format!("ratio {doc_ratio} outside (0, 1)")));
    }
    let mean_len = |key: PoolKey| -> Result<f64> {
        let c = inventory.get(&key).ok_or_else(|| Error::MissingPool(key.to_string()))?;
        if c.document_count == 0 {
            return Err(Error::invalid(format!("pool `{key}` has no documents")));
        }
        Ok(c.token_count as f64 / c.document_count as f64)
    };
    let tgt = mean_len(PoolKey::new(DEFAULT_MULTILINGUAL_SOURCE, target_lang))?;
    let en = mean_len(PoolKey::new(DEFAULT_GENERAL_SOURCE, languages::ENGLISH))?;
    let token_ratio = doc_ratio * tgt / (doc_ratio * tgt + (1.0 - doc_ratio) * en);
    bilingual_plan(total, token_ratio, target_lang)
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamRole {
    Multilingual,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingDirective {
    /// Walk the pool in a seeded permutation, reshuffling each epoch. The
    /// same pool continues its walk across phases.
    SeededPermutation { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub lang: String,
    pub role: StreamRole,
    pub target_tokens: u64,
    pub available_tokens: u64,
    /// `target_tokens / available_tokens` for this phase.
    pub epochs_used: f64,
    /// Epochs used by this pool through the end of this phase.
    pub cumulative_epochs: f64,
    pub directive: SamplingDirective,
}

impl ManifestEntry {
    pub fn pool(&self) -> PoolKey {
        PoolKey::new(&self.source, &self.lang)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAllocation {
    pub name: String,
    pub tokens: u64,
    pub multilingual_tokens: u64,
    pub general_tokens: u64,
    /// Tokens no pool could take without exceeding the repetition cap.
    pub deficit: u64,
    /// Pools whose allocation was cut to the cap in this phase.
    pub capped: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl PhaseAllocation {
    pub fn allocated(&self) -> u64 {
        self.entries.iter().map(|e| e.target_tokens).sum()
    }

    pub fn target_for(&self, lang: &str) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.role == StreamRole::Multilingual && e.lang == lang)
            .map(|e| e.target_tokens)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingManifest {
    pub seed: u64,
    pub tokenizer_id: String,
    pub repetition_cap: f64,
    pub overall_multilingual_fraction: f64,
    pub phases: Vec<PhaseAllocation>,
}

impl SamplingManifest {
    pub fn total_deficit(&self) -> u64 {
        self.phases.iter().map(|p| p.deficit).sum()
    }

    /// Multilingual tokens per language, summed over phases.
    pub fn language_totals(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for p in &self.phases {
            for e in p.entries.iter().filter(|e| e.role == StreamRole::Multilingual) {
                *out.entry(e.lang.clone()).or_insert(0) += e.target_tokens;
            }
        }
        out
    }

    pub fn multilingual_total(&self) -> u64 {
        self.language_totals().values().sum()
    }
}

/// Seed for a named sub-stream, stable across runs and platforms.
pub fn mix_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

const WEIGHT_SCALE: f64 = (1u64 << 52) as f64;

/// Largest-remainder apportionment of `total` by `weights`.
///
/// Weights are quantized to 52 fractional bits and shares are computed in
/// exact integer arithmetic. Equal remainders go to the item with the
/// lowest `surplus`, then the lowest index.
pub fn largest_remainder(total: u64, weights: &[f64], surplus: &[f64]) -> Vec<u64> {
    let w: Vec<u128> = weights
        .iter()
        .map(|&x| if x > 0.0 { (x * WEIGHT_SCALE).round() as u128 } else { 0 })
        .collect();
    let sum: u128 = w.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let t = total as u128;
    let mut alloc: Vec<u64> = w.iter().map(|&wi| (t * wi / sum) as u64).collect();
    let rems: Vec<u128> = w.iter().map(|&wi| t * wi % sum).collect();
    let leftover = total - alloc.iter().sum::<u64>();
    let mut idx: Vec<usize> = (0..weights.len()).filter(|&i| w[i] > 0).collect();
    idx.sort_by(|&a, &b| {
        rems[b]
            .cmp(&rems[a])
            .then_with(|| surplus[a].total_cmp(&surplus[b]))
            .then_with(|| a.cmp(&b))
    });
    for &i in idx.iter().take(leftover as usize) {
        alloc[i] += 1;
    }
    alloc
}

struct Filled {
    alloc: Vec<u64>,
    deficit: u64,
    capped: Vec<usize>,
}

/// Apportions `total` by weight, pinning any item whose share exceeds its
/// budget to the budget and re-apportioning the rest among the others until
/// no share exceeds its budget.
fn water_fill(total: u64, weights: &[f64], budgets: &[u64], surplus: &[f64]) -> Filled {
    let n = weights.len();
    let mut alloc = vec![0u64; n];
    let mut active: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
    let mut capped = Vec::new();
    let mut remaining = total;
    while remaining > 0 {
        if !active.iter().any(|&a| a) {
            return Filled {
                alloc,
                deficit: remaining,
                capped,
            };
        }
        let w: Vec<f64> = (0..n).map(|i| if active[i] { weights[i] } else { 0.0 }).collect();
        let shares = largest_remainder(remaining, &w, surplus);
        let over: Vec<usize> = (0..n).filter(|&i| active[i] && shares[i] > budgets[i]).collect();
        if over.is_empty() {
            for i in (0..n).filter(|&i| active[i]) {
                alloc[i] = shares[i];
            }
            break;
        }
        for i in over {
            alloc[i] = budgets[i];
            remaining -= budgets[i];
            active[i] = false;
            capped.push(i);
        }
    }
    capped.sort_unstable();
    Filled {
        alloc,
        deficit: 0,
        capped,
    }
}

struct PoolState {
    key: PoolKey,
    weight: f64,
    available: u64,
    used: u64,
    /// Allocated minus exact share, summed over phases.
    surplus: f64,
}

impl PoolState {
    fn budget(&self, cap: f64) -> u64 {
        let limit = (cap * self.available as f64).floor() as u64;
        limit.saturating_sub(self.used)
    }
}

fn pool_states<'a>(
    inventory: &CorpusInventory,
    items: impl Iterator<Item = (PoolKey, f64)> + 'a,
) -> Result<Vec<PoolState>> {
    items
        .map(|(key, weight)| {
            let available = inventory
                .get(&key)
                .ok_or_else(|| Error::MissingPool(key.to_string()))?
                .token_count;
            Ok(PoolState {
                key,
                weight,
                available,
                used: 0,
                surplus: 0.0,
            })
        })
        .collect()
}

fn allocate_phase(
    pools: &mut [PoolState],
    total: u64,
    cap: f64,
    role: StreamRole,
    seed: u64,
    entries: &mut Vec<ManifestEntry>,
    capped_names: &mut Vec<String>,
) -> u64 {
    let weights: Vec<f64> = pools.iter().map(|p| p.weight).collect();
    let budgets: Vec<u64> = pools.iter().map(|p| p.budget(cap)).collect();
    let surplus: Vec<f64> = pools.iter().map(|p| p.surplus).collect();
    let filled = water_fill(total, &weights, &budgets, &surplus);
    let wsum: f64 = weights.iter().sum();
    for (i, p) in pools.iter_mut().enumerate() {
        let target = filled.alloc[i];
        let exact = if wsum > 0.0 { total as f64 * p.weight / wsum } else { 0.0 };
        p.surplus += target as f64 - exact;
        p.used += target;
        let avail = p.available as f64;
        let ratio = |x: u64| if p.available == 0 { 0.0 } else { x as f64 / avail };
        entries.push(ManifestEntry {
            source: p.key.source.clone(),
            lang: p.key.lang.clone(),
            role,
            target_tokens: target,
            available_tokens: p.available,
            epochs_used: ratio(target),
            cumulative_epochs: ratio(p.used),
            directive: SamplingDirective::SeededPermutation {
                seed: mix_seed(seed, &p.key.to_string()),
            },
        });
    }
    capped_names.extend(filled.capped.iter().map(|&i| pools[i].key.to_string()));
    filled.deficit
}

/// Resolves a plan against an inventory into per-phase pool targets.
///
/// Per phase, `M = round(T·f)` multilingual tokens are apportioned across
/// languages by weight (largest remainder) and `T − M` across the general
/// streams. Pools are capped at `repetition_cap · available` tokens summed
/// over all phases; a capped pool's excess is re-apportioned among the
/// uncapped ones, and whatever nobody can take is reported as `deficit`,
/// which is an error when `strict`.
pub fn plan(plan: &MixturePlan, inventory: &CorpusInventory, strict: bool) -> Result<SamplingManifest> {
    plan.validate()?;
    let mut langs: Vec<&String> = plan.languages.iter().collect();
    langs.sort();
    let mut ml = pool_states(
        inventory,
        langs
            .iter()
            .map(|l| (PoolKey::new(plan.source_for(l), l.as_str()), plan.weight(l))),
    )?;
    let mut general = pool_states(
        inventory,
        plan.general_streams
            .iter()
            .map(|s| (PoolKey::new(&s.source, &s.lang), s.weight)),
    )?;

    let mut phases = Vec::with_capacity(plan.phases.len());
    for phase in &plan.phases {
        let m = ((phase.tokens as f64) * phase.multilingual_fraction).round() as u64;
        let m = m.min(phase.tokens);
        let g = phase.tokens - m;
        let mut entries = Vec::new();
        let mut capped = Vec::new();
        let d_ml = allocate_phase(
            &mut ml,
            m,
            plan.repetition_cap,
            StreamRole::Multilingual,
            plan.seed,
            &mut entries,
            &mut capped,
        );
        let d_gen = allocate_phase(
            &mut general,
            g,
            plan.repetition_cap,
            StreamRole::General,
            plan.seed,
            &mut entries,
            &mut capped,
        );
        let deficit = d_ml + d_gen;
        if strict && deficit > 0 {
            return Err(Error::Deficit {
                phase: phase.name.clone(),
                tokens: deficit,
                languages: capped,
            });
        }
        phases.push(PhaseAllocation {
            name: phase.name.clone(),
            tokens: phase.tokens,
            multilingual_tokens: m,
            general_tokens: g,
            deficit,
            capped,
            entries,
        });
    }
    Ok(SamplingManifest {
        seed: plan.seed,
        tokenizer_id: inventory.tokenizer_id.clone(),
        repetition_cap: plan.repetition_cap,
        overall_multilingual_fraction: plan.overall_fraction(),
        phases,
    })
}

/// Pre-typing checks on a raw plan object, so that values the typed parse
/// would reject (negative token counts) are reported against their phase.
pub fn check_plan_json(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(phases) = v.get("phases").and_then(Value::as_array) else {
        out.push("plan: `phases` must be an array".into());
        return out;
    };
    for (i, p) in phases.iter().enumerate() {
        let name = p
            .get("name")
            .and_then(Value::as_str)
            .map(|s| format!("`{s}`"))
            .unwrap_or_else(|| format!("#{i}"));
        match p.get("tokens") {
            Some(t) if t.as_u64().is_some_and(|x| x > 0) => {}
            Some(t) => out.push(format!("phase {name}: tokens must be a positive integer, got {t}")),
            None => out.push(format!("phase {name}: missing `tokens`")),
        }
        match p.get("multilingual_fraction").and_then(Value::as_f64) {
            Some(f) if (0.0..=1.0).contains(&f) => {}
            Some(f) => out.push(format!("phase {name}: multilingual_fraction {f} outside [0, 1]")),
            None => out.push(format!("phase {name}: missing numeric `multilingual_fraction`")),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Building

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedEntry {
    pub phase: String,
    pub pool: String,
    pub target_tokens: u64,
    pub realized_tokens: u64,
    pub overshoot: u64,
    pub documents: u64,
    /// Highest epoch (1-based) the pool's walk reached.
    pub epoch: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub entries: Vec<RealizedEntry>,
    pub documents: u64,
    pub tokens: u64,
}

struct Cursor {
    seed: u64,
    perm: Vec<usize>,
    pos: usize,
    epoch: u32,
    counts: Vec<u64>,
}

impl Cursor {
    fn new(seed: u64, counts: Vec<u64>) -> Self {
        let mut c = Cursor {
            seed,
            perm: (0..counts.len()).collect(),
            pos: 0,
            epoch: 1,
            counts,
        };
        c.shuffle();
        c
    }

    fn shuffle(&mut self) {
        self.perm.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (self.epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.perm.shuffle(&mut rng);
    }

    fn next(&mut self) -> (usize, u32) {
        if self.pos == self.perm.len() {
            self.pos = 0;
            self.epoch += 1;
            self.shuffle();
        }
        let i = self.perm[self.pos];
        self.pos += 1;
        (i, self.epoch)
    }
}

/// Samples each manifest entry from its store until the realized token
/// count first reaches the target. Entries of a phase are interleaved
/// round-robin in a seeded order.
pub fn build(
    manifest: &SamplingManifest,
    stores: &BTreeMap<PoolKey, Vec<Document>>,
    tok: &TokenizerSpec,
) -> Result<(Vec<Document>, BuildReport)> {
    let mut cursors: HashMap<PoolKey, Cursor> = HashMap::new();
    let mut out = Vec::new();
    let mut report = BuildReport::default();
    for phase in &manifest.phases {
        let active: Vec<&ManifestEntry> = phase.entries.iter().filter(|e| e.target_tokens > 0).collect();
        for e in &active {
            let key = e.pool();
            if cursors.contains_key(&key) {
                continue;
            }
            let docs = stores.get(&key).ok_or_else(|| Error::MissingStore(key.to_string()))?;
            let counts = docs.iter().map(|d| tok.count_tokens(d)).collect::<Result<Vec<_>>>()?;
            if counts.iter().all(|&c| c == 0) {
                return Err(Error::EmptyPool(key.to_string()));
            }
            let SamplingDirective::SeededPermutation { seed } = e.directive;
            cursors.insert(key, Cursor::new(seed, counts));
        }

        let mut order: Vec<usize> = (0..active.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(manifest.seed, &phase.name)));
        let mut realized = vec![0u64; active.len()];
        let mut emitted = vec![0u64; active.len()];
        let mut epochs = vec![1u32; active.len()];
        loop {
            let mut progressed = false;
            for &k in &order {
                let e = active[k];
                if realized[k] >= e.target_tokens {
                    continue;
                }
                progressed = true;
                let key = e.pool();
                let cursor = cursors.get_mut(&key).expect("cursor created");
                let (i, epoch) = cursor.next();
                realized[k] += cursor.counts[i];
                emitted[k] += 1;
                epochs[k] = epochs[k].max(epoch);
                let mut doc = stores[&key][i].clone();
                if epoch > 1 {
                    doc.id = format!("{}::epoch:{epoch}", doc.id);
                    doc.tag(format!("epoch:{epoch}"));
                }
                doc.tag(format!("mixture:{}", phase.name));
                out.push(doc);
            }
            if !progressed {
                break;
            }
        }
        for (k, e) in active.iter().enumerate() {
            report.entries.push(RealizedEntry {
                phase: phase.name.clone(),
                pool: e.pool().to_string(),
                target_tokens: e.target_tokens,
                realized_tokens: realized[k],
                overshoot: realized[k] - e.target_tokens,
                documents: emitted[k],
                epoch: epochs[k],
            });
            report.documents += emitted[k];
            report.tokens += realized[k];
        }
    }
    Ok((out, report))
}
