//! Compute and evaluation analytics: training FLOPs, error rates, benchmark
//! aggregation, Pareto frontiers and per-language data efficiency.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Training compute by the `6·N·D` rule.
pub fn flops<T: Real>(params: T, tokens: T) -> T {
    T::lit(6.0) * params * tokens
}

/// `1 - accuracy`.
pub fn error_rate<T: Real>(accuracy: T) -> Result<T> {
    if !(accuracy >= T::zero() && accuracy <= T::one()) {
        return Err(Error::invalid(format!("accuracy {accuracy} outside [0, 1]")));
    }
    Ok(T::one() - accuracy)
}

/// `(new - base) / base`.
pub fn relative_improvement<T: Real>(base: T, new: T) -> Result<T> {
    if !(base > T::zero()) {
        return Err(Error::invalid(format!("relative improvement needs a positive base, got {base}")));
    }
    Ok((new - base) / base)
}

/// Mean of per-key relative improvements over the keys both maps share.
pub fn mean_relative_improvement(base: &BTreeMap<String, f64>, new: &BTreeMap<String, f64>) -> Result<f64> {
    let gains = base
        .iter()
        .filter_map(|(k, b)| new.get(k).map(|n| relative_improvement(*b, *n)))
        .collect::<Result<Vec<f64>>>()?;
    if gains.is_empty() {
        return Err(Error::invalid("no common keys to compare"));
    }
    Ok(gains.iter().sum::<f64>() / gains.len() as f64)
}

/// Tokens per language when `fraction` of `total` is split evenly.
pub fn tokens_per_language(total: f64, fraction: f64, languages: usize) -> f64 {
    total * fraction / languages as f64
}

// ---------------------------------------------------------------------------
// Model cards

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_id: String,
    /// Active parameters per token for mixture-of-experts models.
    pub params: f64,
    pub tokens: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Rounded value as printed alongside the card, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_flops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComputeRecord {
    pub model_id: String,
    pub params: f64,
    pub tokens: f64,
    pub flops: f64,
}

impl ModelCard {
    pub fn compute(&self) -> ModelComputeRecord {
        ModelComputeRecord {
            model_id: self.model_id.clone(),
            params: self.params,
            tokens: self.tokens,
            flops: flops(self.params, self.tokens),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluations

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Mmlu,
    Arc,
    Belebele,
}

impl std::fmt::Display for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Benchmark::Mmlu => "mmlu",
            Benchmark::Arc => "arc",
            Benchmark::Belebele => "belebele",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model_id: String,
    pub lang: String,
    pub benchmark: Benchmark,
    pub accuracy: f64,
}

/// Evaluation scores indexed by model, language and benchmark.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalTable {
    scores: BTreeMap<(String, String), BTreeMap<Benchmark, f64>>,
}

impl EvalTable {
    pub fn from_records(records: &[EvalRecord]) -> Result<Self> {
        let mut scores: BTreeMap<(String, String), BTreeMap<Benchmark, f64>> = BTreeMap::new();
        for r in records {
            error_rate(r.accuracy)?;
            let slot = scores.entry((r.model_id.clone(), r.lang.clone())).or_default();
            if slot.insert(r.benchmark, r.accuracy).is_some() {
                return Err(Error::DuplicateEval {
                    model_id: r.model_id.clone(),
                    lang: r.lang.clone(),
                    benchmark: r.benchmark.to_string(),
                });
            }
        }
        Ok(EvalTable { scores })
    }

    /// Macro-average over the benchmarks present for `(model_id, lang)`.
    pub fn aggregate(&self, model_id: &str, lang: &str) -> Result<f64> {
        let s = self
            .scores
            .get(&(model_id.to_owned(), lang.to_owned()))
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::NoRecords {
                model_id: model_id.to_owned(),
                lang: lang.to_owned(),
            })?;
        Ok(s.values().sum::<f64>() / s.len() as f64)
    }

    pub fn models(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.scores.keys().map(|(m, _)| m.as_str()).collect();
        m.dedup();
        m
    }

    pub fn languages(&self, model_id: &str) -> Vec<&str> {
        self.scores
            .keys()
            .filter(|(m, _)| m == model_id)
            .map(|(_, l)| l.as_str())
            .collect()
    }

    /// Per-language aggregates for one model.
    pub fn language_means(&self, model_id: &str) -> BTreeMap<String, f64> {
        self.languages(model_id)
            .into_iter()
            .map(|l| (l.to_owned(), self.aggregate(model_id, l).expect("present")))
            .collect()
    }

    /// Mean of the per-language aggregates over `langs`; every language must
    /// have records.
    pub fn multilingual_average(&self, model_id: &str, langs: &[&str]) -> Result<f64> {
        if langs.is_empty() {
            return Err(Error::invalid("no languages to average"));
        }
        let mut sum = 0.0;
        for l in langs {
            sum += self.aggregate(model_id, l)?;
        }
        Ok(sum / langs.len() as f64)
    }

    /// Relative improvement of `new_model` over `base_model` per language.
    pub fn uplift(&self, base_model: &str, new_model: &str) -> Result<BTreeMap<String, f64>> {
        let base = self.language_means(base_model);
        let new = self.language_means(new_model);
        base.iter()
            .filter_map(|(l, b)| new.get(l).map(|n| relative_improvement(*b, *n).map(|g| (l.clone(), g))))
            .collect()
    }
}

/// Mean accuracy over the benchmarks present for `(model_id, lang)`.
pub fn aggregate(records: &[EvalRecord], model_id: &str, lang: &str) -> Result<f64> {
    EvalTable::from_records(records)?.aggregate(model_id, lang)
}

// ---------------------------------------------------------------------------
// Pareto frontier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint<T> {
    pub model_id: String,
    /// Training FLOPs.
    pub x: T,
    /// Error rate.
    pub y: T,
}

/// Points not dominated by any other (`q.x <= p.x`, `q.y <= p.y`, one of
/// them strict), sorted by `x` then `y` then id. Exact duplicates survive
/// together.
pub fn pareto_frontier<T: Real>(points: &[ParetoPoint<T>]) -> Vec<ParetoPoint<T>> {
    let mut sorted: Vec<&ParetoPoint<T>> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    let mut out = Vec::new();
    // Smallest y among points with strictly smaller x.
    let mut best_before: Option<T> = None;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].x;
        let mut j = i;
        while j < sorted.len() && sorted[j].x == x {
            j += 1;
        }
        let group_min = sorted[i].y;
        if best_before.is_none_or(|b| group_min < b) {
            out.extend(sorted[i..j].iter().filter(|p| p.y == group_min).map(|p| (*p).clone()));
        }
        best_before = Some(best_before.map_or(group_min, |b| b.min(group_min)));
        i = j;
    }
    out
}

// ---------------------------------------------------------------------------
// Data efficiency

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEstimate {
    pub model_id: String,
    pub lang: String,
    pub lang_tokens: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataEfficiencyRecord {
    pub model_id: String,
    pub lang: String,
    pub lang_tokens: f64,
    pub score: f64,
}

/// Attaches each estimate's aggregate score from `evals`.
pub fn efficiency_records(estimates: &[TokenEstimate], evals: &EvalTable) -> Result<Vec<DataEfficiencyRecord>> {
    estimates
        .iter()
        .map(|e| {
            if !(e.lang_tokens > 0.0) {
                return Err(Error::invalid(format!("{}/{}: lang_tokens must be positive", e.model_id, e.lang)));
            }
            Ok(DataEfficiencyRecord {
                model_id: e.model_id.clone(),
                lang: e.lang.clone(),
                lang_tokens: e.lang_tokens,
                score: evals.aggregate(&e.model_id, &e.lang)?,
            })
        })
        .collect()
}

/// Rows sorted by language, then token count, then model.
pub fn efficiency_report(records: &[DataEfficiencyRecord]) -> Vec<DataEfficiencyRecord> {
    let mut rows = records.to_vec();
    rows.sort_by(|a, b| {
        a.lang
            .cmp(&b.lang)
            .then(a.lang_tokens.total_cmp(&b.lang_tokens))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    rows
}

/// Serializes rows with a header line.
pub fn to_csv<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

// ---------------------------------------------------------------------------
// SVG scatter plots

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub label: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub highlight: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a self-contained SVG scatter plot. Points on a log axis with a
/// non-positive coordinate are dropped.
pub fn scatter_svg(spec: &PlotSpec, points: &[PlotPoint]) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let pts: Vec<&PlotPoint> = points
        .iter()
        .filter(|p| (!spec.log_x || p.x > 0.0) && (!spec.log_y || p.y > 0.0) && p.x.is_finite() && p.y.is_finite())
        .collect();
    let range = |vals: Vec<f64>| -> (f64, f64) {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(pts.iter().map(|p| tx(p.x)).collect());
    let (y0, y1) = range(pts.iter().map(|p| ty(p.y)).collect());
    let px = |v: f64| left + (tx(v) - x0) / (x1 - x0) * (w - left - right);
    let py = |v: f64| h - bottom - (ty(v) - y0) / (y1 - y0) * (h - top - bottom);

    let mut series: Vec<&str> = pts.iter().map(|p| p.series.as_str()).collect();
    series.sort_unstable();
    series.dedup();
    let colour = |s: &str| PALETTE[series.iter().position(|x| *x == s).unwrap_or(0) % PALETTE.len()];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (w - right + left) / 2.0,
        escape(&spec.title)
    );
    let (ax0, ax1, ay0, ay1) = (left, w - right, h - bottom, top);
    let _ = writeln!(
        svg,
        r#"<path d="M{ax0} {ay1} L{ax0} {ay0} L{ax1} {ay0}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (vx, vy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let lx = if spec.log_x { format!("1e{vx:.1}") } else { format!("{vx:.3}") };
        let ly = if spec.log_y { format!("1e{vy:.1}") } else { format!("{vy:.3}") };
        let gx = ax0 + f * (ax1 - ax0);
        let gy = ay0 - f * (ay0 - ay1);
        let _ = writeln!(svg, r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{lx}</text>"#, ay0 + 16.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ly}</text>"#, ax0 - 6.0, gy + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (ax0 + ax1) / 2.0,
        h - 10.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(&spec.y_label)
    );
    for p in &pts {
        let r = if p.highlight { 6 } else { 4 };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{}" stroke="black" stroke-width="{}"><title>{}</title></circle>"#,
            px(p.x),
            py(p.y),
            colour(&p.series),
            if p.highlight { 1.5 } else { 0.5 },
            escape(&p.label)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let y = top + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            w - right + 14.0,
            colour(s),
            w - right + 22.0,
            y + 4.0,
            escape(s)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn efficiency_svg(rows: &[DataEfficiencyRecord]) -> String {
    let points: Vec<PlotPoint> = rows
        .iter()
        .map(|r| PlotPoint {
            label: format!("{} {}: {:.3} at {:.3e} tokens", r.model_id, r.lang, r.score, r.lang_tokens),
            series: r.model_id.clone(),
            x: r.lang_tokens,
            y: r.score,
            highlight: false,
        })
        .collect();
    scatter_svg(
        &PlotSpec {
            title: "Score vs. language-specific training tokens".into(),
            x_label: "tokens in language (log scale)".into(),
            y_label: "mean accuracy".into(),
            log_x: true,
            log_y: false,
        },
        &points,
    )
}

pub fn pareto_svg(points: &[ParetoPoint<f64>], frontier: &[ParetoPoint<f64>]) -> String {
    let on_front = |p: &ParetoPoint<f64>| frontier.iter().any(|q| q.model_id == p.model_id && q.x == p.x && q.y == p.y);
    let pts: Vec<PlotPoint> = points
        .iter()
        .map(|p| PlotPoint {
            label: format!("{}: {:.3e} FLOPs, error {:.3}", p.model_id, p.x, p.y),
            series: if on_front(p) { "frontier".into() } else { "dominated".into() },
            x: p.x,
            y: p.y,
            highlight: on_front(p),
        })
        .collect();
    scatter_svg(
        &PlotSpec {
            title: "Error rate vs. training compute".into(),
            x_label: "training FLOPs (log scale)".into(),
            y_label: "error rate (log scale)".into(),
            log_x: true,
            log_y: true,
        },
        &pts,
    )
}
