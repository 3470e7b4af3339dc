//! One PASS/FAIL line per acceptance criterion. Soft criteria are reported
//! but do not affect the exit status.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use mlcurate::analytics;
use mlcurate::embedding::FnEmbedder;
use mlcurate::langid;
use mlcurate::mixture::{self, MixturePlan, PhaseSpec};
use mlcurate::quality::{self, Keep, ScoreRecord, TrainConfig};
use mlcurate::similarity::{self, ParallelPair, PplNormalization, WordRule};
use mlcurate::translate::{self, MockTranslator, Strategy, TranslateOptions, TRANSLATED_FROM_PREFIX};
use mlcurate::{languages, pipeline, reference, CorpusInventory, Document, Fraction, ParetoPoint, PoolKey};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, bool, fn() -> Verdict); 12] = [
        ("curriculum math", false, curriculum),
        ("flops table", false, flops_table),
        ("aggregation fixtures", false, aggregation),
        ("pareto oracle", false, pareto),
        ("correlation statistics", false, correlation),
        ("quality filtering", false, quality_filtering),
        ("language id", false, language_id),
        ("determinism", false, determinism),
        ("mixture conservation", false, mixture_conservation),
        ("similarity machinery", false, similarity_machinery),
        ("translation pipeline", false, translation),
        ("throughput (soft)", true, throughput),
    ];
    let mut failed = 0;
    for (i, (name, soft, check)) in criteria.iter().enumerate() {
        let v = check();
        let status = match (v.pass, soft) {
            (true, _) => "PASS",
            (false, true) => "FAIL (soft, not counted)",
            (false, false) => "FAIL",
        };
        if !v.pass && !soft {
            failed += 1;
        }
        println!("criterion {:>2} {name}: {status}: {}", i + 1, v.detail);
    }
    println!("{failed} hard criteria failed");
    if failed > 0 && std::env::var_os("MLCURATE_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// 1 -------------------------------------------------------------------------

fn curriculum() -> Verdict {
    let start = Instant::now();
    let plan = MixturePlan::reference_curriculum();
    let inv = languages::reference_inventory(4_000_000_000_000);
    let m = match mixture::plan(&plan, &inv, true) {
        Ok(m) => m,
        Err(e) => return verdict(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let exact = plan.overall_fraction_exact() == Some(Fraction::new(775, 10_000));
    let total = m.multilingual_total();
    let per_lang = Fraction::new(77_500_000_000, 13);
    let worst = m
        .language_totals()
        .values()
        .map(|&t| {
            let d = Fraction::from(t as i128) - per_lang;
            if d < Fraction::from(0) {
                -d
            } else {
                d
            }
        })
        .max()
        .unwrap_or_default();
    let pass = exact
        && total == 77_500_000_000
        && m.language_totals().len() == 13
        && worst <= Fraction::from(1)
        && elapsed.as_secs_f64() < 1.0;
    verdict(
        pass,
        format!(
            "F = {} (exact 31/400: {exact}), multilingual {total}, max |per-language - 77.5e9/13| = {:.3} tokens, {:.1} ms",
            m.overall_multilingual_fraction,
            *worst.numer() as f64 / *worst.denom() as f64,
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn flops_table() -> Verdict {
    let cards = reference::model_cards();
    let mut outside = Vec::new();
    let mut worst: f64 = 0.0;
    for c in &cards {
        let rel = (c.compute().flops / c.printed_flops.unwrap_or(f64::NAN) - 1.0).abs();
        worst = worst.max(rel);
        if !(rel <= 0.06) {
            outside.push(format!("{} {:.1}%", c.model_id, rel * 100.0));
        }
    }
    let exact: [(&str, f64); 5] = [
        ("datologyai-3b", 1.8e22),
        ("datologyai-8b", 4.8e22),
        ("granite-4.0-micro", 2.7e23),
        ("llama-3.1-8b", 7.2e23),
        ("trinity-large", 1.326e24),
    ];
    let exact_ok = exact.iter().all(|(id, want)| {
        cards
            .iter()
            .find(|c| c.model_id == *id)
            .is_some_and(|c| close(c.compute().flops / want, 1.0, 1e-12))
    });
    let pass = cards.len() == 15 && outside.is_empty() && exact_ok;
    verdict(
        pass,
        format!(
            "{} rows, {} within 6% (worst {:.1}%), exact values {}{}",
            cards.len(),
            cards.len() - outside.len(),
            worst * 100.0,
            if exact_ok { "match" } else { "differ" },
            if outside.is_empty() {
                String::new()
            } else {
                format!("; outside tolerance: {}", outside.join(", "))
            }
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn aggregation() -> Verdict {
    let t = reference::eval_table();
    let cases = [
        ("datologyai-3b", "es", (0.46 + 0.63 + 0.62) / 3.0),
        ("datologyai-3b", "ja", (0.44 + 0.55) / 2.0),
    ];
    let mut worst: f64 = 0.0;
    for (m, l, want) in cases {
        worst = worst.max(t.aggregate(m, l).map_or(f64::INFINITY, |v| (v - want).abs()));
    }
    // Every (model, lang) mean against a direct recomputation from records.
    let records = reference::eval_records();
    let mut by_key: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in &records {
        by_key.entry((&r.model_id, &r.lang)).or_default().push(r.accuracy);
    }
    for ((m, l), v) in &by_key {
        let want = v.iter().sum::<f64>() / v.len() as f64;
        worst = worst.max(t.aggregate(m, l).map_or(f64::INFINITY, |x| (x - want).abs()));
    }
    verdict(
        worst <= 1e-9,
        format!(
            "es 0.57 and ja 0.495 plus {} (model, language) means, max error {worst:.1e}",
            by_key.len()
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn pareto_oracle(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = points
        .iter()
        .filter(|p| {
            !points
                .iter()
                .any(|q| q.x <= p.x && q.y <= p.y && (q.x < p.x || q.y < p.y))
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.model_id.cmp(&b.model_id)));
    out
}

fn pareto() -> Verdict {
    let mut rng = common::rng(4);
    let mut mismatches = 0;
    for case in 0..1000 {
        let n = rng.random_range(0..=200);
        // Coarse grids on half the cases force ties.
        let grid = case % 2 == 0;
        let points: Vec<ParetoPoint> = (0..n)
            .map(|i| {
                let (x, y) = if grid {
                    (f64::from(rng.random_range(0..20u8)), f64::from(rng.random_range(0..20u8)) / 20.0)
                } else {
                    (rng.random::<f64>() * 1e24, rng.random::<f64>())
                };
                ParetoPoint {
                    model_id: format!("m{i}"),
                    x,
                    y,
                }
            })
            .collect();
        if analytics::pareto_frontier(&points) != pareto_oracle(&points) {
            mismatches += 1;
        }
    }

    let table = reference::eval_table();
    let langs = languages::multilingual_codes();
    let points: Vec<ParetoPoint> = reference::model_cards()
        .iter()
        .filter_map(|c| {
            let avg = table.multilingual_average(&c.model_id, &langs).ok()?;
            Some(ParetoPoint {
                model_id: c.model_id.clone(),
                x: c.compute().flops,
                y: analytics::error_rate(avg).ok()?,
            })
        })
        .collect();
    let front: BTreeSet<String> = analytics::pareto_frontier(&points).into_iter().map(|p| p.model_id).collect();
    let curated_ok = reference::CURATED_MODELS.iter().all(|m| front.contains(*m));
    verdict(
        mismatches == 0 && curated_ok,
        format!(
            "{mismatches}/1000 random sets differ from the pairwise oracle; frontier over {} fixture models with all 13 languages: {}",
            points.len(),
            front.iter().cloned().collect::<Vec<_>>().join(", ")
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn moment_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// `n` points whose sample correlation is exactly `r` up to rounding:
/// `y = r·x̂ + √(1−r²)·ẑ` with `ẑ` orthogonal to the standardized `x̂`.
fn with_correlation(rng: &mut ChaCha8Rng, n: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let standardize = |v: &mut Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|a| *a -= m);
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= s);
    };
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    standardize(&mut x);
    let mut z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    standardize(&mut z);
    let dot: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
    z.iter_mut().zip(&x).for_each(|(b, a)| *b -= dot * a);
    standardize(&mut z);
    let y = x.iter().zip(&z).map(|(a, b)| r * a + (1.0 - r * r).sqrt() * b).collect();
    (x, y)
}

fn correlation() -> Verdict {
    let mut rng = common::rng(5);
    let mut p_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut p_ok = true;
    for _ in 0..200 {
        let target = -0.62 + rng.random_range(-0.005..=0.005);
        let (x, y) = with_correlation(&mut rng, 13, target);
        let Ok(c) = similarity::pearson(&x, &y) else {
            p_ok = false;
            continue;
        };
        if !close(c.r, -0.62, 0.005) {
            continue;
        }
        p_range = (p_range.0.min(c.p), p_range.1.max(c.p));
        p_ok &= close(c.p, 0.024, 0.002);
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=200);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-1000i32..=1000))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-1000i32..=1000))).collect();
        if let Ok(c) = similarity::pearson(&x, &y) {
            worst = worst.max((c.r - moment_oracle(&x, &y)).abs());
        }
    }
    verdict(
        p_ok && worst <= 1e-12,
        format!(
            "n=13, r in -0.62 +/- 0.005 gives p in [{:.4}, {:.4}]; moment oracle max |dr| = {worst:.1e} over 1000 inputs",
            p_range.0, p_range.1
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn quality_filtering() -> Verdict {
    let pos = common::corpus(1, "p", &common::letters('a', 'm'), 200, 30);
    let neg = common::corpus(2, "n", &common::letters('n', 'z'), 200, 30);
    let cfg = TrainConfig {
        seed: 5,
        hash_dim: 1 << 16,
        ..TrainConfig::default()
    };
    let acc = quality::train_quality::<f32>(&pos, &neg, &cfg)
        .ok()
        .and_then(|r| r.heldout_accuracy)
        .unwrap_or(0.0);

    let mut rng = common::rng(6);
    let (mut count_ok, mut nest_ok) = (0, true);
    for _ in 0..500 {
        let n = rng.random_range(1..=500usize);
        let docs: Vec<Document> = (0..n).map(|i| Document::new(format!("d{i:04}"), "t")).collect();
        let scores: Vec<ScoreRecord> = docs
            .iter()
            .map(|d| ScoreRecord {
                doc_id: d.id.clone(),
                score: f64::from(rng.random_range(0..9u8)) / 9.0,
            })
            .collect();
        let k1 = rng.random_range(1..=1000u64);
        let k2 = rng.random_range(k1..=1000u64);
        let keep = |k: u64| quality::filter_top(&docs, &scores, Keep::Fraction { fraction: k as f64 / 1000.0 });
        let (Ok(a), Ok(b)) = (keep(k1), keep(k2)) else {
            continue;
        };
        if a.len() as u64 == (k1 * n as u64).div_ceil(1000) {
            count_ok += 1;
        }
        let big: BTreeSet<&str> = b.iter().map(|d| d.id.as_str()).collect();
        nest_ok &= a.iter().all(|d| big.contains(d.id.as_str()));
    }
    verdict(
        acc >= 0.95 && count_ok == 500 && nest_ok,
        format!("held-out accuracy {acc:.3}; ceil(f*N) exact in {count_ok}/500; nested subsets: {nest_ok}"),
    )
}

// 7 -------------------------------------------------------------------------

fn language_id() -> Verdict {
    let synth = [
        ("xa", common::letters('a', 'h')),
        ("xb", common::letters('i', 'p')),
        ("xc", common::letters('α', 'θ')),
    ];
    let mut seeds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, (code, alpha)) in synth.iter().enumerate() {
        let mut r = common::rng(i as u64);
        seeds.insert(code.to_string(), (0..20).map(|_| common::words_over(&mut r, alpha, 60)).collect());
    }
    let (mut synth_ok, mut synth_n) = (0, 0);
    if let Ok(set) = langid::train_profiles(&seeds, langid::DEFAULT_N_RANGE, langid::MIN_TOP_K) {
        let mut r = common::rng(70);
        for (code, alpha) in &synth {
            for _ in 0..100 {
                let text = common::words_over(&mut r, alpha, 50);
                synth_n += 1;
                if set.classify(&text, 200).ok().and_then(|p| p.lang().map(String::from)).as_deref() == Some(code) {
                    synth_ok += 1;
                }
            }
        }
    }

    let dir = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/langid"));
    let Ok(all) = langid::read_seed_dir(dir) else {
        return verdict(false, "cannot read seed corpora");
    };
    let train: BTreeMap<String, Vec<String>> = all.iter().map(|(l, p)| (l.clone(), p[..8].to_vec())).collect();
    let Ok(set) = langid::train_profiles(&train, langid::DEFAULT_N_RANGE, langid::DEFAULT_TOP_K) else {
        return verdict(false, "profile training failed");
    };
    let (mut ok, mut n) = (0, 0);
    let mut missed = Vec::new();
    for (lang, passages) in &all {
        for p in &passages[8..] {
            if p.chars().count() < 200 {
                continue;
            }
            n += 1;
            match set.classify(p, 200).ok().and_then(|x| x.lang().map(String::from)) {
                Some(got) if &got == lang => ok += 1,
                got => missed.push(format!("{lang}->{}", got.unwrap_or_else(|| "und".into()))),
            }
        }
    }
    let acc = ok as f64 / n.max(1) as f64;
    verdict(
        synth_ok == synth_n && synth_n > 0 && all.len() == 14 && acc >= 0.9,
        format!(
            "synthetic {synth_ok}/{synth_n}; seed corpora {ok}/{n} held-out passages across {} languages ({:.1}%){}",
            all.len(),
            acc * 100.0,
            if missed.is_empty() {
                String::new()
            } else {
                format!(", missed {}", missed.join(" "))
            }
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let Ok(dir) = tempfile::tempdir() else {
        return verdict(false, "no temp dir");
    };
    let cfg = common::full_pipeline(dir.path(), 8);
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        if let Err(e) = pipeline::run_file(&cfg) {
            return verdict(false, e.to_string());
        }
        runs.push(common::output_files(&out));
        let _ = std::fs::remove_dir_all(&out);
    }
    let key_files = ["report.json", "mix/manifest.json", "mix/docs.jsonl"];
    let present = key_files.iter().all(|f| runs[0].contains_key(*f));
    verdict(
        present && runs[0] == runs[1],
        format!(
            "two six-stage runs, {} output files compared byte for byte (manifest, mixture, report included: {present})",
            runs[0].len()
        ),
    )
}

// 9 -------------------------------------------------------------------------

const POOL_LANGS: [&str; 5] = ["es", "fr", "de", "ja", "ko"];

fn random_case(rng: &mut ChaCha8Rng) -> (MixturePlan, CorpusInventory) {
    let n_phases = rng.random_range(1..=4);
    let phases = (0..n_phases)
        .map(|i| {
            PhaseSpec::new(
                format!("p{i}"),
                rng.random_range(1..2_000_000),
                f64::from(rng.random_range(0..=1000u16)) / 1000.0,
            )
        })
        .collect();
    let n_langs = rng.random_range(1..=POOL_LANGS.len());
    let langs: Vec<String> = POOL_LANGS[..n_langs].iter().map(|s| s.to_string()).collect();
    let mut p = MixturePlan::new(phases, langs.clone());
    let w: Vec<f64> = (0..n_langs).map(|_| f64::from(rng.random_range(1..10u8))).collect();
    let sum: f64 = w.iter().sum();
    p.language_weights = langs.iter().cloned().zip(w.iter().map(|x| x / sum)).collect();
    p.repetition_cap = f64::from(rng.random_range(1..=8u8));
    let mut inv = CorpusInventory::new("whitespace-punct");
    inv.add(PoolKey::new("dclm", "en"), 1, rng.random_range(1..10_000_000));
    for l in &langs {
        inv.add(PoolKey::new("fineweb2", l.as_str()), 1, rng.random_range(0..400_000));
    }
    (p, inv)
}

fn pool_totals(m: &mixture::SamplingManifest) -> BTreeMap<PoolKey, u64> {
    let mut out = BTreeMap::new();
    for e in m.phases.iter().flat_map(|p| &p.entries) {
        *out.entry(e.pool()).or_insert(0) += e.target_tokens;
    }
    out
}

fn mixture_conservation() -> Verdict {
    let mut rng = common::rng(9);
    let (mut conserved, mut capped_ok) = (0, 0);
    let (mut entry_decreases, mut pool_decreases, mut deficit_increases) = (0, 0, 0);
    let mut example = None;
    for _ in 0..1000 {
        let (p, inv) = random_case(&mut rng);
        let Ok(m) = mixture::plan(&p, &inv, false) else {
            continue;
        };
        if m.phases.iter().zip(&p.phases).all(|(a, s)| {
            a.allocated() + a.deficit == s.tokens && (a.deficit > 0 || a.allocated() == s.tokens)
        }) {
            conserved += 1;
        }
        let limits: HashMap<PoolKey, u64> = m
            .phases
            .iter()
            .flat_map(|a| &a.entries)
            .map(|e| (e.pool(), (p.repetition_cap * e.available_tokens as f64).floor() as u64))
            .collect();
        if pool_totals(&m).iter().all(|(k, t)| *t <= limits[k]) {
            capped_ok += 1;
        }

        let mut raised = p.clone();
        raised.repetition_cap += f64::from(rng.random_range(1..=8u8)) / 2.0;
        let Ok(m2) = mixture::plan(&raised, &inv, false) else {
            continue;
        };
        let lower = m
            .phases
            .iter()
            .zip(&m2.phases)
            .flat_map(|(a, b)| a.entries.iter().zip(&b.entries))
            .find(|(a, b)| b.target_tokens < a.target_tokens);
        if let Some((a, b)) = lower {
            entry_decreases += 1;
            example.get_or_insert_with(|| {
                format!(
                    "{} {} -> {} when the cap rises {} -> {}",
                    a.pool(),
                    a.target_tokens,
                    b.target_tokens,
                    p.repetition_cap,
                    raised.repetition_cap
                )
            });
        }
        let (t1, t2) = (pool_totals(&m), pool_totals(&m2));
        if t1.iter().any(|(k, v)| t2[k] < *v) {
            pool_decreases += 1;
        }
        if m2.total_deficit() > m.total_deficit() {
            deficit_increases += 1;
        }
    }
    // Raising the cap frees capped pools, and the tokens they take back are
    // removed from pools that had absorbed the overflow. The literal
    // reading therefore cannot hold; the deficit check is the weaker
    // property that does.
    verdict(
        conserved == 1000 && capped_ok == 1000 && entry_decreases == 0,
        format!(
            "conserved {conserved}/1000, cap respected {capped_ok}/1000; raising the cap lowered some allocation in {entry_decreases}/1000 plans \
             (pool totals {pool_decreases}, e.g. {}); total deficit never grew: {} ({deficit_increases} increases)",
            example.unwrap_or_else(|| "none".into()),
            deficit_increases == 0
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn similarity_machinery() -> Verdict {
    let mut rng = common::rng(10);
    let latin = common::letters('a', 'z');
    let train: Vec<Document> = (0..40)
        .map(|i| Document::new(format!("t{i}"), common::words_over(&mut rng, &latin, 60)))
        .collect();
    let held = vec![Document::new("h", common::words_over(&mut rng, &latin, 200))];
    let foreign = vec![Document::new("f", common::words_over(&mut rng, &common::letters('α', 'ω'), 200))];
    let rule = WordRule::default();
    let ppl = similarity::train_char_lm(&train, 5, "xx").and_then(|lm| {
        Ok((
            similarity::log_ppl_per_word(&lm, &held, "xx", &rule, PplNormalization::PerWord)?,
            similarity::log_ppl_per_word(&lm, &foreign, "yy", &rule, PplNormalization::PerWord)?,
        ))
    });
    let Ok((own, other)) = ppl else {
        return verdict(false, "language model failed");
    };

    let mock = |id: &'static str, m: f64| {
        let theta = (1.0 - m).acos();
        FnEmbedder::new(id, move |t: &str| {
            if t.starts_with("EN ") {
                vec![1.0, 0.0]
            } else {
                vec![theta.cos(), theta.sin()]
            }
        })
    };
    let (e1, e2) = (mock("a", 0.25), mock("b", 0.6));
    let pairs: Vec<ParallelPair> = (0..5)
        .filter_map(|i| ParallelPair::new("es", &format!("EN {i}"), &format!("ES {i}")).ok())
        .collect();
    let want = (0.25f64.ln() + 0.6f64.ln()) / 2.0;
    let got = similarity::embed_distance(&pairs, &[&e1, &e2])
        .ok()
        .and_then(|d| d.get("es").copied())
        .unwrap_or(f64::NAN);
    let err = (got - want).abs();
    verdict(
        own < other && err <= 1e-12,
        format!("bits/word own {own:.3} < foreign {other:.3}; mock embed distance error {err:.1e}"),
    )
}

// 11 ------------------------------------------------------------------------

fn translation() -> Verdict {
    let mut rng = common::rng(11);
    let docs: Vec<Document> = common::corpus(11, "en", &common::letters('a', 'z'), 300, 10)
        .into_iter()
        .map(|d| d.with_lang("en"))
        .collect();
    let scores: Vec<ScoreRecord> = docs
        .iter()
        .map(|d| ScoreRecord {
            doc_id: d.id.clone(),
            score: f64::from(rng.random_range(0..20u8)) / 20.0,
        })
        .collect();
    let store: HashMap<String, Document> = docs.iter().map(|d| (d.id.clone(), d.clone())).collect();
    let (mut same_set, mut counts, mut tags) = (true, true, true);
    for case in 0..50 {
        let f = f64::from(rng.random_range(1..=100u8)) / 100.0;
        let Ok(jobs) = translate::select_sources(&docs, Strategy::Scored, f, Some(&scores), "es", case) else {
            return verdict(false, "job selection failed");
        };
        let filtered = quality::filter_top(&docs, &scores, Keep::Fraction { fraction: f }).unwrap_or_default();
        same_set &= jobs.iter().map(|j| &j.source_doc_id).eq(filtered.iter().map(|d| &d.id));
        let fail: Vec<String> = jobs
            .iter()
            .filter(|_| rng.random_bool(0.2))
            .map(|j| j.source_doc_id.clone())
            .collect();
        let mock = MockTranslator::with_marker("[es] ").failing_on(fail.clone());
        let opts = TranslateOptions {
            max_in_flight: 8,
            ..TranslateOptions::default()
        };
        let Ok(out) = translate::translate(&jobs, &store, &mock, "es", &opts) else {
            return verdict(false, "translation failed");
        };
        counts &= out.docs.len() == jobs.len() - fail.len() && out.failures.len() == fail.len();
        tags &= out
            .docs
            .iter()
            .all(|d| d.provenance.iter().filter(|t| t.starts_with(TRANSLATED_FROM_PREFIX)).count() == 1);
    }
    verdict(
        same_set && counts && tags,
        format!("50 runs: scored jobs equal filter_top {same_set}; outputs = jobs - failures {counts}; one translated-from tag {tags}"),
    )
}

// 12 ------------------------------------------------------------------------

fn throughput() -> Verdict {
    let pos = common::corpus(1, "p", &common::letters('a', 'm'), 200, 30);
    let neg = common::corpus(2, "n", &common::letters('n', 'z'), 200, 30);
    let Ok(model) = quality::train_quality::<f32>(&pos, &neg, &TrainConfig::default()).map(|r| r.model) else {
        return verdict(false, "training failed");
    };
    let docs = common::corpus(12, "d", &common::letters('a', 'z'), 20_000, 150);
    let mut jsonl = Vec::new();
    if mlcurate::corpus::write_documents(&mut jsonl, &docs).is_err() {
        return verdict(false, "serialization failed");
    }
    let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(8).build() else {
        return verdict(false, "no thread pool");
    };
    let start = Instant::now();
    let kept = pool.install(|| -> mlcurate::Result<usize> {
        use rayon::prelude::*;
        let text = std::str::from_utf8(&jsonl).expect("utf-8");
        let parsed: Vec<Document> = text
            .par_lines()
            .map(|l| mlcurate::corpus::parse_line(l).map_err(mlcurate::Error::InvalidArgument))
            .collect::<mlcurate::Result<_>>()?;
        let scores = quality::score(&parsed, &model);
        Ok(quality::filter_top(&parsed, &scores, Keep::Fraction { fraction: 0.5 })?.len())
    });
    let secs = start.elapsed().as_secs_f64();
    let mbps = jsonl.len() as f64 / 1e6 / secs;
    let profile = if cfg!(debug_assertions) { "debug build" } else { "release build" };
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    verdict(
        kept.is_ok() && mbps >= 50.0,
        format!(
            "{:.1} MB scored and filtered at {mbps:.1} MB/s on 8 threads, {cores} hardware threads available ({profile})",
            jsonl.len() as f64 / 1e6
        ),
    )
}
