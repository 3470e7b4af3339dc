mod common;

use mlcurate::embedding::FnEmbedder;
use mlcurate::similarity::{self, ParallelPair, PplNormalization, WordRule};
use mlcurate::Document;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};

/// Textbook single-pass formula, exact on integer inputs up to the final
/// division.
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Two-tailed p via `t = √df · tan u`, which turns the tail mass into
/// `∫ cos^(df-1) u du` from `asin |r|` to `π/2`; integrated by Simpson's rule.
fn p_oracle(r: f64, n: usize) -> f64 {
    let df = (n - 2) as i32;
    let f = |u: f64| u.cos().powi(df - 1);
    let simpson = |a: f64, b: f64| {
        let m = 20_000;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    simpson(r.abs().asin(), half) / simpson(0.0, half)
}

fn int_series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(-1000i32..=1000, n),
            proptest::collection::vec(-1000i32..=1000, n),
        )
            .prop_filter_map("constant series", |(x, y)| {
                let nonconst = |v: &[i32]| v.iter().any(|&a| a != v[0]);
                (nonconst(&x) && nonconst(&y)).then(|| {
                    (
                        x.into_iter().map(f64::from).collect(),
                        y.into_iter().map(f64::from).collect(),
                    )
                })
            })
    })
}

#[test]
fn pearson_examples() {
    let c = similarity::pearson::<f64>(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((c.r - 0.8).abs() < 1e-12);
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    assert!((similarity::pearson(&x, &y).unwrap().r - 1.0).abs() < 1e-12);
    assert!(similarity::pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(similarity::pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    assert!(similarity::pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
}

#[test]
fn p_value_agrees_with_quadrature() {
    for (r, n) in [(-0.62, 13), (0.3, 30), (0.05, 5), (0.9, 7), (-0.7, 13)] {
        let p = similarity::t_test_p(r, n);
        assert!((p - p_oracle(r, n)).abs() < 1e-9, "r={r} n={n}");
    }
}

#[test]
fn single_precision_pearson_tracks_double() {
    let x = [1.0f32, 2.0, 4.0, 3.0, 8.0];
    let y = [2.0f32, 1.0, 5.0, 3.0, 7.0];
    let a = similarity::pearson(&x, &y).unwrap();
    let b = similarity::pearson(&x.map(f64::from), &y.map(f64::from)).unwrap();
    assert!((f64::from(a.r) - b.r).abs() < 1e-5);
}

/// English sentences embed to `(1, 0)`; targets at angle `acos(1 - m)`.
fn fixed_distance(id: &str, m: f64) -> FnEmbedder<impl Fn(&str) -> Vec<f64> + Send + Sync> {
    let theta = (1.0 - m).acos();
    FnEmbedder::new(id, move |t: &str| {
        if t.starts_with("EN ") {
            vec![1.0, 0.0]
        } else {
            vec![theta.cos(), theta.sin()]
        }
    })
}

fn pairs(n: usize) -> Vec<ParallelPair> {
    (0..n)
        .flat_map(|i| {
            ["es", "ko"].map(|l| ParallelPair::new(l, &format!("EN {i}"), &format!("{l} {i}")).unwrap())
        })
        .collect()
}

#[test]
fn embed_distance_averages_log_means() {
    let (e1, e2) = (fixed_distance("a", 0.2), fixed_distance("b", 0.5));
    let d = similarity::embed_distance(&pairs(6), &[&e1, &e2]).unwrap();
    let want = (0.2f64.ln() + 0.5f64.ln()) / 2.0;
    assert_eq!(d.len(), 2);
    assert!(d.values().all(|v| (v - want).abs() < 1e-12));
    let same = fixed_distance("z", 0.0);
    assert!(similarity::embed_distance(&pairs(2), &[&same]).is_err());
    assert!(similarity::embed_distance(&pairs(2), &[]).is_err());
}

fn words(rng: &mut rand_chacha::ChaCha8Rng, alphabet: &[char], n: usize) -> Vec<String> {
    common::words_over(rng, alphabet, n).split(' ').map(String::from).collect()
}

#[test]
fn own_language_scores_below_foreign_script() {
    let latin = common::letters('a', 'z');
    let greek = common::letters('α', 'ω');
    let mut rng = common::rng(4);
    let vocab = words(&mut rng, &latin, 300);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> String {
        (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
    };
    let train: Vec<Document> = (0..40).map(|i| Document::new(format!("t{i}"), sample(&mut rng, 50))).collect();
    let lm = similarity::train_char_lm(&train, 4, "xx").unwrap();
    let held = vec![Document::new("h", sample(&mut rng, 200))];
    let foreign = vec![Document::new("f", common::words_over(&mut rng, &greek, 200))];
    let rule = WordRule::default();
    let own = similarity::log_ppl_per_word(&lm, &held, "xx", &rule, PplNormalization::PerWord).unwrap();
    let other = similarity::log_ppl_per_word(&lm, &foreign, "yy", &rule, PplNormalization::PerWord).unwrap();
    assert!(own < other);
    let total = similarity::log_ppl_per_word(&lm, &held, "xx", &rule, PplNormalization::Total).unwrap();
    assert!((total / 200.0 - own).abs() < 1e-9);
}

#[test]
fn unspaced_languages_count_characters() {
    let rule = WordRule::default();
    assert_eq!(rule.count("日本 語", "ja"), 3);
    assert_eq!(rule.count("one two", "en"), 2);
}

proptest! {
    #[test]
    fn pearson_matches_moment_oracle((x, y) in int_series()) {
        let c = similarity::pearson(&x, &y).unwrap();
        prop_assert!((c.r - pearson_oracle(&x, &y)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c.p));
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant((x, y) in int_series(), a in 0.1f64..50.0, b in -100f64..100.0, flip in any::<bool>()) {
        let r = similarity::pearson(&x, &y).unwrap().r;
        prop_assert!((similarity::pearson(&y, &x).unwrap().r - r).abs() < 1e-12);
        let s = if flip { -a } else { a };
        let xs: Vec<f64> = x.iter().map(|v| s * v + b).collect();
        let rs = similarity::pearson(&xs, &y).unwrap().r;
        let want = if flip { -r } else { r };
        prop_assert!((rs - want).abs() < 1e-9);
    }

    #[test]
    fn embed_distance_ignores_pair_order(seed in any::<u64>(), n in 1usize..20) {
        let e = mlcurate::embedding::HashingEmbedder::new(64);
        let mut p = pairs(n);
        let a = similarity::embed_distance(&p, &[&e]).unwrap();
        p.shuffle(&mut common::rng(seed));
        prop_assert_eq!(a, similarity::embed_distance(&p, &[&e]).unwrap());
    }

    #[test]
    fn ppl_falls_as_target_approaches_training(seed in any::<u64>()) {
        let latin = common::letters('a', 'm');
        let mut rng = common::rng(seed);
        let vocab = words(&mut rng, &latin, 200);
        let train: Vec<Document> = (0..20)
            .map(|i| Document::new(format!("t{i}"), vocab[i * 10..i * 10 + 10].join(" ")))
            .collect();
        let lm = similarity::train_char_lm(&train, 3, "xx").unwrap();
        let foreign = words(&mut rng, &common::letters('n', 'z'), 40);
        let mut prev = f64::INFINITY;
        for k in (0..=40).step_by(8) {
            let text: Vec<&str> = vocab[..k].iter().chain(&foreign[k..]).map(String::as_str).collect();
            let doc = vec![Document::new("x", text.join(" "))];
            let v = similarity::log_ppl_per_word(&lm, &doc, "xx", &WordRule::default(), PplNormalization::PerWord).unwrap();
            prop_assert!(v <= prev + 1e-9);
            prev = v;
        }
    }
}
