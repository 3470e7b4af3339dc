#![allow(dead_code)]

use mlcurate::Document;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Space-separated words of 2..=7 letters drawn from `alphabet`.
pub fn words_over(rng: &mut ChaCha8Rng, alphabet: &[char], words: usize) -> String {
    (0..words)
        .map(|_| {
            let len = rng.random_range(2..=7);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn letters(from: char, to: char) -> Vec<char> {
    (from..=to).collect()
}

/// `n` documents over `alphabet`, ids `{prefix}{i:04}`.
pub fn corpus(seed: u64, prefix: &str, alphabet: &[char], n: usize, words: usize) -> Vec<Document> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Document::new(format!("{prefix}{i:04}"), words_over(&mut r, alphabet, words)))
        .collect()
}

pub fn ids(docs: &[Document]) -> Vec<String> {
    docs.iter().map(|d| d.id.clone()).collect()
}

fn write_jsonl(path: &std::path::Path, docs: &[Document]) {
    mlcurate::corpus::write_documents_to(path, docs).unwrap();
}

fn labelled(docs: Vec<Document>, lang: &str, source: &str) -> Vec<Document> {
    docs.into_iter().map(|d| d.with_lang(lang).with_source(source)).collect()
}

/// Writes inputs and a six-stage config (ingest, quality train and filter,
/// dedup, translate, mixture) under `dir`; returns the config path.
pub fn full_pipeline(dir: &std::path::Path, seed: u64) -> std::path::PathBuf {
    let good = letters('a', 'm');
    let bad = letters('n', 'z');
    let spanish = letters('á', 'ÿ');
    write_jsonl(&dir.join("pos.jsonl"), &labelled(corpus(1, "pos", &good, 60, 20), "en", "dclm"));
    write_jsonl(&dir.join("neg.jsonl"), &labelled(corpus(2, "neg", &bad, 60, 20), "en", "dclm"));
    let mut web = labelled(corpus(3, "en-good-", &good, 40, 30), "en", "dclm");
    web.extend(labelled(corpus(4, "en-bad-", &bad, 40, 30), "en", "dclm"));
    web.extend(labelled(corpus(5, "es-", &spanish, 30, 30), "es", "fineweb2"));
    write_jsonl(&dir.join("web.jsonl"), &web);
    let config = serde_json::json!({
        "schema_version": 1,
        "seed": seed,
        "inputs": {"web": "web.jsonl", "pos": "pos.jsonl", "neg": "neg.jsonl"},
        "output_dir": "out",
        "stages": [
            {"name": "load", "op": "ingest", "params": {"inputs": ["web"]}},
            {"name": "qt", "op": "quality_train", "params": {"positive": "pos", "negative": "neg", "config": {"hash_dim": 4096}}},
            {"name": "qf", "op": "quality_filter", "params": {"model": "qt", "keep": {"mode": "fraction", "fraction": 0.5}, "lang": "en"}},
            {"name": "dd", "op": "dedup", "params": {"embedder": {"kind": "hashing", "dim": 64}, "tau": 0.01}},
            {"name": "tr", "op": "translate", "params": {
                "target_lang": "es", "strategy": "scored", "fraction": 0.5, "quality_model": "qt",
                "translator": {"kind": "mock", "marker": "[es] ", "fail_ids": ["en-good-0003"]},
                "source": "fineweb2"
            }},
            {"name": "mix", "op": "mixture", "params": {"plan": {
                "phases": [
                    {"name": "p1", "tokens": 1500, "multilingual_fraction": 0.2},
                    {"name": "p2", "tokens": 500, "multilingual_fraction": 0.5}
                ],
                "languages": ["es"]
            }}}
        ]
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path
}

/// Every file under `dir` except wall-clock timings, keyed by relative path.
pub fn output_files(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, d: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != mlcurate::pipeline::TIMINGS_FILE {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
