mod common;

use std::collections::{BTreeSet, HashMap};

use mlcurate::quality::{self, Keep, ScoreRecord};
use mlcurate::translate::{
    self, MockTranslator, Strategy, TranslateError, TranslateOptions, TranslateRequest, Translator, TRANSLATED_FROM_PREFIX,
};
use mlcurate::Document;
use proptest::prelude::*;

fn english(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| Document::new(format!("en{i:03}"), format!("sentence number {i}")).with_lang("en").with_source("web"))
        .collect()
}

fn scores_for(docs: &[Document], raw: &[u8]) -> Vec<ScoreRecord> {
    docs.iter()
        .zip(raw.iter().cycle())
        .map(|(d, r)| ScoreRecord {
            doc_id: d.id.clone(),
            score: f64::from(r % 10) / 10.0,
        })
        .collect()
}

fn store(docs: &[Document]) -> HashMap<String, Document> {
    docs.iter().map(|d| (d.id.clone(), d.clone())).collect()
}

/// Sort by descending score then ascending id, keep the first ceil(k/1000 · N).
fn top_oracle(scores: &[ScoreRecord], k: u64) -> BTreeSet<String> {
    let mut v: Vec<&ScoreRecord> = scores.iter().collect();
    v.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.doc_id.cmp(&b.doc_id)));
    let keep = ((k * v.len() as u64 + 999) / 1000) as usize;
    v[..keep].iter().map(|r| r.doc_id.clone()).collect()
}

/// Fails the first `n` attempts for every request, transiently.
struct Flaky {
    n: usize,
    seen: std::sync::Mutex<HashMap<String, usize>>,
}

impl Translator for Flaky {
    fn translate(&self, req: &TranslateRequest) -> Result<String, TranslateError> {
        let mut seen = self.seen.lock().unwrap();
        let c = seen.entry(req.id.clone()).or_insert(0);
        *c += 1;
        if *c <= self.n {
            Err(TranslateError::Transient("busy".into()))
        } else {
            Ok(format!("[tr] {}", req.text))
        }
    }
}

#[test]
fn selection_examples() {
    let docs = english(2);
    let s = vec![
        ScoreRecord { doc_id: "en000".into(), score: 0.9 },
        ScoreRecord { doc_id: "en001".into(), score: 0.1 },
    ];
    let jobs = translate::select_sources(&docs, Strategy::Scored, 0.5, Some(&s), "es", 0).unwrap();
    assert_eq!(jobs.len(), 1);
    assert_eq!(jobs[0].source_doc_id, "en000");
    for strategy in [Strategy::Random, Strategy::Scored] {
        let all = translate::select_sources(&docs, strategy, 1.0, Some(&s), "es", 3).unwrap();
        assert_eq!(all.len(), 2);
    }
    assert!(translate::select_sources(&docs, Strategy::Scored, 0.5, None, "es", 0).is_err());
    assert!(translate::select_sources(&docs, Strategy::Random, 0.5, None, "xx", 0).is_err());
}

#[test]
fn identity_mock_keeps_text_and_tags_once() {
    let docs = vec![Document::new("h", "hello").with_lang("en")];
    let jobs = translate::select_sources(&docs, Strategy::Random, 1.0, None, "hi", 0).unwrap();
    let out = translate::translate(&jobs, &store(&docs), &MockTranslator::identity(), "hi", &TranslateOptions::default()).unwrap();
    assert_eq!(out.docs.len(), 1);
    let d = &out.docs[0];
    assert_eq!((d.text.as_str(), d.lang.as_deref()), ("hello", Some("hi")));
    assert_eq!(d.id, "h::tr::hi");
    assert!(d.provenance.contains(&"translated-from:en".to_string()));
}

#[test]
fn transient_failures_are_retried_up_to_the_limit() {
    let docs = english(6);
    let jobs = translate::select_sources(&docs, Strategy::Random, 1.0, None, "de", 0).unwrap();
    let opts = TranslateOptions { max_in_flight: 3, retries: 2, strict: false };
    let ok = Flaky { n: 2, seen: Default::default() };
    assert_eq!(translate::translate(&jobs, &store(&docs), &ok, "de", &opts).unwrap().docs.len(), 6);
    let bad = Flaky { n: 3, seen: Default::default() };
    let out = translate::translate(&jobs, &store(&docs), &bad, "de", &opts).unwrap();
    assert!(out.docs.is_empty());
    assert!(out.failures.iter().all(|f| f.attempts == 3));
}

proptest! {
    #[test]
    fn scored_jobs_equal_filter_top(n in 1usize..120, k in 1u64..=1000, raw in proptest::collection::vec(any::<u8>(), 1..40)) {
        let docs = english(n);
        let scores = scores_for(&docs, &raw);
        let f = k as f64 / 1000.0;
        let jobs = translate::select_sources(&docs, Strategy::Scored, f, Some(&scores), "fr", 0).unwrap();
        let job_ids: Vec<String> = jobs.iter().map(|j| j.source_doc_id.clone()).collect();
        let filtered = quality::filter_top(&docs, &scores, Keep::Fraction { fraction: f }).unwrap();
        prop_assert_eq!(&job_ids, &common::ids(&filtered));
        prop_assert_eq!(job_ids.into_iter().collect::<BTreeSet<_>>(), top_oracle(&scores, k));
    }

    #[test]
    fn random_selection_is_seeded_and_sized(n in 1usize..120, k in 1u64..=1000, seed in any::<u64>()) {
        let docs = english(n);
        let f = k as f64 / 1000.0;
        let a = translate::select_sources(&docs, Strategy::Random, f, None, "ko", seed).unwrap();
        let b = translate::select_sources(&docs, Strategy::Random, f, None, "ko", seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len() as u64, (k * n as u64 + 999) / 1000);
    }

    #[test]
    fn output_count_is_jobs_minus_failures(n in 1usize..60, fail in proptest::collection::btree_set(0usize..60, 0..20), inflight in 1usize..9) {
        let docs = english(n);
        let jobs = translate::select_sources(&docs, Strategy::Random, 1.0, None, "vi", 1).unwrap();
        let fail_ids: Vec<String> = fail.iter().filter(|i| **i < n).map(|i| format!("en{i:03}")).collect();
        let mock = MockTranslator::with_marker("» ").failing_on(fail_ids.clone());
        let opts = TranslateOptions { max_in_flight: inflight, ..TranslateOptions::default() };
        let out = translate::translate(&jobs, &store(&docs), &mock, "vi", &opts).unwrap();
        prop_assert_eq!(out.docs.len(), jobs.len() - fail_ids.len());
        prop_assert_eq!(out.failures.len(), fail_ids.len());
        let ids: BTreeSet<&str> = out.docs.iter().map(|d| d.id.as_str()).collect();
        prop_assert_eq!(ids.len(), out.docs.len());
        for d in &out.docs {
            prop_assert_eq!(d.provenance.iter().filter(|t| t.starts_with(TRANSLATED_FROM_PREFIX)).count(), 1);
        }
        // Output follows job order regardless of worker count.
        let expected: Vec<String> = jobs.iter().filter(|j| !fail_ids.contains(&j.source_doc_id)).map(|j| j.output_id()).collect();
        prop_assert_eq!(out.docs.iter().map(|d| d.id.clone()).collect::<Vec<_>>(), expected);
    }
}
