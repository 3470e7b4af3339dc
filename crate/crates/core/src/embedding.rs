//! Geometry-based curation over document embeddings.
//!
//! Both selection routines scan documents in ascending id order, so their
//! output never depends on input order.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl_file, Document};
use crate::error::{Error, Result};
use crate::external;
use crate::scalar::Real;

pub const EMBED_DEDUP_TAG: &str = "embed-dedup";
pub const DIVERSE_TAG: &str = "embed-diverse";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    pub doc_id: String,
    pub vector: Vec<T>,
    pub embedder_id: String,
}

pub fn dot<T: Real>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(a, b)| *a * *b).sum()
}

pub fn norm<T: Real>(u: &[T]) -> T {
    dot(u, u).sqrt()
}

/// `1 - cos(u, v)`, clamped into `[0, 2]`.
pub fn cosine_distance<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu.is_zero() || nv.is_zero() {
        return Err(Error::ZeroNorm);
    }
    Ok(distance_with_norms(u, v, nu, nv))
}

fn distance_with_norms<T: Real>(u: &[T], v: &[T], nu: T, nv: T) -> T {
    let d = T::one() - dot(u, v) / (nu * nv);
    d.max(T::zero()).min(T::lit(2.0))
}

/// Checks a collection: one embedder, one dimension, finite non-zero
/// vectors, unique ids. Returns indices sorted by doc id and the norms.
fn prepare<T: Real>(embs: &[EmbeddingVector<T>]) -> Result<(Vec<usize>, Vec<T>)> {
    if let Some(first) = embs.first() {
        let dim = first.vector.len();
        for e in embs {
            if e.embedder_id != first.embedder_id {
                return Err(Error::MixedEmbedders(first.embedder_id.clone(), e.embedder_id.clone()));
            }
            if e.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: e.vector.len(),
                });
            }
            if e.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(e.doc_id.clone()));
            }
        }
    }
    let mut order: Vec<usize> = (0..embs.len()).collect();
    order.sort_by(|&a, &b| embs[a].doc_id.cmp(&embs[b].doc_id));
    for w in order.windows(2) {
        if embs[w[0]].doc_id == embs[w[1]].doc_id {
            return Err(Error::DuplicateId(embs[w[0]].doc_id.clone()));
        }
    }
    let norms: Vec<T> = embs.iter().map(|e| norm(&e.vector)).collect();
    if let Some(i) = norms.iter().position(|n| n.is_zero()) {
        return Err(Error::invalid(format!("embedding for `{}` has zero norm", embs[i].doc_id)));
    }
    Ok((order, norms))
}

/// Greedy near-duplicate removal. A document is dropped iff it lies closer
/// than `tau` to a document already kept. Returns kept ids, ascending.
pub fn dedup_near<T: Real>(embs: &[EmbeddingVector<T>], tau: T) -> Result<Vec<String>> {
    if !(tau > T::zero() && tau < T::lit(2.0)) {
        return Err(Error::invalid(format!("tau must lie in (0, 2), got {tau}")));
    }
    let (order, norms) = prepare(embs)?;
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let e = &embs[i].vector;
        let near = |&j: &usize| distance_with_norms(e, &embs[j].vector, norms[i], norms[j]) < tau;
        let dup = if kept.len() > 4096 {
            kept.par_iter().any(near)
        } else {
            kept.iter().any(near)
        };
        if !dup {
            kept.push(i);
        }
    }
    Ok(kept.into_iter().map(|i| embs[i].doc_id.clone()).collect())
}

/// Farthest-point traversal seeded at the smallest id. Returns `k` ids in
/// selection order.
pub fn select_diverse<T: Real>(embs: &[EmbeddingVector<T>], k: usize) -> Result<Vec<String>> {
    let n = embs.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let (order, norms) = prepare(embs)?;
    // Work in id order so a strict `>` scan breaks ties toward smaller ids.
    let dist = |a: usize, b: usize| {
        let (i, j) = (order[a], order[b]);
        distance_with_norms(&embs[i].vector, &embs[j].vector, norms[i], norms[j])
    };
    let mut selected = vec![0usize];
    let mut taken = vec![false; n];
    taken[0] = true;
    let mut min_d: Vec<T> = (0..n).into_par_iter().map(|a| dist(a, 0)).collect();
    while selected.len() < k {
        let mut best: Option<usize> = None;
        for a in 0..n {
            if taken[a] {
                continue;
            }
            if best.is_none_or(|b| min_d[a] > min_d[b]) {
                best = Some(a);
            }
        }
        let b = best.expect("k <= n leaves a candidate");
        taken[b] = true;
        selected.push(b);
        min_d.par_iter_mut().enumerate().for_each(|(a, m)| {
            let d = dist(a, b);
            if d < *m {
                *m = d;
            }
        });
    }
    Ok(selected.into_iter().map(|a| embs[order[a]].doc_id.clone()).collect())
}

/// Keeps documents whose id is in `ids`, in stream order, appending `tag`.
pub fn retain_tagged(docs: &[Document], ids: &[String], tag: &str) -> Vec<Document> {
    let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
    docs.iter()
        .filter(|d| keep.contains(d.id.as_str()))
        .map(|d| {
            let mut d = d.clone();
            d.tag(tag);
            d
        })
        .collect()
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingVector<f64>>> {
    let embs: Vec<EmbeddingVector<f64>> = read_jsonl_file(path)?;
    prepare(&embs)?;
    Ok(embs)
}

// ---------------------------------------------------------------------------
// Embedders

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Wraps a closure; handy for mocks.
pub struct FnEmbedder<F> {
    id: String,
    f: F,
}

impl<F: Fn(&str) -> Vec<f64> + Send + Sync> FnEmbedder<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnEmbedder { id: id.into(), f }
    }
}

impl<F: Fn(&str) -> Vec<f64> + Send + Sync> Embedder for FnEmbedder<F> {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| (self.f)(t)).collect())
    }
}

/// Built-in offline embedder: hashed character-trigram counts.
pub struct HashingEmbedder {
    id: String,
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        HashingEmbedder {
            id: format!("hashing-trigram-{dim}"),
            dim: dim.max(1),
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        let mut v = vec![0.0; self.dim];
        for w in chars.windows(3.min(chars.len()).max(1)) {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for c in w {
                h ^= *c as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            v[(h % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct EmbedLine<'a> {
    id: &'a str,
    text: &'a str,
}

/// Subprocess embedder: JSONL `{"id","text"}` on stdin, embedding JSONL
/// `{"doc_id","vector","embedder_id"}` on stdout.
pub struct SubprocessEmbedder {
    id: String,
    command: Vec<String>,
}

impl SubprocessEmbedder {
    pub fn new(id: impl Into<String>, command: Vec<String>) -> Self {
        SubprocessEmbedder { id: id.into(), command }
    }
}

impl Embedder for SubprocessEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let fail = |message: String| Error::Embedder {
            embedder: self.id.clone(),
            message,
        };
        let keys: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
        let lines: Vec<String> = texts
            .iter()
            .zip(&keys)
            .map(|(t, k)| serde_json::to_string(&EmbedLine { id: k, text: t }).expect("serializes"))
            .collect();
        let out = external::run_batch(&self.command, &lines).map_err(fail)?;
        let mut by_id: HashMap<String, Vec<f64>> = HashMap::new();
        for line in out {
            let e: EmbeddingVector<f64> =
                serde_json::from_str(&line).map_err(|e| fail(format!("bad output line: {e}")))?;
            by_id.insert(e.doc_id, e.vector);
        }
        keys.iter()
            .map(|k| by_id.remove(k).ok_or_else(|| fail(format!("no vector returned for item {k}"))))
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP embedder: `POST {base}/embed {"texts":[..]}` → `{"vectors":[[..]]}`.
pub struct HttpEmbedder {
    id: String,
    url: String,
}

impl HttpEmbedder {
    pub fn new(id: impl Into<String>, base_url: &str) -> Self {
        HttpEmbedder {
            id: id.into(),
            url: external::endpoint(base_url, "/embed"),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let fail = |message: String| Error::Embedder {
            embedder: self.id.clone(),
            message,
        };
        let resp: EmbedResponse = external::post_json(&self.url, &EmbedRequest { texts }).map_err(fail)?;
        if resp.vectors.len() != texts.len() {
            return Err(fail(format!(
                "expected {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        Ok(resp.vectors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderSpec {
    Hashing { dim: usize },
    Subprocess { id: String, command: Vec<String> },
    Http { id: String, url: String },
}

impl EmbedderSpec {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self {
            EmbedderSpec::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)),
            EmbedderSpec::Subprocess { id, command } => Box::new(SubprocessEmbedder::new(id, command.clone())),
            EmbedderSpec::Http { id, url } => Box::new(HttpEmbedder::new(id, url)),
        }
    }
}

/// Embeds documents in batches, keeping document order.
pub fn embed_documents(docs: &[Document], embedder: &dyn Embedder, batch: usize) -> Result<Vec<EmbeddingVector<f64>>> {
    let mut out = Vec::with_capacity(docs.len());
    for chunk in docs.chunks(batch.max(1)) {
        let texts: Vec<String> = chunk.iter().map(|d| d.text.clone()).collect();
        let vecs = embedder.embed(&texts)?;
        if vecs.len() != chunk.len() {
            return Err(Error::Embedder {
                embedder: embedder.id().to_owned(),
                message: format!("expected {} vectors, got {}", chunk.len(), vecs.len()),
            });
        }
        for (d, v) in chunk.iter().zip(vecs) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(d.id.clone()));
            }
            out.push(EmbeddingVector {
                doc_id: d.id.clone(),
                vector: v,
                embedder_id: embedder.id().to_owned(),
            });
        }
    }
    Ok(out)
}
