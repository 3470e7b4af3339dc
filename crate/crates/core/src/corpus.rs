//! Canonical JSONL document streams, token counting and corpus inventories.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, RecordError, Result};

/// Language code used in inventory keys for documents without a label.
pub const UNDETERMINED_LANG: &str = "und";

/// One text record flowing through the pipeline.
///
/// Field order here is the canonical on-disk order; writing a parsed
/// canonical line reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub provenance: Vec<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            lang: None,
            source: String::new(),
            provenance: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = Some(lang.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Appends a provenance tag. Tags are never removed or reordered.
    pub fn tag(&mut self, tag: impl Into<String>) {
        self.provenance.push(tag.into());
    }

    pub fn lang_or_und(&self) -> &str {
        self.lang.as_deref().unwrap_or(UNDETERMINED_LANG)
    }

    pub fn pool_key(&self) -> PoolKey {
        PoolKey::new(&self.source, self.lang_or_und())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub format: Format,
    pub lang_default: Option<String>,
    /// Filled into documents whose `source` is missing or empty.
    pub source_default: Option<String>,
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub docs: Vec<Document>,
    pub skipped: Vec<RecordError>,
}

/// Parses one JSONL line into a document.
pub fn parse_line(line: &str) -> std::result::Result<Document, String> {
    let doc: Document = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if doc.id.is_empty() {
        return Err("field `id` is empty".into());
    }
    Ok(doc)
}

/// Streams documents from a JSONL reader, one item per non-blank line.
pub struct DocumentReader<R> {
    reader: R,
    path: String,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, path: impl Into<String>) -> Self {
        DocumentReader {
            reader,
            path: path.into(),
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl DocumentReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path.display().to_string()))
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = std::result::Result<Document, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(RecordError {
                        path: self.path.clone(),
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            }
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_line(line).map_err(|message| RecordError {
                path: self.path.clone(),
                line: self.line_no,
                message,
            }));
        }
    }
}

fn ingest_one(path: &Path, opts: &IngestOptions) -> Result<Ingested> {
    let mut out = Ingested::default();
    for item in DocumentReader::open(path)? {
        match item {
            Ok(mut doc) => {
                if doc.lang.is_none() {
                    doc.lang = opts.lang_default.clone();
                }
                if doc.source.is_empty() {
                    if let Some(src) = &opts.source_default {
                        doc.source = src.clone();
                    }
                }
                out.docs.push(doc);
            }
            Err(e) if opts.strict => return Err(e.into()),
            Err(e) => out.skipped.push(e),
        }
    }
    Ok(out)
}

/// Reads every file (one shard per file, in parallel) and concatenates the
/// results in path order. Duplicate ids anywhere in the run are an error.
pub fn ingest<P: AsRef<Path> + Sync>(paths: &[P], opts: &IngestOptions) -> Result<Ingested> {
    let shards: Vec<Result<Ingested>> = paths
        .par_iter()
        .map(|p| ingest_one(p.as_ref(), opts))
        .collect();
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for shard in shards {
        let shard = shard?;
        for doc in &shard.docs {
            if !seen.insert(doc.id.clone()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        out.docs.extend(shard.docs);
        out.skipped.extend(shard.skipped);
    }
    Ok(out)
}

/// Reads a whole JSONL file strictly.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let opts = IngestOptions {
        strict: true,
        ..Default::default()
    };
    Ok(ingest(&[path], &opts)?.docs)
}

pub fn write_documents<'a, W, I>(mut w: W, docs: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Document>,
{
    for doc in docs {
        w.write_all(doc.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_documents_to(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl_file(path, docs)
}

/// Writes any serializable records as JSONL, creating parent directories.
pub fn write_jsonl_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}

pub fn read_jsonl_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RecordError {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

// ---------------------------------------------------------------------------
// Tokenizers

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenizerSpec {
    /// Unicode whitespace split; fragments without any alphanumeric
    /// character are dropped.
    #[default]
    WhitespacePunct,
    /// UAX #29 words, with every CJK ideograph, kana and hangul syllable
    /// counted as its own token.
    UnicodeWord,
    /// Reads a precomputed count from `meta[key]`.
    ExternalCountField { key: String },
}

impl TokenizerSpec {
    pub fn id(&self) -> String {
        match self {
            TokenizerSpec::WhitespacePunct => "whitespace-punct".into(),
            TokenizerSpec::UnicodeWord => "unicode-word".into(),
            TokenizerSpec::ExternalCountField { key } => format!("external-count-field:{key}"),
        }
    }

    pub fn count_tokens(&self, doc: &Document) -> Result<u64> {
        match self {
            TokenizerSpec::WhitespacePunct => Ok(whitespace_punct_count(&doc.text)),
            TokenizerSpec::UnicodeWord => Ok(unicode_word_count(&doc.text)),
            TokenizerSpec::ExternalCountField { key } => {
                let missing = || Error::MissingCountField {
                    doc_id: doc.id.clone(),
                    key: key.clone(),
                };
                let raw = doc.meta.get(key).ok_or_else(missing)?;
                raw.trim().parse::<u64>().map_err(|_| {
                    Error::invalid(format!(
                        "document `{}`: meta `{key}` = `{raw}` is not a token count",
                        doc.id
                    ))
                })
            }
        }
    }
}

pub fn count_tokens(doc: &Document, tok: &TokenizerSpec) -> Result<u64> {
    tok.count_tokens(doc)
}

pub fn whitespace_punct_count(text: &str) -> u64 {
    text.split_whitespace()
        .filter(|frag| frag.chars().any(char::is_alphanumeric))
        .count() as u64
}

/// Scripts written without word separators, tokenized per character.
pub fn is_unspaced_script_char(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x309F     // hiragana
        | 0x30A0..=0x30FF   // katakana
        | 0x31F0..=0x31FF   // katakana phonetic extensions
        | 0xFF66..=0xFF9F   // halfwidth katakana
        | 0x3400..=0x4DBF   // CJK extension A
        | 0x4E00..=0x9FFF   // CJK unified ideographs
        | 0xF900..=0xFAFF   // CJK compatibility ideographs
        | 0x20000..=0x3134F // CJK extensions B..G
        | 0x1100..=0x11FF   // hangul jamo
        | 0xAC00..=0xD7AF   // hangul syllables
    )
}

pub fn unicode_word_count(text: &str) -> u64 {
    let mut n = 0u64;
    for word in text.unicode_words() {
        let mut in_run = false;
        for c in word.chars() {
            if is_unspaced_script_char(c) {
                n += 1;
                in_run = false;
            } else if !in_run {
                n += 1;
                in_run = true;
            }
        }
    }
    n
}

// ---------------------------------------------------------------------------
// Inventory

/// A `(source, lang)` pool, displayed and serialized as `source/lang`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PoolKey {
    pub source: String,
    pub lang: String,
}

impl PoolKey {
    pub fn new(source: impl Into<String>, lang: impl Into<String>) -> Self {
        PoolKey {
            source: source.into(),
            lang: lang.into(),
        }
    }
}

impl fmt::Display for PoolKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source, self.lang)
    }
}

impl std::str::FromStr for PoolKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (source, lang) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::invalid(format!("pool key `{s}` is not `source/lang`")))?;
        Ok(PoolKey::new(source, lang))
    }
}

impl Serialize for PoolKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PoolKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub document_count: u64,
    pub token_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusInventory {
    pub tokenizer_id: String,
    pub pools: BTreeMap<PoolKey, PoolCounts>,
}

impl CorpusInventory {
    pub fn new(tokenizer_id: impl Into<String>) -> Self {
        CorpusInventory {
            tokenizer_id: tokenizer_id.into(),
            pools: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: PoolKey, docs: u64, tokens: u64) {
        let e = self.pools.entry(key).or_default();
        e.document_count += docs;
        e.token_count += tokens;
    }

    pub fn get(&self, key: &PoolKey) -> Option<PoolCounts> {
        self.pools.get(key).copied()
    }

    /// Adds another shard's counts. Associative and commutative.
    pub fn merge(&mut self, other: &CorpusInventory) -> Result<()> {
        if self.pools.is_empty() && self.tokenizer_id.is_empty() {
            self.tokenizer_id = other.tokenizer_id.clone();
        } else if !other.pools.is_empty() && other.tokenizer_id != self.tokenizer_id {
            return Err(Error::invalid(format!(
                "cannot merge inventories counted with `{}` and `{}`",
                self.tokenizer_id, other.tokenizer_id
            )));
        }
        for (k, v) in &other.pools {
            self.add(k.clone(), v.document_count, v.token_count);
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }
}

pub fn build_inventory<'a, I>(docs: I, tok: &TokenizerSpec) -> Result<CorpusInventory>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut inv = CorpusInventory::new(tok.id());
    for doc in docs {
        let n = tok.count_tokens(doc)?;
        inv.add(doc.pool_key(), 1, n);
    }
    Ok(inv)
}

/// Counts shards in parallel and merges the partial inventories.
pub fn build_inventory_sharded(shards: &[Vec<Document>], tok: &TokenizerSpec) -> Result<CorpusInventory> {
    let parts: Vec<CorpusInventory> = shards
        .par_iter()
        .map(|s| build_inventory(s, tok))
        .collect::<Result<_>>()?;
    let mut inv = CorpusInventory::new(tok.id());
    for p in &parts {
        inv.merge(p)?;
    }
    Ok(inv)
}

/// Groups documents into `(source, lang)` pools, preserving stream order.
pub fn group_pools(docs: impl IntoIterator<Item = Document>) -> BTreeMap<PoolKey, Vec<Document>> {
    let mut pools: BTreeMap<PoolKey, Vec<Document>> = BTreeMap::new();
    for d in docs {
        pools.entry(d.pool_key()).or_default().push(d);
    }
    pools
}

pub fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
