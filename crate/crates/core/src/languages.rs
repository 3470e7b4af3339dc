//! The supported language set and its per-language reference metadata.

use serde::Serialize;

use crate::corpus::{CorpusInventory, PoolKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanguageInfo {
    pub code: &'static str,
    pub name: &'static str,
    pub family: &'static str,
    pub script: &'static str,
    /// FineWeb2 documents, millions.
    pub fineweb2_docs_m: f64,
    /// Llama-3.2 tokenizer tokens, billions.
    pub tokens_b: f64,
    /// Benchmarks with an evaluation set for this language.
    pub has_arc: bool,
}

/// The thirteen non-English languages, largest corpus first.
pub const MULTILINGUAL: [LanguageInfo; 13] = [
    lang("ru", "Russian", "Slavic", "Cyrillic", 699.1, 1004.6, true),
    lang("zh", "Chinese", "Sino-Tibetan", "Hanzi", 636.1, 743.4, true),
    lang("de", "German", "Germanic", "Latin", 496.0, 407.0, true),
    lang("es", "Spanish", "Romance", "Latin", 441.3, 352.3, true),
    lang("ja", "Japanese", "Japonic", "Kanji + Kana", 400.1, 404.4, false),
    lang("fr", "French", "Romance", "Latin", 360.1, 306.4, true),
    lang("pt", "Portuguese", "Romance", "Latin", 199.7, 160.1, true),
    lang("id", "Indonesian", "Austronesian", "Latin", 100.2, 101.8, true),
    lang("ar", "Arabic", "Semitic", "Arabic", 62.0, 63.5, true),
    lang("vi", "Vietnamese", "Austroasiatic", "Latin", 61.1, 47.8, true),
    lang("ko", "Korean", "Koreanic", "Hangul", 60.9, 59.5, true),
    lang("hi", "Hindi", "Indo-Aryan", "Devanagari", 22.1, 25.1, true),
    lang("bn", "Bengali", "Indo-Aryan", "Bengali", 15.2, 38.7, true),
];

pub const ENGLISH: &str = "en";

const fn lang(
    code: &'static str,
    name: &'static str,
    family: &'static str,
    script: &'static str,
    fineweb2_docs_m: f64,
    tokens_b: f64,
    has_arc: bool,
) -> LanguageInfo {
    LanguageInfo {
        code,
        name,
        family,
        script,
        fineweb2_docs_m,
        tokens_b,
        has_arc,
    }
}

/// All fourteen supported codes (the thirteen plus English), sorted.
pub fn supported_codes() -> Vec<&'static str> {
    let mut v: Vec<_> = MULTILINGUAL.iter().map(|l| l.code).collect();
    v.push(ENGLISH);
    v.sort_unstable();
    v
}

pub fn multilingual_codes() -> Vec<&'static str> {
    MULTILINGUAL.iter().map(|l| l.code).collect()
}

pub fn is_supported(code: &str) -> bool {
    code == ENGLISH || MULTILINGUAL.iter().any(|l| l.code == code)
}

pub fn info(code: &str) -> Option<&'static LanguageInfo> {
    MULTILINGUAL.iter().find(|l| l.code == code)
}

pub fn code_for_name(name: &str) -> Option<&'static str> {
    if name.eq_ignore_ascii_case("english") {
        return Some(ENGLISH);
    }
    MULTILINGUAL
        .iter()
        .find(|l| l.name.eq_ignore_ascii_case(name))
        .map(|l| l.code)
}

/// Availability inventory built from the per-language corpus sizes, under
/// the `fineweb2` source, plus an English `dclm` pool of `english_tokens`.
pub fn reference_inventory(english_tokens: u64) -> CorpusInventory {
    let mut inv = CorpusInventory::new("llama-3.2");
    for l in &MULTILINGUAL {
        inv.add(
            PoolKey::new("fineweb2", l.code),
            (l.fineweb2_docs_m * 1e6).round() as u64,
            (l.tokens_b * 1e9).round() as u64,
        );
    }
    inv.add(PoolKey::new("dclm", ENGLISH), 0, english_tokens);
    inv
}
