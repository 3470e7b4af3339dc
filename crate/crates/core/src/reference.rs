//! Published model cards, benchmark tables and per-language token
//! estimates, shipped as JSONL fixtures.

use crate::analytics::{EvalRecord, EvalTable, ModelCard, TokenEstimate};
use crate::error::Result;

pub const MODEL_CARDS_JSONL: &str = include_str!("../fixtures/reference/model_cards.jsonl");
pub const EVALS_JSONL: &str = include_str!("../fixtures/reference/evals.jsonl");
pub const TOKEN_ESTIMATES_JSONL: &str = include_str!("../fixtures/reference/token_estimates.jsonl");

/// Models compared against the curated ones.
pub const CURATED_MODELS: [&str; 2] = ["datologyai-3b", "datologyai-8b"];

pub fn parse_jsonl<T: for<'de> serde::Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

pub fn model_cards() -> Vec<ModelCard> {
    parse_jsonl(MODEL_CARDS_JSONL).expect("bundled model cards parse")
}

pub fn eval_records() -> Vec<EvalRecord> {
    parse_jsonl(EVALS_JSONL).expect("bundled evaluations parse")
}

pub fn eval_table() -> EvalTable {
    EvalTable::from_records(&eval_records()).expect("bundled evaluations are consistent")
}

pub fn token_estimates() -> Vec<TokenEstimate> {
    parse_jsonl(TOKEN_ESTIMATES_JSONL).expect("bundled estimates parse")
}
