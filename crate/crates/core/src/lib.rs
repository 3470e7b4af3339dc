//! Multilingual pretraining-data curation.
//!
//! Documents move through JSONL streams ([`corpus`]) and can be labelled
//! ([`langid`]), score-filtered ([`quality`]), deduplicated or diversified
//! by embedding ([`embedding`]), augmented with translations
//! ([`translate`]) and finally mixed into a phased token budget
//! ([`mixture`]). [`similarity`] and [`analytics`] cover the measurement
//! side; [`pipeline`] strings stages together from a JSON config.
//!
//! Numeric code is generic over [`scalar::Real`]; the aliases below fix the
//! scalar used by the command-line tool.

pub mod analytics;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod external;
pub mod langid;
pub mod languages;
pub mod mixture;
pub mod pipeline;
pub mod quality;
pub mod reference;
pub mod scalar;
pub mod similarity;
pub mod translate;

pub use corpus::{CorpusInventory, Document, PoolKey, TokenizerSpec};
pub use error::{Error, Result};
pub use scalar::Real;

/// Quality classifier with single-precision weights.
pub type QualityModel = quality::QualityModel<f32>;
pub type TrainReport = quality::TrainReport<f32>;
pub type EmbeddingVector = embedding::EmbeddingVector<f64>;
pub type ParetoPoint = analytics::ParetoPoint<f64>;
pub type Correlation = similarity::Correlation<f64>;
/// Exact phase fractions.
pub type Fraction = num_rational::Ratio<i128>;
