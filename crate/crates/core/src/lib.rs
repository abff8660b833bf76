//! Cross-sentence coreference probes for gendered and gender-inclusive
//! antecedents in English and German.
//!
//! The crate expands template banks into probe corpora, scores coreferents by
//! first-token logprob against a completion endpoint, serves generated
//! continuations for human annotation, and runs the statistical analysis.

pub mod annotation;
pub mod config;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod model_client;
pub mod morphology;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod serde_util;
pub mod stats;

pub use corpus::{
    AntecedentLevel, Banks, Condition, CoreferentSet, EnglishTriplet, Gender, Language, Number, ProbeInstance,
    Template,
};
pub use error::{Error, Result};
pub use model_client::{Backend, ClientError, GenerationRecord, MockBackend, ScoreRecord};
pub use morphology::{inflect, GermanLexeme, GermanStrategy};
