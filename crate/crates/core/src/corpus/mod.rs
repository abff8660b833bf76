//! Template and lexicon banks, stimulus rendering, and deterministic expansion
//! of the probability and generation probe sets.

mod bank;
mod build;
mod types;

pub use bank::{
    load_bank, parse_bank, validate_template, Bank, BankKind, Banks, BANK_FILES, DE_LEXEMES,
    HIGH_FREQUENCY_PL_TRIPLETS, INCOHERENT_PER_BANK, PL_TRIPLETS, SG_TRIPLETS, TEMPLATES_PER_BANK,
};
pub use build::{
    build_condition, build_generation_set, build_probability_from, build_probability_set,
    instance_id, render, Antecedent, GenerationConfig,
};
pub use types::*;
