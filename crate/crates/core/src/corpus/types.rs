use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::morphology::GermanStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    EN,
    DE,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Number {
    SG,
    PL,
}

/// Grammatical/semantic gender of an English antecedent or of any coreferent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masc,
    Fem,
    Neut,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Masc, Gender::Fem, Gender::Neut];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Masc => "masc",
            Gender::Fem => "fem",
            Gender::Neut => "neut",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Gender::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Corpus(format!("unknown gender {s:?}")))
    }
}

/// Antecedent factor level: a gender for English, a strategy for German.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AntecedentLevel {
    Gender(Gender),
    Strategy(GermanStrategy),
}

impl AntecedentLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AntecedentLevel::Gender(g) => g.as_str(),
            AntecedentLevel::Strategy(s) => s.as_str(),
        }
    }
}

impl fmt::Display for AntecedentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AntecedentLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(g) = s.parse::<Gender>() {
            return Ok(AntecedentLevel::Gender(g));
        }
        s.parse::<GermanStrategy>()
            .map(AntecedentLevel::Strategy)
            .map_err(|_| Error::Corpus(format!("unknown antecedent level {s:?}")))
    }
}

impl Serialize for AntecedentLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AntecedentLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Experimental condition; each has its own template bank and level sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    EnPl,
    EnSg,
    DePl,
    EnGen,
    DeGen,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::EnPl,
        Condition::EnSg,
        Condition::DePl,
        Condition::EnGen,
        Condition::DeGen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::EnPl => "en_pl",
            Condition::EnSg => "en_sg",
            Condition::DePl => "de_pl",
            Condition::EnGen => "en_gen",
            Condition::DeGen => "de_gen",
        }
    }

    pub fn language(self) -> Language {
        match self {
            Condition::EnPl | Condition::EnSg | Condition::EnGen => Language::EN,
            Condition::DePl | Condition::DeGen => Language::DE,
        }
    }

    pub fn number(self) -> Number {
        match self {
            Condition::EnSg => Number::SG,
            _ => Number::PL,
        }
    }

    pub fn is_generation(self) -> bool {
        matches!(self, Condition::EnGen | Condition::DeGen)
    }

    /// Continuation length used when generating for this condition.
    pub fn max_tokens(self) -> usize {
        match self.language() {
            Language::EN => 8,
            Language::DE => 10,
        }
    }

    /// Antecedent factor levels in display order.
    pub fn antecedent_levels(self) -> Vec<AntecedentLevel> {
        match self.language() {
            Language::EN => Gender::ALL.into_iter().map(AntecedentLevel::Gender).collect(),
            Language::DE => GermanStrategy::ALL
                .into_iter()
                .map(AntecedentLevel::Strategy)
                .collect(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown condition {s:?}")))
    }
}

/// Two-phrase stimulus with an antecedent slot in phrase 1 and a coreferent
/// slot at the end of `phrase2_before`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub language: Language,
    pub number: Number,
    pub coherent: bool,
    pub phrase1_before: String,
    pub phrase1_after: String,
    pub phrase2_before: String,
    pub phrase2_after: String,
    /// Verb form per pronoun, substituted for `{verb}` in `phrase2_after`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_slot: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_version: Option<String>,
}

/// Placeholder in `phrase2_after` filled from the agreement map.
pub const VERB_SLOT: &str = "{verb}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyClass {
    Standard,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnglishTriplet {
    pub id: String,
    pub neutral: String,
    pub feminine: String,
    pub masculine: String,
    pub number: Number,
    pub frequency_class: FrequencyClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_version: Option<String>,
}

impl EnglishTriplet {
    pub fn form(&self, gender: Gender) -> &str {
        match gender {
            Gender::Masc => &self.masculine,
            Gender::Fem => &self.feminine,
            Gender::Neut => &self.neutral,
        }
    }
}

/// One line of the coreferent bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreferentEntry {
    pub language: Language,
    pub number: Number,
    pub surface: String,
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_version: Option<String>,
}

/// The three coreferents of one language/number pair, ordered masc, fem, neut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreferentSet {
    pub language: Language,
    pub number: Number,
    pub entries: Vec<(String, Gender)>,
}

/// A fully rendered stimulus; the unit of scoring, generation and annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub instance_id: String,
    pub condition: Condition,
    pub template_id: String,
    pub lexeme_id: String,
    pub antecedent_gender: AntecedentLevel,
    pub antecedent_surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coreferent_gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coreferent_surface: Option<String>,
    pub context_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_text: Option<String>,
}
