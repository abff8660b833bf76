//! German gender-strategy surface forms.
//!
//! Every form is derived from the stored masculine/feminine plural pair, never
//! from a stem, because stem changes such as `Beamte` -> `Beamtinnen` are
//! irregular. All string handling works on code points; umlauts stay composed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feminine plural suffix that all non-masculine forms are built around.
pub const FEM_SUFFIX: &str = "innen";

/// A German role noun as a masculine/feminine plural pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GermanLexeme {
    pub id: String,
    pub masc_pl: String,
    pub fem_pl: String,
    pub gloss_en: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_version: Option<String>,
}

impl GermanLexeme {
    pub fn new(id: &str, masc_pl: &str, fem_pl: &str, gloss_en: &str) -> Self {
        Self {
            id: id.to_string(),
            masc_pl: masc_pl.to_string(),
            fem_pl: fem_pl.to_string(),
            gloss_en: gloss_en.to_string(),
            source_version: None,
        }
    }

    /// Byte offset of the final `innen` in `fem_pl`, i.e. where the stem ends.
    fn suffix_start(&self) -> Result<usize> {
        if self.masc_pl.trim().is_empty() {
            return Err(Error::Morphology(format!(
                "lexeme {}: masc_pl is empty",
                self.id
            )));
        }
        if !self.fem_pl.ends_with(FEM_SUFFIX) || self.fem_pl.len() == FEM_SUFFIX.len() {
            return Err(Error::Morphology(format!(
                "lexeme {}: fem_pl {:?} does not end with a stem + \"{FEM_SUFFIX}\"",
                self.id, self.fem_pl
            )));
        }
        Ok(self.fem_pl.len() - FEM_SUFFIX.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.suffix_start().map(|_| ())
    }
}

/// Numbered German strategies for referring to mixed or unknown-gender groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GermanStrategy {
    Masculine,
    Feminine,
    CoordMascFirst,
    CoordFemFirst,
    CapitalI,
    Colon,
    Asterisk,
    Underscore,
}

impl GermanStrategy {
    /// All strategies in display order (1..=8).
    pub const ALL: [GermanStrategy; 8] = [
        GermanStrategy::Masculine,
        GermanStrategy::Feminine,
        GermanStrategy::CoordMascFirst,
        GermanStrategy::CoordFemFirst,
        GermanStrategy::CapitalI,
        GermanStrategy::Colon,
        GermanStrategy::Asterisk,
        GermanStrategy::Underscore,
    ];

    /// 1-based display number.
    pub fn number(self) -> u8 {
        GermanStrategy::ALL
            .iter()
            .position(|s| *s == self)
            .map(|p| p as u8 + 1)
            .unwrap_or(0)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GermanStrategy::Masculine => "masculine",
            GermanStrategy::Feminine => "feminine",
            GermanStrategy::CoordMascFirst => "coord_masc_first",
            GermanStrategy::CoordFemFirst => "coord_fem_first",
            GermanStrategy::CapitalI => "capital_i",
            GermanStrategy::Colon => "colon",
            GermanStrategy::Asterisk => "asterisk",
            GermanStrategy::Underscore => "underscore",
        }
    }

    /// Character inserted before the suffix, for the three typographic strategies.
    fn gap_char(self) -> Option<char> {
        match self {
            GermanStrategy::Colon => Some(':'),
            GermanStrategy::Asterisk => Some('*'),
            GermanStrategy::Underscore => Some('_'),
            _ => None,
        }
    }
}

impl fmt::Display for GermanStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GermanStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GermanStrategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Morphology(format!("unknown strategy {s:?}")))
    }
}

/// Surface form of `lexeme` under `strategy`.
pub fn inflect(lexeme: &GermanLexeme, strategy: GermanStrategy) -> Result<String> {
    let cut = lexeme.suffix_start()?;
    let stem = &lexeme.fem_pl[..cut];
    let form = match strategy {
        GermanStrategy::Masculine => lexeme.masc_pl.clone(),
        GermanStrategy::Feminine => lexeme.fem_pl.clone(),
        GermanStrategy::CoordMascFirst => format!("{} und {}", lexeme.masc_pl, lexeme.fem_pl),
        GermanStrategy::CoordFemFirst => format!("{} und {}", lexeme.fem_pl, lexeme.masc_pl),
        GermanStrategy::CapitalI => format!("{stem}Innen"),
        GermanStrategy::Colon | GermanStrategy::Asterisk | GermanStrategy::Underscore => {
            // gap_char is Some for exactly these three
            let gap = strategy.gap_char().unwrap_or('*');
            format!("{stem}{gap}{FEM_SUFFIX}")
        }
    };
    Ok(form)
}

/// All eight forms of a lexeme in display order.
pub fn inflect_all(lexeme: &GermanLexeme) -> Result<Vec<(GermanStrategy, String)>> {
    GermanStrategy::ALL
        .into_iter()
        .map(|s| inflect(lexeme, s).map(|f| (s, f)))
        .collect()
}
