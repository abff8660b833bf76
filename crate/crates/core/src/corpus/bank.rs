//! Loading and validating the JSONL data banks.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::types::*;
use crate::error::{Error, Result};
use crate::morphology::GermanLexeme;

pub const TEMPLATES_PER_BANK: usize = 44;
pub const INCOHERENT_PER_BANK: usize = 11;
pub const PL_TRIPLETS: usize = 34;
pub const SG_TRIPLETS: usize = 37;
pub const HIGH_FREQUENCY_PL_TRIPLETS: usize = 7;
pub const DE_LEXEMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankKind {
    Templates,
    EnTriplets,
    DeLexemes,
    Coreferents,
}

#[derive(Debug, Clone)]
pub enum Bank {
    Templates(Vec<Template>),
    EnTriplets(Vec<EnglishTriplet>),
    DeLexemes(Vec<GermanLexeme>),
    Coreferents(Vec<CoreferentSet>),
}

/// Loads and validates a bank file.
pub fn load_bank(path: &Path, kind: BankKind) -> Result<Bank> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bank(&text, &path.display().to_string(), kind)
}

/// Parses and validates bank text; `source_name` appears in error messages.
pub fn parse_bank(text: &str, source_name: &str, kind: BankKind) -> Result<Bank> {
    match kind {
        BankKind::Templates => parse_templates(text, source_name).map(Bank::Templates),
        BankKind::EnTriplets => parse_triplets(text, source_name).map(Bank::EnTriplets),
        BankKind::DeLexemes => parse_lexemes(text, source_name).map(Bank::DeLexemes),
        BankKind::Coreferents => parse_coreferents(text, source_name).map(Bank::Coreferents),
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Str,
    Bool,
}

/// Checks presence and JSON type of required fields so errors can name them.
fn check_fields(v: &Value, fields: &[(&str, Kind)], src: &str, line: usize) -> Result<()> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::schema(src, line, "<record>", "expected a JSON object"))?;
    for (name, kind) in fields {
        let val = obj
            .get(*name)
            .ok_or_else(|| Error::schema(src, line, *name, "missing required field"))?;
        let ok = match kind {
            Kind::Str => val.is_string(),
            Kind::Bool => val.is_boolean(),
        };
        if !ok {
            let want = match kind {
                Kind::Str => "a string",
                Kind::Bool => "a boolean",
            };
            return Err(Error::schema(src, line, *name, format!("expected {want}")));
        }
    }
    Ok(())
}

fn parse_records<T: DeserializeOwned>(
    text: &str,
    src: &str,
    fields: &[(&str, Kind)],
) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw)
            .map_err(|e| Error::schema(src, line, "<record>", e.to_string()))?;
        check_fields(&v, fields, src, line)?;
        let rec = serde_json::from_value(v)
            .map_err(|e| Error::schema(src, line, "<record>", e.to_string()))?;
        out.push((line, rec));
    }
    Ok(out)
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = (usize, &'a str)>, src: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if id.trim().is_empty() {
            return Err(Error::schema(src, line, "id", "must be non-empty"));
        }
        if !seen.insert(id) {
            return Err(Error::schema(src, line, "id", format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

fn parse_templates(text: &str, src: &str) -> Result<Vec<Template>> {
    use Kind::*;
    let recs: Vec<(usize, Template)> = parse_records(
        text,
        src,
        &[
            ("id", Str),
            ("language", Str),
            ("number", Str),
            ("coherent", Bool),
            ("phrase1_before", Str),
            ("phrase1_after", Str),
            ("phrase2_before", Str),
            ("phrase2_after", Str),
        ],
    )?;
    if recs.len() != TEMPLATES_PER_BANK {
        return Err(Error::Cardinality {
            source_name: src.to_string(),
            what: "templates".into(),
            expected: TEMPLATES_PER_BANK.to_string(),
            found: recs.len(),
        });
    }
    check_unique_ids(recs.iter().map(|(l, t)| (*l, t.id.as_str())), src)?;
    let (lang, num) = (recs[0].1.language, recs[0].1.number);
    for (line, t) in &recs {
        if t.language != lang || t.number != num {
            return Err(Error::schema(
                src,
                *line,
                "language",
                "all templates in one bank must share language and number",
            ));
        }
        validate_template(t).map_err(|(field, msg)| Error::schema(src, *line, field, msg))?;
    }
    let incoherent = recs.iter().filter(|(_, t)| !t.coherent).count();
    if incoherent != INCOHERENT_PER_BANK {
        return Err(Error::Cardinality {
            source_name: src.to_string(),
            what: "incoherent templates".into(),
            expected: INCOHERENT_PER_BANK.to_string(),
            found: incoherent,
        });
    }
    Ok(recs.into_iter().map(|(_, t)| t).collect())
}

/// Per-template invariants; returns the offending field and a message.
pub fn validate_template(t: &Template) -> std::result::Result<(), (&'static str, String)> {
    let sentence_end = |s: &str| s.ends_with(['.', '!', '?']);
    let phrase1 = format!("{}X{}", t.phrase1_before, t.phrase1_after);
    if !sentence_end(phrase1.trim_end()) || phrase1.ends_with(char::is_whitespace) {
        return Err((
            "phrase1_after",
            "phrase 1 must end in sentence-final punctuation".into(),
        ));
    }
    if t.phrase2_before.trim().is_empty() {
        return Err(("phrase2_before", "must be non-empty".into()));
    }
    if t.phrase2_before.ends_with(char::is_whitespace) || t.phrase2_before.starts_with(char::is_whitespace) {
        return Err((
            "phrase2_before",
            "must not start or end with whitespace (it ends at the coreferent slot)".into(),
        ));
    }
    if t.phrase2_after.is_empty() || !sentence_end(t.phrase2_after.trim_end()) {
        return Err((
            "phrase2_after",
            "phrase 2 must end in sentence-final punctuation".into(),
        ));
    }
    let has_slot = t.phrase2_after.contains(VERB_SLOT);
    match (&t.agreement_slot, t.language, t.number) {
        (Some(map), Language::EN, Number::SG) => {
            for p in ["he", "she", "they"] {
                if !map.contains_key(p) {
                    return Err(("agreement_slot", format!("missing verb form for {p:?}")));
                }
            }
        }
        (None, Language::EN, Number::SG) => {
            return Err(("agreement_slot", "required for EN-SG templates".into()));
        }
        (None, _, _) if has_slot => {
            return Err(("agreement_slot", format!("{VERB_SLOT} used without a map")));
        }
        _ => {}
    }
    Ok(())
}

fn parse_triplets(text: &str, src: &str) -> Result<Vec<EnglishTriplet>> {
    use Kind::*;
    let recs: Vec<(usize, EnglishTriplet)> = parse_records(
        text,
        src,
        &[
            ("id", Str),
            ("neutral", Str),
            ("feminine", Str),
            ("masculine", Str),
            ("number", Str),
            ("frequency_class", Str),
        ],
    )?;
    let Some((_, first)) = recs.first() else {
        return Err(Error::Cardinality {
            source_name: src.to_string(),
            what: "triplets".into(),
            expected: format!("{PL_TRIPLETS} (PL) or {SG_TRIPLETS} (SG)"),
            found: 0,
        });
    };
    let number = first.number;
    check_unique_ids(recs.iter().map(|(l, t)| (*l, t.id.as_str())), src)?;
    for (line, t) in &recs {
        if t.number != number {
            return Err(Error::schema(src, *line, "number", "mixed numbers in one bank"));
        }
        let forms = [("neutral", &t.neutral), ("feminine", &t.feminine), ("masculine", &t.masculine)];
        for (field, f) in forms {
            if f.trim().is_empty() {
                return Err(Error::schema(src, *line, field, "must be non-empty"));
            }
        }
        if t.neutral == t.feminine || t.neutral == t.masculine || t.feminine == t.masculine {
            return Err(Error::schema(src, *line, "neutral", "forms must be pairwise distinct"));
        }
    }
    let expected = match number {
        Number::PL => PL_TRIPLETS,
        Number::SG => SG_TRIPLETS,
    };
    if recs.len() != expected {
        return Err(Error::Cardinality {
            source_name: src.to_string(),
            what: format!("{number:?} triplets"),
            expected: expected.to_string(),
            found: recs.len(),
        });
    }
    if number == Number::PL {
        let high = recs
            .iter()
            .filter(|(_, t)| t.frequency_class == FrequencyClass::High)
            .count();
        if high != HIGH_FREQUENCY_PL_TRIPLETS {
            return Err(Error::Cardinality {
                source_name: src.to_string(),
                what: "high-frequency PL triplets".into(),
                expected: HIGH_FREQUENCY_PL_TRIPLETS.to_string(),
                found: high,
            });
        }
    }
    Ok(recs.into_iter().map(|(_, t)| t).collect())
}

fn parse_lexemes(text: &str, src: &str) -> Result<Vec<GermanLexeme>> {
    use Kind::*;
    let recs: Vec<(usize, GermanLexeme)> = parse_records(
        text,
        src,
        &[("id", Str), ("masc_pl", Str), ("fem_pl", Str), ("gloss_en", Str)],
    )?;
    check_unique_ids(recs.iter().map(|(l, t)| (*l, t.id.as_str())), src)?;
    for (line, lx) in &recs {
        lx.validate()
            .map_err(|e| Error::schema(src, *line, "fem_pl", e.to_string()))?;
    }
    if recs.len() != DE_LEXEMES {
        return Err(Error::Cardinality {
            source_name: src.to_string(),
            what: "German lexemes".into(),
            expected: DE_LEXEMES.to_string(),
            found: recs.len(),
        });
    }
    Ok(recs.into_iter().map(|(_, t)| t).collect())
}

fn parse_coreferents(text: &str, src: &str) -> Result<Vec<CoreferentSet>> {
    use Kind::*;
    let recs: Vec<(usize, CoreferentEntry)> = parse_records(
        text,
        src,
        &[("language", Str), ("number", Str), ("surface", Str), ("gender", Str)],
    )?;
    let mut groups: BTreeMap<(Language, Number), Vec<(usize, CoreferentEntry)>> = BTreeMap::new();
    for (line, e) in recs {
        if e.surface.trim().is_empty() {
            return Err(Error::schema(src, line, "surface", "must be non-empty"));
        }
        groups.entry((e.language, e.number)).or_default().push((line, e));
    }
    let required = [
        (Language::EN, Number::PL),
        (Language::EN, Number::SG),
        (Language::DE, Number::PL),
    ];
    for key in required {
        if !groups.contains_key(&key) {
            return Err(Error::Cardinality {
                source_name: src.to_string(),
                what: format!("coreferents for {:?}-{:?}", key.0, key.1),
                expected: "3".into(),
                found: 0,
            });
        }
    }
    let mut sets = Vec::new();
    for ((language, number), entries) in groups {
        if entries.len() != 3 {
            return Err(Error::Cardinality {
                source_name: src.to_string(),
                what: format!("coreferents for {language:?}-{number:?}"),
                expected: "3".into(),
                found: entries.len(),
            });
        }
        let mut ordered = Vec::with_capacity(3);
        for g in Gender::ALL {
            let mut matching = entries.iter().filter(|(_, e)| e.gender == g);
            let (_, e) = matching.next().ok_or_else(|| {
                Error::schema(
                    src,
                    entries[0].0,
                    "gender",
                    format!("{language:?}-{number:?} has no {g} coreferent"),
                )
            })?;
            if let Some((line, _)) = matching.next() {
                return Err(Error::schema(src, *line, "gender", format!("duplicate {g} coreferent")));
            }
            ordered.push((e.surface.clone(), g));
        }
        sets.push(CoreferentSet {
            language,
            number,
            entries: ordered,
        });
    }
    Ok(sets)
}

/// All banks needed to expand every condition.
#[derive(Debug, Clone)]
pub struct Banks {
    pub templates_en_pl: Vec<Template>,
    pub templates_en_sg: Vec<Template>,
    pub templates_de_pl: Vec<Template>,
    pub triplets_pl: Vec<EnglishTriplet>,
    pub triplets_sg: Vec<EnglishTriplet>,
    pub lexemes: Vec<GermanLexeme>,
    pub coreferents: Vec<CoreferentSet>,
}

/// File names of the banks inside a data directory.
pub const BANK_FILES: [(&str, BankKind); 7] = [
    ("templates_en_pl.jsonl", BankKind::Templates),
    ("templates_en_sg.jsonl", BankKind::Templates),
    ("templates_de_pl.jsonl", BankKind::Templates),
    ("triplets_en_pl.jsonl", BankKind::EnTriplets),
    ("triplets_en_sg.jsonl", BankKind::EnTriplets),
    ("lexemes_de.jsonl", BankKind::DeLexemes),
    ("coreferents.jsonl", BankKind::Coreferents),
];

const BUNDLED: [&str; 7] = [
    include_str!("../../data/templates_en_pl.jsonl"),
    include_str!("../../data/templates_en_sg.jsonl"),
    include_str!("../../data/templates_de_pl.jsonl"),
    include_str!("../../data/triplets_en_pl.jsonl"),
    include_str!("../../data/triplets_en_sg.jsonl"),
    include_str!("../../data/lexemes_de.jsonl"),
    include_str!("../../data/coreferents.jsonl"),
];

impl Banks {
    /// The banks shipped with the crate.
    pub fn bundled() -> Result<Self> {
        let mut parsed = Vec::with_capacity(7);
        for ((name, kind), text) in BANK_FILES.iter().zip(BUNDLED) {
            parsed.push(parse_bank(text, &format!("bundled:{name}"), *kind)?);
        }
        Self::assemble(parsed)
    }

    /// Loads the seven bank files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut parsed = Vec::with_capacity(7);
        for (name, kind) in BANK_FILES {
            parsed.push(load_bank(&dir.join(name), kind)?);
        }
        Self::assemble(parsed)
    }

    fn assemble(parsed: Vec<Bank>) -> Result<Self> {
        let mut it = parsed.into_iter();
        let mut templates = |want: (Language, Number)| -> Result<Vec<Template>> {
            match it.next() {
                Some(Bank::Templates(t)) if (t[0].language, t[0].number) == want => Ok(t),
                _ => Err(Error::Corpus(format!(
                    "template bank for {:?}-{:?} missing or mislabelled",
                    want.0, want.1
                ))),
            }
        };
        let templates_en_pl = templates((Language::EN, Number::PL))?;
        let templates_en_sg = templates((Language::EN, Number::SG))?;
        let templates_de_pl = templates((Language::DE, Number::PL))?;
        let mut triplets = |want: Number| -> Result<Vec<EnglishTriplet>> {
            match it.next() {
                Some(Bank::EnTriplets(t)) if t[0].number == want => Ok(t),
                _ => Err(Error::Corpus(format!("{want:?} triplet bank missing or mislabelled"))),
            }
        };
        let triplets_pl = triplets(Number::PL)?;
        let triplets_sg = triplets(Number::SG)?;
        let lexemes = match it.next() {
            Some(Bank::DeLexemes(l)) => l,
            _ => return Err(Error::Corpus("lexeme bank missing".into())),
        };
        let coreferents = match it.next() {
            Some(Bank::Coreferents(c)) => c,
            _ => return Err(Error::Corpus("coreferent bank missing".into())),
        };
        Ok(Self {
            templates_en_pl,
            templates_en_sg,
            templates_de_pl,
            triplets_pl,
            triplets_sg,
            lexemes,
            coreferents,
        })
    }

    pub fn templates(&self, condition: Condition) -> &[Template] {
        match condition {
            Condition::EnPl | Condition::EnGen => &self.templates_en_pl,
            Condition::EnSg => &self.templates_en_sg,
            Condition::DePl | Condition::DeGen => &self.templates_de_pl,
        }
    }

    pub fn coreferent_set(&self, language: Language, number: Number) -> Result<&CoreferentSet> {
        self.coreferents
            .iter()
            .find(|s| s.language == language && s.number == number)
            .ok_or_else(|| Error::Corpus(format!("no coreferent set for {language:?}-{number:?}")))
    }
}
