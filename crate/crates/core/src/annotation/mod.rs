//! Annotation of generated continuations: task store, HTTP API, and
//! majority-vote aggregation with Fleiss' kappa.

mod server;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::stats::{fleiss_kappa, majority_vote, KappaResult};

pub use server::{router, serve};
pub use store::{AnnotationStore, ImportSummary, LabelSubmission, Progress, TaskView};

pub const GUIDELINES: &str = include_str!("../../data/guidelines.md");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderLabel {
    Masc,
    Fem,
    Neut,
    /// Coordinated masculine and feminine forms; German only.
    MascFem,
    NoneMentioned,
}

impl GenderLabel {
    pub const ALL: [GenderLabel; 5] = [
        GenderLabel::Masc,
        GenderLabel::Fem,
        GenderLabel::Neut,
        GenderLabel::MascFem,
        GenderLabel::NoneMentioned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GenderLabel::Masc => "masc",
            GenderLabel::Fem => "fem",
            GenderLabel::Neut => "neut",
            GenderLabel::MascFem => "masc_fem",
            GenderLabel::NoneMentioned => "none_mentioned",
        }
    }

    pub fn allowed(language: Language) -> Vec<GenderLabel> {
        GenderLabel::ALL
            .into_iter()
            .filter(|g| *g != GenderLabel::MascFem || language == Language::DE)
            .collect()
    }

    /// Whether the label names a gender usable in contingency tables.
    pub fn is_gendered(self) -> bool {
        self != GenderLabel::NoneMentioned
    }
}

impl fmt::Display for GenderLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenderLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GenderLabel::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown gender label {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorefLabel {
    Yes,
    No,
    Unclear,
}

impl CorefLabel {
    pub const ALL: [CorefLabel; 3] = [CorefLabel::Yes, CorefLabel::No, CorefLabel::Unclear];

    pub fn as_str(self) -> &'static str {
        match self {
            CorefLabel::Yes => "yes",
            CorefLabel::No => "no",
            CorefLabel::Unclear => "unclear",
        }
    }
}

impl fmt::Display for CorefLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorefLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CorefLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown coreference label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub instance_id: String,
    pub prompt_text: String,
    pub continuation_text: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLabel {
    pub instance_id: String,
    pub annotator_id: String,
    pub gender: GenderLabel,
    pub coreference: CorefLabel,
    pub submitted_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub instance_id: String,
    /// `None` when no label holds a strict majority.
    pub gender_final: Option<GenderLabel>,
    pub coreference_final: Option<CorefLabel>,
    pub n_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub labels: Vec<AggregatedLabel>,
    pub annotators: Vec<String>,
    pub n_items: usize,
    pub gender_nulls: usize,
    pub coreference_nulls: usize,
    /// Over items rated by every annotator; absent with fewer than 2 annotators.
    pub gender_kappa: Option<KappaResult>,
    pub coreference_kappa: Option<KappaResult>,
    pub partial: bool,
    pub missing: Vec<MissingLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MissingLabel {
    pub annotator_id: String,
    pub instance_id: String,
}

/// Majority vote per item and dimension, plus Fleiss' kappa per dimension.
///
/// `labels` holds each annotator's current label; without `partial` every
/// (annotator, item) pair must be present.
pub fn aggregate_labels(
    instance_ids: &[String],
    annotators: &[String],
    labels: &[AnnotationLabel],
    partial: bool,
) -> Result<Aggregation> {
    let mut by_item: BTreeMap<&str, BTreeMap<&str, &AnnotationLabel>> = BTreeMap::new();
    let known_items: BTreeSet<&str> = instance_ids.iter().map(String::as_str).collect();
    let known_annotators: BTreeSet<&str> = annotators.iter().map(String::as_str).collect();
    for l in labels {
        if !known_items.contains(l.instance_id.as_str()) {
            return Err(Error::Annotation(format!("label for unknown item {}", l.instance_id)));
        }
        if !known_annotators.contains(l.annotator_id.as_str()) {
            return Err(Error::UnknownAnnotator(l.annotator_id.clone()));
        }
        by_item
            .entry(l.instance_id.as_str())
            .or_default()
            .insert(l.annotator_id.as_str(), l);
    }

    let mut missing = Vec::new();
    for id in instance_ids {
        let got = by_item.get(id.as_str());
        for a in annotators {
            if got.is_none_or(|m| !m.contains_key(a.as_str())) {
                missing.push(MissingLabel {
                    annotator_id: a.clone(),
                    instance_id: id.clone(),
                });
            }
        }
    }
    missing.sort();
    if !missing.is_empty() && !partial {
        let shown: Vec<String> = missing
            .iter()
            .take(20)
            .map(|m| format!("({}, {})", m.annotator_id, m.instance_id))
            .collect();
        return Err(Error::Annotation(format!(
            "{} (annotator, item) label(s) missing: {}{}; pass --partial to aggregate anyway",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }

    let mut out = Vec::new();
    let mut gender_rows = Vec::new();
    let mut coref_rows = Vec::new();
    let mut ids: Vec<&String> = instance_ids.iter().collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        let Some(m) = by_item.get(id.as_str()) else { continue };
        let g: Vec<&str> = m.values().map(|l| l.gender.as_str()).collect();
        let c: Vec<&str> = m.values().map(|l| l.coreference.as_str()).collect();
        if m.len() == annotators.len() {
            gender_rows.push(g.clone());
            coref_rows.push(c.clone());
        }
        out.push(AggregatedLabel {
            instance_id: id.clone(),
            gender_final: majority_vote(&g).map(|s| s.parse().expect("known label")),
            coreference_final: majority_vote(&c).map(|s| s.parse().expect("known label")),
            n_annotators: m.len(),
        });
    }
    let kappa = |rows: &[Vec<&str>]| -> Result<Option<KappaResult>> {
        if annotators.len() < 2 || rows.is_empty() {
            Ok(None)
        } else {
            Ok(Some(fleiss_kappa(rows)?))
        }
    };
    Ok(Aggregation {
        gender_nulls: out.iter().filter(|l| l.gender_final.is_none()).count(),
        coreference_nulls: out.iter().filter(|l| l.coreference_final.is_none()).count(),
        n_items: out.len(),
        labels: out,
        annotators: annotators.to_vec(),
        gender_kappa: kappa(&gender_rows)?,
        coreference_kappa: kappa(&coref_rows)?,
        partial,
        missing,
    })
}
