//! Rendering templates and expanding the probe sets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bank::Banks;
use super::types::*;
use crate::error::{Error, Result};
use crate::morphology::{inflect, GermanStrategy};

/// Antecedent slot filler with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Antecedent {
    pub lexeme_id: String,
    pub level: AntecedentLevel,
    pub surface: String,
}

/// Stable content hash joining scores, generations and annotations.
pub fn instance_id(template_id: &str, antecedent_surface: &str, coreferent_surface: Option<&str>) -> String {
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0x1f]);
    h.update(antecedent_surface.as_bytes());
    h.update([0x1f]);
    h.update(coreferent_surface.unwrap_or("").as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Renders one stimulus. Without a coreferent this is a generation prompt
/// whose context ends at the coreferent slot.
pub fn render(
    condition: Condition,
    template: &Template,
    antecedent: &Antecedent,
    coreferent: Option<(&str, Gender)>,
) -> Result<ProbeInstance> {
    if antecedent.surface.trim().is_empty() {
        return Err(Error::Render(format!(
            "template {}: empty antecedent surface",
            template.id
        )));
    }
    let phrase1 = format!(
        "{}{}{}",
        template.phrase1_before, antecedent.surface, template.phrase1_after
    );
    let context_text = format!("{} {}", phrase1.trim_end(), template.phrase2_before.trim_end());

    let full_text = match coreferent {
        None => None,
        Some((surface, _)) => {
            let after = fill_agreement(template, surface)?;
            Some(format!("{context_text} {surface}{after}").trim_end().to_string())
        }
    };

    Ok(ProbeInstance {
        instance_id: instance_id(&template.id, &antecedent.surface, coreferent.map(|c| c.0)),
        condition,
        template_id: template.id.clone(),
        lexeme_id: antecedent.lexeme_id.clone(),
        antecedent_gender: antecedent.level,
        antecedent_surface: antecedent.surface.clone(),
        coreferent_gender: coreferent.map(|c| c.1),
        coreferent_surface: coreferent.map(|c| c.0.to_string()),
        context_text,
        full_text,
    })
}

fn fill_agreement(template: &Template, coreferent: &str) -> Result<String> {
    let needs_map = template.language == Language::EN && template.number == Number::SG;
    let has_slot = template.phrase2_after.contains(VERB_SLOT);
    if !needs_map && !has_slot {
        return Ok(template.phrase2_after.clone());
    }
    let verb = template
        .agreement_slot
        .as_ref()
        .and_then(|m| m.get(coreferent))
        .ok_or_else(|| {
            Error::Render(format!(
                "template {}: no agreement entry for {coreferent:?}",
                template.id
            ))
        })?;
    Ok(template.phrase2_after.replace(VERB_SLOT, verb))
}

/// Antecedent forms of a condition in expansion order: lexeme/triplet first,
/// then gender or strategy in display order.
fn antecedents(condition: Condition, banks: &Banks) -> Result<Vec<Antecedent>> {
    let english = |triplets: &[EnglishTriplet], high_only: bool| {
        triplets
            .iter()
            .filter(|t| !high_only || t.frequency_class == FrequencyClass::High)
            .flat_map(|t| {
                Gender::ALL.into_iter().map(move |g| Antecedent {
                    lexeme_id: t.id.clone(),
                    level: AntecedentLevel::Gender(g),
                    surface: t.form(g).to_string(),
                })
            })
            .collect::<Vec<_>>()
    };
    Ok(match condition {
        Condition::EnPl => english(&banks.triplets_pl, false),
        Condition::EnSg => english(&banks.triplets_sg, false),
        Condition::EnGen => english(&banks.triplets_pl, true),
        Condition::DePl | Condition::DeGen => {
            let mut out = Vec::with_capacity(banks.lexemes.len() * 8);
            for lx in &banks.lexemes {
                for s in GermanStrategy::ALL {
                    out.push(Antecedent {
                        lexeme_id: lx.id.clone(),
                        level: AntecedentLevel::Strategy(s),
                        surface: inflect(lx, s)?,
                    });
                }
            }
            out
        }
    })
}

/// Full template x antecedent x coreferent cross product for a probability condition.
pub fn build_probability_set(condition: Condition, banks: &Banks) -> Result<Vec<ProbeInstance>> {
    if condition.is_generation() {
        return Err(Error::Corpus(format!("{condition} is a generation condition")));
    }
    build_probability_from(condition, banks.templates(condition), banks)
}

/// Same expansion over an explicit template subset.
pub fn build_probability_from(
    condition: Condition,
    templates: &[Template],
    banks: &Banks,
) -> Result<Vec<ProbeInstance>> {
    let ants = antecedents(condition, banks)?;
    let corefs = banks.coreferent_set(condition.language(), condition.number())?;
    let mut out = Vec::with_capacity(templates.len() * ants.len() * corefs.entries.len());
    for t in templates {
        for a in &ants {
            for (surface, g) in &corefs.entries {
                out.push(render(condition, t, a, Some((surface, *g)))?);
            }
        }
    }
    Ok(out)
}

/// Which templates feed the generation conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Number of coherent EN templates to use, in bank order; `None` uses all.
    pub en_template_count: Option<usize>,
    /// Coherent DE templates used for generation.
    pub de_template_ids: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            en_template_count: None,
            de_template_ids: vec!["de-pl-01".into(), "de-pl-02".into()],
        }
    }
}

/// Generation prompts (no coreferent) for `EnGen` or `DeGen`.
pub fn build_generation_set(
    condition: Condition,
    banks: &Banks,
    config: &GenerationConfig,
) -> Result<Vec<ProbeInstance>> {
    let coherent: Vec<&Template> = banks.templates(condition).iter().filter(|t| t.coherent).collect();
    let templates: Vec<&Template> = match condition {
        Condition::EnGen => match config.en_template_count {
            None => coherent,
            Some(n) if n <= coherent.len() => coherent[..n].to_vec(),
            Some(n) => {
                return Err(Error::Corpus(format!(
                    "configured {n} EN generation templates but only {} are coherent",
                    coherent.len()
                )))
            }
        },
        Condition::DeGen => {
            if config.de_template_ids.len() > coherent.len() {
                return Err(Error::Corpus(format!(
                    "configured {} DE generation templates but only {} are coherent",
                    config.de_template_ids.len(),
                    coherent.len()
                )));
            }
            config
                .de_template_ids
                .iter()
                .map(|id| {
                    coherent.iter().copied().find(|t| &t.id == id).ok_or_else(|| {
                        Error::Corpus(format!("DE generation template {id:?} is not a coherent template"))
                    })
                })
                .collect::<Result<_>>()?
        }
        other => return Err(Error::Corpus(format!("{other} is not a generation condition"))),
    };
    let ants = antecedents(condition, banks)?;
    let mut out = Vec::with_capacity(templates.len() * ants.len());
    for t in templates {
        for a in &ants {
            out.push(render(condition, t, a, None)?);
        }
    }
    Ok(out)
}

/// Dispatches to the probability or generation builder.
pub fn build_condition(condition: Condition, banks: &Banks, config: &GenerationConfig) -> Result<Vec<ProbeInstance>> {
    if condition.is_generation() {
        build_generation_set(condition, banks, config)
    } else {
        build_probability_set(condition, banks)
    }
}
