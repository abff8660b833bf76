//! Statistical battery: balanced two-way ANOVA with eta-squared bounds, Tukey
//! HSD on interaction cells, chi-square independence with bias-corrected
//! Cramér's V, Fleiss' kappa, majority voting, and effect-size labels.

pub mod anova;
pub mod chisq;
pub mod descriptive;
pub mod dist;
pub mod kappa;
pub mod special;
pub mod tukey;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anova::{anova_two_way, AnovaResult, CellMean, EffectRow, FactorialSample, TwoWayDesign};
pub use chisq::{chi_square_independence, cramers_v, ChiSqOptions, ChiSqResult};
pub use descriptive::{quantile_type7, BoxSummary};
pub use dist::{
    chi2_upper_tail, f_upper_tail, noncentral_f_cdf, noncentral_f_eta2_ci_lower,
    studentized_range_cdf, studentized_range_quantile, studentized_range_upper_tail,
};
pub use kappa::{fleiss_kappa, landis_koch_label, majority_vote, KappaResult};
pub use tukey::{tukey_hsd, Contrast, TukeyResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge: {detail}")]
    Convergence { what: String, detail: String },

    #[error("unbalanced design: {0}; rebalance or subset the data so every cell has the same n")]
    Unbalanced(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Effect-size labelling conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Field (2012) bands for eta-squared.
    FieldEta2,
    /// Funder & Ozer (2019) r-style bands, applied to Cramér's V.
    FunderOzerV,
}

/// Verbal band for an effect size in `[0, 1]`.
pub fn label_effect_size(value: f64, convention: Convention) -> Result<&'static str, StatsError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(StatsError::Domain(format!(
            "effect size must be in [0, 1], got {value}"
        )));
    }
    Ok(match convention {
        Convention::FieldEta2 => match value {
            v if v >= 0.14 => "large",
            v if v >= 0.06 => "medium",
            v if v >= 0.01 => "small",
            _ => "very small",
        },
        Convention::FunderOzerV => match value {
            v if v >= 0.40 => "very large",
            v if v >= 0.30 => "large",
            v if v >= 0.20 => "medium",
            v if v >= 0.10 => "small",
            v if v >= 0.05 => "very small",
            _ => "tiny",
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_labels() {
        assert_eq!(label_effect_size(0.19, Convention::FieldEta2).unwrap(), "large");
        assert_eq!(label_effect_size(0.03, Convention::FieldEta2).unwrap(), "small");
        assert_eq!(label_effect_size(0.06, Convention::FieldEta2).unwrap(), "medium");
        assert_eq!(label_effect_size(0.005, Convention::FieldEta2).unwrap(), "very small");
        assert_eq!(label_effect_size(0.28, Convention::FunderOzerV).unwrap(), "medium");
        assert_eq!(label_effect_size(0.72, Convention::FunderOzerV).unwrap(), "very large");
        assert_eq!(label_effect_size(0.96, Convention::FunderOzerV).unwrap(), "very large");
        assert_eq!(label_effect_size(0.02, Convention::FunderOzerV).unwrap(), "tiny");
        assert!(label_effect_size(1.2, Convention::FieldEta2).is_err());
        assert!(label_effect_size(-0.1, Convention::FunderOzerV).is_err());
    }
}
