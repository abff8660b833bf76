//! Balanced two-way fixed-effects ANOVA.
//!
//! Only fully balanced designs are accepted, so Type I, II and III sums of
//! squares coincide. Eta-squared is SS_effect / SS_total (not partial), and
//! its one-sided 95% lower bound comes from noncentral-F inversion with the
//! upper bound fixed at 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dist::{f_upper_tail, noncentral_f_eta2_ci_lower};
use super::{label_effect_size, Convention, StatsError};

/// Sums of squares below this fraction of SS_total are treated as rounding noise.
const SS_REL_ZERO: f64 = 1e-12;
pub const ETA2_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialSample {
    pub response: f64,
    pub factor_a: String,
    pub factor_b: String,
}

impl FactorialSample {
    pub fn new(response: f64, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            response,
            factor_a: a.into(),
            factor_b: b.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub effect: String,
    pub df1: usize,
    pub df2: usize,
    pub sum_of_squares: f64,
    pub mean_square: f64,
    #[serde(with = "crate::serde_util::nonfinite")]
    pub f: f64,
    pub p: f64,
    pub eta2: f64,
    pub eta2_ci_lower: f64,
    pub eta2_ci_upper: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub factor_a: String,
    pub factor_b: String,
    pub levels_a: Vec<String>,
    pub levels_b: Vec<String>,
    pub n_total: usize,
    pub n_per_cell: usize,
    /// Rows for A, B and A x B, in that order.
    pub effects: Vec<EffectRow>,
    pub error_df: usize,
    pub error_sum_of_squares: f64,
    pub error_mean_square: f64,
    pub total_sum_of_squares: f64,
    pub grand_mean: f64,
    pub cell_means: Vec<CellMean>,
    /// Set when every response is identical and F is undefined.
    pub degenerate: bool,
    pub eta2_definition: String,
    pub eta2_ci_method: String,
    pub ci_level: f64,
}

impl AnovaResult {
    pub fn effect(&self, i: usize) -> &EffectRow {
        &self.effects[i]
    }

    pub fn a(&self) -> &EffectRow {
        &self.effects[0]
    }

    pub fn b(&self) -> &EffectRow {
        &self.effects[1]
    }

    pub fn interaction(&self) -> &EffectRow {
        &self.effects[2]
    }
}

/// Level sets of the two factors, in reporting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoWayDesign {
    pub name_a: String,
    pub name_b: String,
    pub levels_a: Vec<String>,
    pub levels_b: Vec<String>,
}

/// Responses grouped by cell, row-major over (A, B).
#[derive(Debug, Clone)]
pub struct CellTable {
    pub n_per_cell: usize,
    pub cells: Vec<Vec<f64>>,
}

impl TwoWayDesign {
    pub fn new<S: Into<String>>(name_a: &str, levels_a: Vec<S>, name_b: &str, levels_b: Vec<S>) -> Self {
        Self {
            name_a: name_a.to_string(),
            name_b: name_b.to_string(),
            levels_a: levels_a.into_iter().map(Into::into).collect(),
            levels_b: levels_b.into_iter().map(Into::into).collect(),
        }
    }

    /// Levels in lexicographic order of the observed labels.
    pub fn from_samples(samples: &[FactorialSample]) -> Self {
        let mut a: Vec<String> = samples.iter().map(|s| s.factor_a.clone()).collect();
        let mut b: Vec<String> = samples.iter().map(|s| s.factor_b.clone()).collect();
        a.sort();
        a.dedup();
        b.sort();
        b.dedup();
        Self::new("A", a, "B", b)
    }

    pub fn n_cells(&self) -> usize {
        self.levels_a.len() * self.levels_b.len()
    }

    pub fn cell_label(&self, cell: usize) -> String {
        let nb = self.levels_b.len();
        format!("{}:{}", self.levels_a[cell / nb], self.levels_b[cell % nb])
    }

    /// Groups samples into cells and checks the design is balanced.
    pub fn tabulate(&self, samples: &[FactorialSample]) -> Result<CellTable, StatsError> {
        if self.levels_a.len() < 2 || self.levels_b.len() < 2 {
            return Err(StatsError::Invalid(format!(
                "need at least 2 levels per factor, got {}x{}",
                self.levels_a.len(),
                self.levels_b.len()
            )));
        }
        let ia: HashMap<&str, usize> = self.levels_a.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let ib: HashMap<&str, usize> = self.levels_b.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let nb = self.levels_b.len();
        let mut cells = vec![Vec::new(); self.n_cells()];
        for s in samples {
            if !s.response.is_finite() {
                return Err(StatsError::Invalid(format!("non-finite response {}", s.response)));
            }
            let a = ia.get(s.factor_a.as_str()).ok_or_else(|| {
                StatsError::Invalid(format!("level {:?} not declared for {}", s.factor_a, self.name_a))
            })?;
            let b = ib.get(s.factor_b.as_str()).ok_or_else(|| {
                StatsError::Invalid(format!("level {:?} not declared for {}", s.factor_b, self.name_b))
            })?;
            cells[a * nb + b].push(s.response);
        }
        let n = cells[0].len();
        if let Some((i, c)) = cells.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(StatsError::Unbalanced(format!(
                "cell {} has {} observations, cell {} has {}",
                self.cell_label(0),
                n,
                self.cell_label(i),
                c.len()
            )));
        }
        if n < 2 {
            return Err(StatsError::Invalid(format!(
                "need n >= 2 per cell, got {n}"
            )));
        }
        Ok(CellTable { n_per_cell: n, cells })
    }

    pub fn anova(&self, samples: &[FactorialSample]) -> Result<AnovaResult, StatsError> {
        let table = self.tabulate(samples)?;
        let (a, b, n) = (self.levels_a.len(), self.levels_b.len(), table.n_per_cell);
        let n_total = a * b * n;

        // shift by one observation so identical data give exact zeros
        let shift = table.cells[0][0];
        let cell_means: Vec<f64> = table
            .cells
            .iter()
            .map(|c| c.iter().map(|y| y - shift).sum::<f64>() / n as f64)
            .collect();
        let grand = cell_means.iter().sum::<f64>() / (a * b) as f64;
        let row_means: Vec<f64> = (0..a)
            .map(|i| (0..b).map(|j| cell_means[i * b + j]).sum::<f64>() / b as f64)
            .collect();
        let col_means: Vec<f64> = (0..b)
            .map(|j| (0..a).map(|i| cell_means[i * b + j]).sum::<f64>() / a as f64)
            .collect();

        let ss_a = (b * n) as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
        let ss_b = (a * n) as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
        let mut ss_ab = 0.0;
        for i in 0..a {
            for j in 0..b {
                let r = cell_means[i * b + j] - row_means[i] - col_means[j] + grand;
                ss_ab += r * r;
            }
        }
        ss_ab *= n as f64;
        let mut ss_e = 0.0;
        let mut ss_t = 0.0;
        for (c, m) in table.cells.iter().zip(&cell_means) {
            for y in c {
                let y = y - shift;
                ss_e += (y - m).powi(2);
                ss_t += (y - grand).powi(2);
            }
        }

        let degenerate = table.cells.iter().flatten().all(|y| *y == shift);
        let snap = |ss: f64| if ss <= SS_REL_ZERO * ss_t { 0.0 } else { ss };
        let (ss_a, ss_b, ss_ab, ss_e) = if degenerate {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (snap(ss_a), snap(ss_b), snap(ss_ab), snap(ss_e))
        };
        let ss_t = if degenerate { 0.0 } else { ss_t };

        let df_e = n_total - a * b;
        let ms_e = ss_e / df_e as f64;
        let rows = [
            (self.name_a.clone(), a - 1, ss_a),
            (self.name_b.clone(), b - 1, ss_b),
            (format!("{}:{}", self.name_a, self.name_b), (a - 1) * (b - 1), ss_ab),
        ];
        let mut effects = Vec::with_capacity(3);
        for (name, df1, ss) in rows {
            let ms = ss / df1 as f64;
            let (f, p) = if ss == 0.0 {
                (0.0, 1.0)
            } else if ms_e == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = ms / ms_e;
                (f, f_upper_tail(f, df1 as f64, df_e as f64)?)
            };
            let eta2 = if ss_t > 0.0 { (ss / ss_t).clamp(0.0, 1.0) } else { 0.0 };
            let eta2_ci_lower = if f == 0.0 {
                0.0
            } else {
                noncentral_f_eta2_ci_lower(f, df1 as f64, df_e as f64, ETA2_CI_LEVEL)?
            };
            effects.push(EffectRow {
                effect: name,
                df1,
                df2: df_e,
                sum_of_squares: ss,
                mean_square: ms,
                f,
                p,
                eta2,
                eta2_ci_lower,
                eta2_ci_upper: 1.0,
                label: label_effect_size(eta2, Convention::FieldEta2)?.to_string(),
            });
        }

        let cell_means_out = (0..a * b)
            .map(|c| CellMean {
                a: self.levels_a[c / b].clone(),
                b: self.levels_b[c % b].clone(),
                n,
                mean: cell_means[c] + shift,
            })
            .collect();

        Ok(AnovaResult {
            factor_a: self.name_a.clone(),
            factor_b: self.name_b.clone(),
            levels_a: self.levels_a.clone(),
            levels_b: self.levels_b.clone(),
            n_total,
            n_per_cell: n,
            effects,
            error_df: df_e,
            error_sum_of_squares: ss_e,
            error_mean_square: ms_e,
            total_sum_of_squares: ss_t,
            grand_mean: grand + shift,
            cell_means: cell_means_out,
            degenerate,
            eta2_definition: "eta2 = SS_effect / SS_total (not partial)".into(),
            eta2_ci_method: "noncentral F inversion, one-sided, upper bound 1.0".into(),
            ci_level: ETA2_CI_LEVEL,
        })
    }
}

/// Two-way ANOVA with levels taken from the samples in lexicographic order.
pub fn anova_two_way(samples: &[FactorialSample]) -> Result<AnovaResult, StatsError> {
    TwoWayDesign::from_samples(samples).anova(samples)
}
