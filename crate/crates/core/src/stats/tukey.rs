//! Tukey HSD over all pairs of interaction cells.

use serde::{Deserialize, Serialize};

use super::anova::{FactorialSample, TwoWayDesign};
use super::dist::{studentized_range_quantile, studentized_range_upper_tail};
use super::StatsError;

pub const TUKEY_ALPHA: f64 = 0.05;

/// `mean_diff` is mean(cell_i) - mean(cell_j) in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub cell_i: String,
    pub cell_j: String,
    pub mean_diff: f64,
    pub ratio: f64,
    pub standard_error: f64,
    #[serde(with = "crate::serde_util::nonfinite")]
    pub q: f64,
    pub p_adj: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Contrast {
    /// The same comparison with the cells swapped.
    pub fn swapped(&self) -> Self {
        Self {
            cell_i: self.cell_j.clone(),
            cell_j: self.cell_i.clone(),
            mean_diff: -self.mean_diff,
            ratio: (-self.mean_diff).exp(),
            standard_error: self.standard_error,
            q: self.q,
            p_adj: self.p_adj,
            ci_low: -self.ci_high,
            ci_high: -self.ci_low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub k: usize,
    pub df_error: usize,
    pub mse: f64,
    pub n_per_cell: usize,
    pub alpha: f64,
    pub q_crit: f64,
    /// Pairs (i, j) with i before j in cell order.
    pub contrasts: Vec<Contrast>,
}

impl TukeyResult {
    /// Contrast `a - b` by cell label, in either orientation.
    pub fn contrast(&self, a: &str, b: &str) -> Option<Contrast> {
        self.contrasts.iter().find_map(|c| {
            if c.cell_i == a && c.cell_j == b {
                Some(c.clone())
            } else if c.cell_i == b && c.cell_j == a {
                Some(c.swapped())
            } else {
                None
            }
        })
    }
}

/// Tukey HSD on the `a x b` cells, labelled `"<a>:<b>"`, using the error
/// mean square of the two-way model.
pub fn tukey_hsd(design: &TwoWayDesign, samples: &[FactorialSample]) -> Result<TukeyResult, StatsError> {
    let table = design.tabulate(samples)?;
    let k = design.n_cells();
    if k < 2 {
        return Err(StatsError::Invalid(format!("need at least 2 cells, got {k}")));
    }
    let n = table.n_per_cell;
    let means: Vec<f64> = table.cells.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let ss_e: f64 = table
        .cells
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|y| (y - m).powi(2)).sum::<f64>())
        .sum();
    let df = k * (n - 1);
    let mse = ss_e / df as f64;
    let se = (mse / n as f64).sqrt();
    let q_crit = studentized_range_quantile(TUKEY_ALPHA, k as f64, df as f64)?;

    let mut contrasts = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let (q, p_adj) = if diff == 0.0 {
                (0.0, 1.0)
            } else if se == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let q = diff.abs() / se;
                (q, studentized_range_upper_tail(q, k as f64, df as f64)?)
            };
            contrasts.push(Contrast {
                cell_i: design.cell_label(i),
                cell_j: design.cell_label(j),
                mean_diff: diff,
                ratio: diff.exp(),
                standard_error: se,
                q,
                p_adj,
                ci_low: diff - q_crit * se,
                ci_high: diff + q_crit * se,
            });
        }
    }
    Ok(TukeyResult {
        k,
        df_error: df,
        mse,
        n_per_cell: n,
        alpha: TUKEY_ALPHA,
        q_crit,
        contrasts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> (TwoWayDesign, Vec<FactorialSample>) {
        let design = TwoWayDesign::new("ant", vec!["f", "m"], "coref", vec!["f", "m"]);
        let mut s = Vec::new();
        let noise = [0.2, -0.1, -0.1, 0.05, -0.05];
        for (a, b, mu) in [("f", "f", -1.0), ("f", "m", -2.0), ("m", "f", -2.2), ("m", "m", -0.9)] {
            for e in noise {
                s.push(FactorialSample::new(mu + e, a, b));
            }
        }
        (design, s)
    }

    #[test]
    fn contrasts_cover_all_pairs_and_are_antisymmetric() {
        let (d, s) = samples();
        let r = tukey_hsd(&d, &s).unwrap();
        assert_eq!(r.contrasts.len(), 6);
        for c in &r.contrasts {
            let sw = r.contrast(&c.cell_j, &c.cell_i).unwrap();
            assert_eq!(sw.mean_diff, -c.mean_diff);
            assert!((sw.ratio * c.ratio - 1.0).abs() < 1e-12);
            assert!(c.ratio > 0.0 && (0.0..=1.0).contains(&c.p_adj));
            assert!(c.ci_low < c.mean_diff && c.mean_diff < c.ci_high);
        }
        let fm = r.contrast("f:f", "f:m").unwrap();
        assert!((fm.mean_diff - 1.0).abs() < 1e-12);
        assert!(fm.p_adj < 0.001);
    }

    #[test]
    fn identical_cells_give_unit_ratio() {
        let d = TwoWayDesign::new("a", vec!["x", "y"], "b", vec!["u", "v"]);
        let s: Vec<_> = ["x", "y"]
            .iter()
            .flat_map(|a| ["u", "v"].map(|b| (*a, b)))
            .flat_map(|(a, b)| [0.1, -0.1, 0.3].map(|e| FactorialSample::new(-1.0 + e, a, b)))
            .collect();
        let r = tukey_hsd(&d, &s).unwrap();
        for c in &r.contrasts {
            assert_eq!(c.mean_diff, 0.0);
            assert_eq!(c.ratio, 1.0);
            assert_eq!(c.p_adj, 1.0);
        }
    }
}
