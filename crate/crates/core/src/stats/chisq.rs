//! Pearson chi-square test of independence with bias-corrected Cramér's V.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::descriptive::quantile_type7;
use super::dist::chi2_upper_tail;
use super::{label_effect_size, Convention, StatsError};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSqOptions {
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for ChiSqOptions {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 2000,
            seed: 0,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSqResult {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub observed: Vec<Vec<u64>>,
    pub expected: Vec<Vec<f64>>,
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub n: u64,
    pub cramers_v: f64,
    pub cramers_v_adjusted: f64,
    pub v_ci_lower: f64,
    pub v_ci_upper: f64,
    pub ci_method: String,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub label: String,
    pub dropped_rows: Vec<String>,
    pub dropped_cols: Vec<String>,
    pub warnings: Vec<String>,
}

struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn nonzero_margins(counts: &[Vec<u64>]) -> Reduced {
    let nc = counts.first().map_or(0, Vec::len);
    let rows = (0..counts.len()).filter(|&i| counts[i].iter().any(|&c| c > 0)).collect();
    let cols = (0..nc).filter(|&j| counts.iter().any(|r| r[j] > 0)).collect();
    Reduced { rows, cols }
}

/// Pearson statistic on a table with no zero margins.
fn pearson(t: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>, f64) {
    let n: f64 = t.iter().flatten().sum();
    let rs: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let cs: Vec<f64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    let mut expected = vec![vec![0.0; cs.len()]; rs.len()];
    for (i, r) in t.iter().enumerate() {
        for (j, o) in r.iter().enumerate() {
            let e = rs[i] * cs[j] / n;
            expected[i][j] = e;
            chi2 += (o - e).powi(2) / e;
        }
    }
    (chi2, expected, n)
}

/// Unadjusted and bias-corrected Cramér's V for an r x c table.
pub fn cramers_v(chi2: f64, n: f64, r: usize, c: usize) -> (f64, f64) {
    let (rf, cf) = (r as f64, c as f64);
    let phi2 = chi2 / n;
    let v = (phi2 / (rf.min(cf) - 1.0)).sqrt().min(1.0);
    let phi2_adj = (phi2 - (rf - 1.0) * (cf - 1.0) / (n - 1.0)).max(0.0);
    let r_adj = rf - (rf - 1.0).powi(2) / (n - 1.0);
    let c_adj = cf - (cf - 1.0).powi(2) / (n - 1.0);
    let denom = (r_adj - 1.0).min(c_adj - 1.0);
    let v_adj = if denom > 0.0 { (phi2_adj / denom).sqrt().min(1.0) } else { 0.0 };
    (v, v_adj)
}

/// Adjusted V of a raw table after dropping empty margins; 0 if under 2x2.
fn v_adj_of(counts: &[Vec<u64>]) -> f64 {
    let red = nonzero_margins(counts);
    if red.rows.len() < 2 || red.cols.len() < 2 {
        return 0.0;
    }
    let t: Vec<Vec<f64>> = red
        .rows
        .iter()
        .map(|&i| red.cols.iter().map(|&j| counts[i][j] as f64).collect())
        .collect();
    let (chi2, _, n) = pearson(&t);
    cramers_v(chi2, n, red.rows.len(), red.cols.len()).1
}

/// Percentile bootstrap of adjusted V by multinomial resampling of the cells.
fn bootstrap_v(counts: &[Vec<u64>], opts: &ChiSqOptions) -> f64 {
    let (nr, nc) = (counts.len(), counts[0].len());
    let flat: Vec<u64> = counts.iter().flatten().copied().collect();
    let n: u64 = flat.iter().sum();
    let mut cum = Vec::with_capacity(flat.len());
    let mut acc = 0u64;
    for c in &flat {
        acc += c;
        cum.push(acc);
    }
    let mut vs: Vec<f64> = (0..opts.bootstrap_resamples)
        .map(|b| {
            let mut rng = rng_for(opts.seed, "chisq-bootstrap", b as u64);
            let mut cell = vec![0u64; flat.len()];
            for _ in 0..n {
                let u = rng.random_range(0..n);
                cell[cum.partition_point(|&x| x <= u)] += 1;
            }
            let t: Vec<Vec<u64>> = cell.chunks(nc).map(<[u64]>::to_vec).collect();
            debug_assert_eq!(t.len(), nr);
            v_adj_of(&t)
        })
        .collect();
    vs.sort_by(f64::total_cmp);
    quantile_type7(&vs, 1.0 - opts.ci_level)
}

/// Chi-square test on `counts` (rows x cols). Rows or columns with a zero
/// marginal are dropped with a warning.
pub fn chi_square_independence(
    row_labels: &[String],
    col_labels: &[String],
    counts: &[Vec<u64>],
    opts: &ChiSqOptions,
) -> Result<ChiSqResult, StatsError> {
    if counts.len() != row_labels.len() || counts.iter().any(|r| r.len() != col_labels.len()) {
        return Err(StatsError::Invalid(format!(
            "table shape does not match {} row and {} column labels",
            row_labels.len(),
            col_labels.len()
        )));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(StatsError::Domain(format!("ci_level must be in (0,1), got {}", opts.ci_level)));
    }
    let red = nonzero_margins(counts);
    let mut warnings = Vec::new();
    let dropped_rows: Vec<String> = (0..counts.len())
        .filter(|i| !red.rows.contains(i))
        .map(|i| row_labels[i].clone())
        .collect();
    let dropped_cols: Vec<String> = (0..col_labels.len())
        .filter(|j| !red.cols.contains(j))
        .map(|j| col_labels[j].clone())
        .collect();
    for r in &dropped_rows {
        warnings.push(format!("dropped row {r:?} with zero marginal"));
    }
    for c in &dropped_cols {
        warnings.push(format!("dropped column {c:?} with zero marginal"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if red.rows.len() < 2 || red.cols.len() < 2 {
        return Err(StatsError::Invalid(format!(
            "table is {}x{} after dropping empty margins; need at least 2x2",
            red.rows.len(),
            red.cols.len()
        )));
    }
    let observed: Vec<Vec<u64>> = red
        .rows
        .iter()
        .map(|&i| red.cols.iter().map(|&j| counts[i][j]).collect())
        .collect();
    let t: Vec<Vec<f64>> = observed.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
    let (chi2, expected, n) = pearson(&t);
    let (r, c) = (observed.len(), observed[0].len());
    let df = (r - 1) * (c - 1);
    let p = chi2_upper_tail(chi2, df as f64)?;
    let (v, v_adj) = cramers_v(chi2, n, r, c);
    let v_ci_lower = if opts.bootstrap_resamples == 0 {
        0.0
    } else {
        bootstrap_v(&observed, opts).min(v_adj)
    };
    Ok(ChiSqResult {
        row_labels: red.rows.iter().map(|&i| row_labels[i].clone()).collect(),
        col_labels: red.cols.iter().map(|&j| col_labels[j].clone()).collect(),
        observed,
        expected,
        chi2,
        df,
        p,
        n: n as u64,
        cramers_v: v,
        cramers_v_adjusted: v_adj,
        v_ci_lower,
        v_ci_upper: 1.0,
        ci_method: format!(
            "percentile bootstrap, {} multinomial resamples, one-sided {}",
            opts.bootstrap_resamples, opts.ci_level
        ),
        bootstrap_resamples: opts.bootstrap_resamples,
        seed: opts.seed,
        label: label_effect_size(v_adj, Convention::FunderOzerV)?.to_string(),
        dropped_rows,
        dropped_cols,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(p: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{p}{i}")).collect()
    }

    fn run(t: Vec<Vec<u64>>, resamples: usize) -> ChiSqResult {
        let opts = ChiSqOptions { bootstrap_resamples: resamples, ..Default::default() };
        chi_square_independence(&labels("r", t.len()), &labels("c", t[0].len()), &t, &opts).unwrap()
    }

    #[test]
    fn two_by_two_hand_computed() {
        // expected 15 everywhere; chi2 = 4 * 25 / 15
        let r = run(vec![vec![10, 20], vec![20, 10]], 0);
        assert!((r.chi2 - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        assert!((r.p - 0.009823).abs() < 1e-5);
    }

    #[test]
    fn proportional_rows_are_independent() {
        let r = run(vec![vec![2, 4, 6], vec![4, 8, 12]], 50);
        assert!(r.chi2.abs() < 1e-12);
        assert_eq!(r.cramers_v_adjusted, 0.0);
        assert_eq!(r.label, "tiny");
    }

    #[test]
    fn zero_margins_dropped() {
        let r = run(vec![vec![10, 0, 20], vec![0, 0, 0], vec![20, 0, 10]], 0);
        assert_eq!(r.dropped_rows, vec!["r1"]);
        assert_eq!(r.dropped_cols, vec!["c1"]);
        assert_eq!(r.df, 1);
        assert!((r.chi2 - 20.0 / 3.0).abs() < 1e-12);
        let e = chi_square_independence(
            &labels("r", 2),
            &labels("c", 2),
            &[vec![3, 0], vec![5, 0]],
            &ChiSqOptions::default(),
        );
        assert!(e.is_err());
    }

    #[test]
    fn bootstrap_is_seeded_and_below_estimate() {
        let t = vec![vec![40, 5, 3], vec![4, 35, 6], vec![2, 8, 30]];
        let a = run(t.clone(), 300);
        let b = run(t, 300);
        assert_eq!(a.v_ci_lower, b.v_ci_lower);
        assert!(a.v_ci_lower <= a.cramers_v_adjusted && a.v_ci_lower > 0.3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn adjusted_below_raw_and_permutation_invariant(cells in prop::collection::vec(1u64..60, 12), rot in 0usize..4) {
            let t: Vec<Vec<u64>> = cells.chunks(4).map(<[u64]>::to_vec).collect();
            let base = run(t.clone(), 0);
            prop_assert!(base.cramers_v_adjusted <= base.cramers_v + 1e-15);
            prop_assert!((0.0..=1.0).contains(&base.cramers_v_adjusted));
            let mut p = t.clone();
            p.rotate_left(rot % 3);
            for r in p.iter_mut() { r.rotate_right(rot); }
            let perm = run(p, 0);
            prop_assert!((perm.chi2 - base.chi2).abs() < 1e-9 * base.chi2.max(1.0));
            prop_assert!((perm.cramers_v_adjusted - base.cramers_v_adjusted).abs() < 1e-12);
        }
    }
}
