//! Fleiss' kappa and majority voting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub categories: Vec<String>,
    /// Share of all ratings falling in each category, aligned with `categories`.
    pub marginals: Vec<f64>,
    pub p_bar: f64,
    pub p_e_bar: f64,
    /// Every rating fell into one category, so chance agreement is 1.
    pub degenerate: bool,
    pub label: String,
}

/// Landis & Koch (1977) band.
pub fn landis_koch_label(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "poor agreement",
        k if k <= 0.20 => "slight agreement",
        k if k <= 0.40 => "fair agreement",
        k if k <= 0.60 => "moderate agreement",
        k if k <= 0.80 => "substantial agreement",
        _ => "almost perfect agreement",
    }
}

/// Fleiss' kappa over `items`, each holding one label per rater.
pub fn fleiss_kappa<S: AsRef<str>>(items: &[Vec<S>]) -> Result<KappaResult, StatsError> {
    let Some(first) = items.first() else {
        return Err(StatsError::Invalid("no items to compute kappa over".into()));
    };
    let m = first.len();
    if m < 2 {
        return Err(StatsError::Invalid(format!("need at least 2 raters per item, got {m}")));
    }
    if let Some((i, it)) = items.iter().enumerate().find(|(_, it)| it.len() != m) {
        return Err(StatsError::Invalid(format!(
            "item {i} has {} ratings, expected {m}",
            it.len()
        )));
    }
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut p_sum = 0.0;
    for it in items {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in it {
            *counts.entry(l.as_ref()).or_default() += 1;
        }
        let agree: usize = counts.values().map(|c| c * (c - 1)).sum();
        p_sum += agree as f64 / (m * (m - 1)) as f64;
        for (k, c) in counts {
            *totals.entry(k).or_default() += c;
        }
    }
    let n = items.len();
    let all = (n * m) as f64;
    let marginals: Vec<f64> = totals.values().map(|&c| c as f64 / all).collect();
    let p_bar = p_sum / n as f64;
    let p_e_bar: f64 = marginals.iter().map(|p| p * p).sum();
    let degenerate = totals.len() == 1;
    let kappa = if degenerate { 1.0 } else { (p_bar - p_e_bar) / (1.0 - p_e_bar) };
    Ok(KappaResult {
        kappa,
        n_items: n,
        n_raters: m,
        categories: totals.keys().map(|k| k.to_string()).collect(),
        marginals,
        p_bar,
        p_e_bar,
        degenerate,
        label: landis_koch_label(kappa).to_string(),
    })
}

/// Label held by a strict majority of raters, or `None`.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|(_, c)| 2 * c > labels.len())
        .map(|(l, _)| l.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn majority() {
        assert_eq!(majority_vote(&["fem", "fem", "masc"]).as_deref(), Some("fem"));
        assert_eq!(majority_vote(&["fem", "masc", "neut"]), None);
        assert_eq!(majority_vote(&["neut", "neut", "neut"]).as_deref(), Some("neut"));
        assert_eq!(majority_vote(&["a", "b"]), None);
    }

    #[test]
    fn perfect_agreement() {
        let r = fleiss_kappa(&[vec!["a", "a", "a"], vec!["b", "b", "b"]]).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(!r.degenerate);
        let d = fleiss_kappa(&[vec!["a", "a"], vec!["a", "a"]]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.kappa, 1.0);
    }

    #[test]
    fn bands() {
        assert_eq!(landis_koch_label(0.671), "substantial agreement");
        assert_eq!(landis_koch_label(0.757), "substantial agreement");
        assert_eq!(landis_koch_label(0.5), "moderate agreement");
        assert_eq!(landis_koch_label(0.9), "almost perfect agreement");
        assert_eq!(landis_koch_label(-0.1), "poor agreement");
    }

    #[test]
    fn ragged_rejected() {
        assert!(fleiss_kappa(&[vec!["a", "a"], vec!["a"]]).is_err());
        assert!(fleiss_kappa::<&str>(&[]).is_err());
    }

    #[test]
    fn relabeling_invariant() {
        let items = vec![vec!["x", "y", "x"], vec!["y", "y", "y"], vec!["z", "x", "z"], vec!["x", "x", "y"]];
        let relabeled: Vec<Vec<&str>> = items
            .iter()
            .map(|it| it.iter().map(|l| match *l { "x" => "q", "y" => "a", _ => "m" }).collect())
            .collect();
        let a = fleiss_kappa(&items).unwrap();
        let b = fleiss_kappa(&relabeled).unwrap();
        assert!((a.kappa - b.kappa).abs() < 1e-15);
    }

    #[test]
    fn random_labels_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let cats = ["masc", "fem", "neut"];
        let items: Vec<Vec<&str>> = (0..10_000)
            .map(|_| (0..3).map(|_| cats[rng.random_range(0..3)]).collect())
            .collect();
        assert!(fleiss_kappa(&items).unwrap().kappa.abs() < 0.05);
    }
}
