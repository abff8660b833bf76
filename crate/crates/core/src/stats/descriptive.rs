use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile (Hyndman & Fan type 7) of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Box-plot summary with whiskers at the most extreme points within 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxSummary {
    /// `None` for an empty sample.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_type7(&v, 0.25);
        let q3 = quantile_type7(&v, 0.75);
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = v.iter().copied().find(|x| *x >= fence_lo).unwrap_or(q1);
        let whisker_high = v.iter().rev().copied().find(|x| *x <= fence_hi).unwrap_or(q3);
        let outliers = v.iter().copied().filter(|x| *x < fence_lo || *x > fence_hi).collect();
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile_type7(&v, 0.5),
            q1,
            q3,
            whisker_low,
            whisker_high,
            outliers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_r_defaults() {
        // R: quantile(1:10) -> 1.00 3.25 5.50 7.75 10.00
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_type7(&v, 0.25), 3.25);
        assert_eq!(quantile_type7(&v, 0.5), 5.5);
        assert_eq!(quantile_type7(&v, 0.75), 7.75);
    }

    #[test]
    fn constant_cell_is_degenerate_box() {
        let b = BoxSummary::from_values(&[-2.0; 6]).unwrap();
        assert_eq!(b.q1, b.q3);
        assert_eq!(b.whisker_low, -2.0);
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn outliers_beyond_fences() {
        let mut v: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        v.push(50.0);
        let b = BoxSummary::from_values(&v).unwrap();
        assert_eq!(b.outliers, vec![50.0]);
        assert_eq!(b.whisker_high, 1.9);
        assert!(BoxSummary::from_values(&[]).is_none());
    }
}
