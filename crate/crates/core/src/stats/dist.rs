//! Distribution kernels: F and chi-square tails, the studentized range,
//! and noncentral-F inversion for eta-squared confidence bounds.

use super::special::{beta_reg, beta_reg_upper, gamma_q, integrate, ln_gamma, normal_cdf, normal_pdf};
use super::StatsError;

/// Absolute tolerance of the studentized-range integration.
pub const PTUKEY_TOL: f64 = 1e-6;
/// Bisection tolerance on the noncentrality parameter.
pub const NCP_TOL: f64 = 1e-8;

fn check_df(name: &str, df: f64) -> Result<(), StatsError> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(StatsError::Domain(format!("{name} must be positive, got {df}")))
    }
}

/// P(F > f) for the central F distribution.
pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    check_df("df1", df1)?;
    check_df("df2", df2)?;
    if f.is_nan() || f < 0.0 {
        return Err(StatsError::Domain(format!("F statistic must be >= 0, got {f}")));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let x = df2 / (df2 + df1 * f);
    beta_reg(df2 / 2.0, df1 / 2.0, x)
}

/// P(X > x) for a chi-square variable with `df` degrees of freedom.
pub fn chi2_upper_tail(x: f64, df: f64) -> Result<f64, StatsError> {
    check_df("df", df)?;
    if x.is_nan() || x < 0.0 {
        return Err(StatsError::Domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// CDF of the range of `k` independent standard normals.
fn normal_range_cdf(w: f64, k: f64) -> Result<f64, StatsError> {
    if w <= 0.0 {
        return Ok(0.0);
    }
    // phi(z) < 1e-15 outside [-8.5, 8.5]
    let (lo, hi) = (-8.5, 8.5);
    let v = integrate(
        |z| {
            let d = normal_cdf(z) - normal_cdf(z - w);
            if d <= 0.0 {
                0.0
            } else {
                normal_pdf(z) * d.powf(k - 1.0)
            }
        },
        lo,
        hi,
        PTUKEY_TOL * 1e-4,
    )?;
    Ok((k * v).clamp(0.0, 1.0))
}

/// Degrees of freedom above which the chi-based scale factor is treated as 1.
const PTUKEY_DF_INF: f64 = 1e6;

/// CDF of the studentized range distribution with `k` means and `df` error
/// degrees of freedom, as the mixture of the normal-range CDF over the
/// distribution of s = sqrt(chi2_df / df).
pub fn studentized_range_cdf(q: f64, k: f64, df: f64) -> Result<f64, StatsError> {
    check_df("df", df)?;
    if !(k >= 2.0) {
        return Err(StatsError::Domain(format!("k must be >= 2, got {k}")));
    }
    if q.is_nan() || q < 0.0 {
        return Err(StatsError::Domain(format!("q must be >= 0, got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df > PTUKEY_DF_INF {
        return normal_range_cdf(q, k);
    }
    let half = df / 2.0;
    let ln_norm = half * df.ln() - ln_gamma(half) - (half - 1.0) * std::f64::consts::LN_2;
    let density = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (ln_norm + (df - 1.0) * s.ln() - df * s * s / 2.0).exp()
        }
    };
    // chi-square quantile bounds well past 1e-15 tail mass
    let sd = (2.0 * df).sqrt();
    let chi_lo = (df - 12.0 * sd).max(0.0);
    let chi_hi = df + 12.0 * sd + 60.0;
    let (s_lo, s_hi) = ((chi_lo / df).sqrt(), (chi_hi / df).sqrt());
    let mut inner_err: Option<StatsError> = None;
    let v = integrate(
        |s| {
            let d = density(s);
            if d < 1e-300 {
                return 0.0;
            }
            match normal_range_cdf(q * s, k) {
                Ok(w) => d * w,
                Err(e) => {
                    inner_err.get_or_insert(e);
                    0.0
                }
            }
        },
        s_lo,
        s_hi,
        PTUKEY_TOL * 1e-2,
    )?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok(v.clamp(0.0, 1.0))
}

/// P(Q > q) for the studentized range distribution.
pub fn studentized_range_upper_tail(q: f64, k: f64, df: f64) -> Result<f64, StatsError> {
    Ok((1.0 - studentized_range_cdf(q, k, df)?).clamp(0.0, 1.0))
}

/// Critical value q such that P(Q > q) = alpha.
pub fn studentized_range_quantile(alpha: f64, k: f64, df: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    let mut lo = 0.0;
    let mut hi = 8.0;
    while studentized_range_upper_tail(hi, k, df)? > alpha {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(StatsError::Convergence {
                what: "studentized range quantile bracket".into(),
                detail: format!("alpha={alpha}, k={k}, df={df}"),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_upper_tail(mid, k, df)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// CDF of the noncentral F distribution as a Poisson mixture of incomplete betas.
pub fn noncentral_f_cdf(f: f64, df1: f64, df2: f64, ncp: f64) -> Result<f64, StatsError> {
    check_df("df1", df1)?;
    check_df("df2", df2)?;
    if !(ncp >= 0.0) || f.is_nan() {
        return Err(StatsError::Domain(format!("noncentral_f_cdf(f={f}, ncp={ncp})")));
    }
    if f <= 0.0 {
        return Ok(0.0);
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    let x = df1 * f / (df1 * f + df2);
    let (a, b) = (df1 / 2.0, df2 / 2.0);
    if ncp == 0.0 {
        return beta_reg(a, b, x);
    }
    let mu = ncp / 2.0;
    let ln_pois = |j: f64| -mu + j * mu.ln() - ln_gamma(j + 1.0);
    let (lnx, ln1x) = (x.ln(), (-x).ln_1p());
    // I_x(s+1, b) = I_x(s, b) - x^s (1-x)^b / (s B(s, b))
    let step = |s: f64| (s * lnx + b * ln1x - s.ln() - ln_gamma(s) - ln_gamma(b) + ln_gamma(s + b)).exp();
    let mode = mu.floor();
    let i_mode = beta_reg(a + mode, b, x)?;
    let mut total = 0.0;
    let mut mass = 0.0;
    // walk outwards from the Poisson mode until the remaining mass is negligible
    let mut j = mode;
    let mut i_j = i_mode;
    loop {
        let w = ln_pois(j).exp();
        total += w * i_j;
        mass += w;
        if (w < 1e-17 && j < mode - 5.0) || j == 0.0 {
            break;
        }
        j -= 1.0;
        i_j = (i_j + step(a + j)).min(1.0);
    }
    let mut j = mode + 1.0;
    let mut i_j = (i_mode - step(a + mode)).max(0.0);
    loop {
        let w = ln_pois(j).exp();
        total += w * i_j;
        mass += w;
        if w < 1e-17 && j > mode + 5.0 {
            break;
        }
        i_j = (i_j - step(a + j)).max(0.0);
        j += 1.0;
        if j > mode + 1e7 {
            return Err(StatsError::Convergence {
                what: "noncentral F Poisson series".into(),
                detail: format!("ncp={ncp}, accumulated mass={mass}"),
            });
        }
    }
    if (mass - 1.0).abs() > 1e-9 {
        return Err(StatsError::Convergence {
            what: "noncentral F Poisson series".into(),
            detail: format!("ncp={ncp}: Poisson weights sum to {mass}"),
        });
    }
    Ok((total / mass).clamp(0.0, 1.0))
}

/// One-sided lower confidence bound for eta-squared (upper bound pinned at 1)
/// by inverting the noncentral F in its noncentrality parameter.
pub fn noncentral_f_eta2_ci_lower(f: f64, df1: f64, df2: f64, level: f64) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Domain(format!("level must be in (0,1), got {level}")));
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    let lambda = noncentrality_lower(f, df1, df2, level)?;
    Ok(lambda / (lambda + df1 + df2 + 1.0))
}

/// Smallest noncentrality with P(F' <= f) <= level, by bisection.
pub fn noncentrality_lower(f: f64, df1: f64, df2: f64, level: f64) -> Result<f64, StatsError> {
    let at = |ncp: f64| noncentral_f_cdf(f, df1, df2, ncp);
    if at(0.0)? <= level {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = (df1 * f).max(1.0);
    let mut guard = 0;
    while at(hi)? > level {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(StatsError::Convergence {
                what: "noncentrality bracket".into(),
                detail: format!("F={f}, df1={df1}, df2={df2}, last ncp={hi}"),
            });
        }
    }
    let mut iters = 0;
    while hi - lo > NCP_TOL {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > level {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > 400 {
            return Err(StatsError::Convergence {
                what: "noncentrality bisection".into(),
                detail: format!("bracket [{lo}, {hi}] after {iters} iterations"),
            });
        }
    }
    Ok(0.5 * (lo + hi))
}

/// P(F <= f), the complement of [`f_upper_tail`] without cancellation.
pub fn f_lower_tail(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    check_df("df1", df1)?;
    check_df("df2", df2)?;
    if f <= 0.0 {
        return Ok(0.0);
    }
    let x = df2 / (df2 + df1 * f);
    beta_reg_upper(df2 / 2.0, df1 / 2.0, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_tail_edges() {
        assert_eq!(f_upper_tail(0.0, 3.0, 10.0).unwrap(), 1.0);
        assert_eq!(f_upper_tail(f64::INFINITY, 3.0, 10.0).unwrap(), 0.0);
        assert!(f_upper_tail(-1.0, 3.0, 10.0).is_err());
        assert!(f_upper_tail(1.0, 0.0, 10.0).is_err());
        let p = f_upper_tail(2.5, 4.0, 30.0).unwrap();
        let c = f_lower_tail(2.5, 4.0, 30.0).unwrap();
        assert!((p + c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn chi2_matches_closed_form_df2() {
        // chi2 with 2 df has survival exp(-x/2)
        for &x in &[0.5, 3.0, 12.0] {
            assert!((chi2_upper_tail(x, 2.0).unwrap() - (-x / 2.0_f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn ptukey_k2_reduces_to_normal_difference() {
        // with df -> inf and k = 2, Q = |Z1 - Z2| so P(Q <= q) = 2 Phi(q / sqrt 2) - 1
        for &q in &[0.5, 1.5, 2.77, 4.0] {
            let expect = 2.0 * normal_cdf(q / 2f64.sqrt()) - 1.0;
            let got = studentized_range_cdf(q, 2.0, 1e7).unwrap();
            assert!((got - expect).abs() < 1e-8, "q={q}: {got} vs {expect}");
        }
    }

    #[test]
    fn ptukey_k2_matches_t_distribution() {
        // k = 2: Q / sqrt 2 is |t_df|, so P(Q > q) = P(|t| > q / sqrt 2) = I_{df/(df+t^2)}(df/2, 1/2)
        for &(q, df) in &[(3.0, 5.0), (2.0, 12.0), (4.5, 3.0)] {
            let t: f64 = q / 2f64.sqrt();
            let expect = beta_reg(df / 2.0, 0.5, df / (df + t * t)).unwrap();
            let got = studentized_range_upper_tail(q, 2.0, df).unwrap();
            assert!((got - expect).abs() < 1e-6, "q={q} df={df}: {got} vs {expect}");
        }
    }

    #[test]
    fn noncentral_reduces_to_central() {
        let c = noncentral_f_cdf(2.0, 3.0, 20.0, 0.0).unwrap();
        assert!((c - (1.0 - f_upper_tail(2.0, 3.0, 20.0).unwrap())).abs() < 1e-14);
        let tiny = noncentral_f_cdf(2.0, 3.0, 20.0, 1e-9).unwrap();
        assert!((tiny - c).abs() < 1e-8);
    }

    #[test]
    fn noncentral_cdf_decreases_in_ncp() {
        let mut last = 1.0;
        for ncp in [0.0, 0.5, 2.0, 10.0, 50.0, 400.0] {
            let v = noncentral_f_cdf(4.0, 2.0, 100.0, ncp).unwrap();
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn noncentral_recurrence_matches_direct_terms() {
        let (f, d1, d2, ncp): (f64, f64, f64, f64) = (3.0, 4.0, 40.0, 7.3);
        let x = d1 * f / (d1 * f + d2);
        let mu = ncp / 2.0;
        let mut direct = 0.0;
        for j in 0..200 {
            let j = j as f64;
            let w = (-mu + j * mu.ln() - ln_gamma(j + 1.0)).exp();
            direct += w * beta_reg(d1 / 2.0 + j, d2 / 2.0, x).unwrap();
        }
        let got = noncentral_f_cdf(f, d1, d2, ncp).unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn eta2_ci_lower_zero_when_not_significant() {
        assert_eq!(noncentral_f_eta2_ci_lower(1.0, 2.0, 50.0, 0.95).unwrap(), 0.0);
    }
}
