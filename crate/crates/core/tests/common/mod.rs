//! Reference implementations used as oracles. They share no code with the
//! crate's statistics module.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Lanczos approximation, g = 7.
pub fn lgamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta by the hypergeometric power series.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta(b, a, 1.0 - x);
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - (lgamma(a) + lgamma(b) - lgamma(a + b))).exp() / a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..5_000_000 {
        let n = n as f64;
        term *= (a + b + n) / (a + 1.0 + n) * x;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    front * sum
}

/// Upper tail of F(df1, df2).
pub fn f_sf(f: f64, df1: f64, df2: f64) -> f64 {
    inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

pub struct BruteEffect {
    pub ss: f64,
    pub df1: f64,
    pub f: f64,
    pub p: f64,
    pub eta2: f64,
}

pub struct BruteAnova {
    pub effects: [BruteEffect; 3],
    pub ss_error: f64,
    pub df_error: f64,
}

/// Direct sums of squares over (a, b, y) triples.
pub fn brute_anova(data: &[(String, String, f64)]) -> BruteAnova {
    let n = data.len() as f64;
    let grand = data.iter().map(|d| d.2).sum::<f64>() / n;
    let mean_by = |key: &dyn Fn(&(String, String, f64)) -> String| {
        let mut m: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for d in data {
            let e = m.entry(key(d)).or_default();
            e.0 += d.2;
            e.1 += 1.0;
        }
        m.into_iter().map(|(k, (s, c))| (k, s / c)).collect::<BTreeMap<_, _>>()
    };
    let ma = mean_by(&|d| d.0.clone());
    let mb = mean_by(&|d| d.1.clone());
    let mc = mean_by(&|d| format!("{}\u{1f}{}", d.0, d.1));
    let mut ss_a = 0.0;
    let mut ss_b = 0.0;
    let mut ss_cells = 0.0;
    let mut ss_w = 0.0;
    let mut ss_t = 0.0;
    for d in data {
        let c = mc[&format!("{}\u{1f}{}", d.0, d.1)];
        ss_a += (ma[&d.0] - grand).powi(2);
        ss_b += (mb[&d.1] - grand).powi(2);
        ss_cells += (c - grand).powi(2);
        ss_w += (d.2 - c).powi(2);
        ss_t += (d.2 - grand).powi(2);
    }
    let ss_ab = ss_cells - ss_a - ss_b;
    let (la, lb) = (ma.len() as f64, mb.len() as f64);
    let df_e = n - la * lb;
    let mse = ss_w / df_e;
    let eff = |ss: f64, df: f64| {
        let f = ss / df / mse;
        BruteEffect { ss, df1: df, f, p: f_sf(f, df, df_e), eta2: ss / ss_t }
    };
    BruteAnova {
        effects: [eff(ss_a, la - 1.0), eff(ss_b, lb - 1.0), eff(ss_ab, (la - 1.0) * (lb - 1.0))],
        ss_error: ss_w,
        df_error: df_e,
    }
}

/// Standard normal draw by Box-Muller.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Serves `app` on an ephemeral loopback port from a background thread and
/// returns its base URL.
pub fn spawn_server(app: axum::Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind");
    listener.set_nonblocking(true).expect("nonblocking");
    let addr = listener.local_addr().expect("addr");
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(l, app).await.expect("serve");
        });
    });
    format!("http://{addr}")
}
