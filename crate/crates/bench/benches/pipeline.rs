use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use corefprobe::corpus::{build_condition, GenerationConfig};
use corefprobe::model_client::{score_first_token, MockBackend};
use corefprobe::stats::{
    chi_square_independence, noncentral_f_eta2_ci_lower, studentized_range_quantile, tukey_hsd, ChiSqOptions,
    FactorialSample, TwoWayDesign,
};
use corefprobe::{Banks, Condition};

fn samples(c: Condition) -> (TwoWayDesign, Vec<FactorialSample>) {
    let banks = Banks::bundled().unwrap();
    let probes = build_condition(c, &banks, &GenerationConfig::default()).unwrap();
    let m = MockBackend::new("bench");
    let s: Vec<FactorialSample> = probes
        .iter()
        .map(|p| {
            let r = score_first_token(&m, &p.instance_id, &p.context_text, p.coreferent_surface.as_deref().unwrap()).unwrap();
            FactorialSample::new(r.logprob, p.antecedent_gender.as_str(), p.coreferent_gender.unwrap().as_str())
        })
        .collect();
    let levels_a: Vec<String> = c.antecedent_levels().iter().map(|l| l.as_str().to_string()).collect();
    let levels_b: Vec<String> = ["masc", "fem", "neut"].iter().map(|s| s.to_string()).collect();
    (TwoWayDesign::new("antecedent", levels_a, "coreferent", levels_b), s)
}

fn corpus(c: &mut Criterion) {
    let banks = Banks::bundled().unwrap();
    let cfg = GenerationConfig::default();
    c.bench_function("build en_pl", |b| b.iter(|| build_condition(black_box(Condition::EnPl), &banks, &cfg).unwrap()));
    c.bench_function("build de_pl", |b| b.iter(|| build_condition(black_box(Condition::DePl), &banks, &cfg).unwrap()));
}

fn anova(c: &mut Criterion) {
    let (design, s) = samples(Condition::EnPl);
    c.bench_function("anova en_pl", |b| b.iter(|| design.anova(black_box(&s)).unwrap()));
    let (design, s) = samples(Condition::DePl);
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("anova de_pl", |b| b.iter(|| design.anova(black_box(&s)).unwrap()));
    g.bench_function("tukey de_pl (276 contrasts)", |b| b.iter(|| tukey_hsd(&design, black_box(&s)).unwrap()));
    g.finish();
}

fn distributions(c: &mut Criterion) {
    c.bench_function("qtukey k=24", |b| b.iter(|| studentized_range_quantile(0.05, black_box(24.0), 10536.0).unwrap()));
    c.bench_function("eta2 CI lower", |b| {
        b.iter(|| noncentral_f_eta2_ci_lower(black_box(400.0), 4.0, 13455.0, 0.95).unwrap())
    });
}

fn chisq(c: &mut Criterion) {
    let rows: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
    let cols: Vec<String> = ["masc", "fem", "neut", "masc_fem"].iter().map(|s| s.to_string()).collect();
    let counts: Vec<Vec<u64>> = (0..8).map(|i| (0..4).map(|j| 2 + ((i * 7 + j * 3) % 9) as u64).collect()).collect();
    let opts = ChiSqOptions::default();
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("chisq 8x4 with 2000 bootstrap resamples", |b| {
        b.iter(|| chi_square_independence(&rows, &cols, black_box(&counts), &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, corpus, anova, distributions, chisq);
criterion_main!(benches);
