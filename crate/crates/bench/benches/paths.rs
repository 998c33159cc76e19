use cap_bench::{anova, grouped_factor, options, wavelet};
use cap_core::blasso::{blasso_path, BlassoConfig};
use cap_core::hierarchy::compile_penalty_for;
use cap_core::path::{hicap_path_with, icap_path_with, ilasso_path_with, lasso_path_with, linf_cap_path_with};
use cap_core::{Grouping, Norm};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_path");
    for n in [80, 200] {
        let (data, groups) = grouped_factor(n, 1);
        let linf = Grouping::uniform(data.p(), groups, Norm::INF).unwrap();
        let opts = options(&data);
        group.bench_with_input(BenchmarkId::new("lasso", n), &data, |b, d| {
            b.iter(|| lasso_path_with(black_box(d), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ilasso", n), &data, |b, d| {
            b.iter(|| ilasso_path_with(black_box(d), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("icap", n), &data, |b, d| {
            b.iter(|| icap_path_with(black_box(d), &linf, &opts).unwrap())
        });
    }
    let (data, graph) = wavelet(2);
    let opts = options(&data);
    group.bench_function("hicap/wavelet", |b| b.iter(|| hicap_path_with(black_box(&data), &graph, &opts).unwrap()));
    let (data, graph) = anova(3);
    let opts = options(&data);
    let compiled = compile_penalty_for(&graph, data.p(), &vec![Norm::INF; graph.len()], &vec![1.0; graph.len()]).unwrap();
    group.bench_function("linf_cap/anova", |b| {
        b.iter(|| linf_cap_path_with(black_box(&data), &compiled, &opts).unwrap())
    });
    group.finish();
}

fn approximate(c: &mut Criterion) {
    let mut group = c.benchmark_group("blasso_path");
    group.sample_size(10);
    let (data, groups) = grouped_factor(80, 1);
    for gamma in [2.0, 4.0] {
        let grouping = Grouping::uniform(data.p(), groups.clone(), Norm::new(gamma).unwrap()).unwrap();
        let cfg = BlassoConfig { lambda_min_ratio: 0.05, ..BlassoConfig::for_dataset(&data) };
        group.bench_with_input(BenchmarkId::new("gamma", gamma), &grouping, |b, g| {
            b.iter(|| blasso_path(black_box(&data), g, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, exact, approximate);
criterion_main!(benches);
