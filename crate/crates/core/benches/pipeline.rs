//! Each workload runs on a one-thread pool and on the default pool.
//! Build with `--no-default-features` to time the plain sequential path.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

use shapedyn::chaos::{correlation_integral, divergence_curve, log_spaced};
use shapedyn::classify::{loocv_predictions, LabeledFeature, Metric};
use shapedyn::embedding::{delay_embed, EmbeddingParams, PhaseSpace};
use shapedyn::models::{GenConfig, System};
use shapedyn::shape::{shape_distribution, ShapeConfig, ShapeKind};

fn pools() -> Vec<(String, ThreadPool)> {
    let all = rayon::current_num_threads();
    let mut out = vec![("1-thread".to_string(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if all > 1 {
        out.push((format!("{all}-thread"), rayon::ThreadPoolBuilder::new().num_threads(all).build().unwrap()));
    }
    out
}

fn lorenz(n: usize) -> PhaseSpace {
    let x = System::Lorenz.generate(&GenConfig::lorenz(n)).unwrap().channels()[0].clone();
    delay_embed(&x, EmbeddingParams::new(3, 11).unwrap()).unwrap()
}

fn shapes(c: &mut Criterion) {
    let ps = lorenz(5000);
    let mut group = c.benchmark_group("shape_100k_samples");
    for kind in [ShapeKind::D2, ShapeKind::D3, ShapeKind::DT1] {
        let mut cfg = ShapeConfig::new(kind, ps.params());
        cfg.n_samples = 100_000;
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(kind.name(), &name), &cfg, |b, cfg| {
                b.iter(|| pool.install(|| shape_distribution(black_box(&ps), cfg).unwrap()))
            });
        }
    }
    group.finish();
}

fn invariants(c: &mut Criterion) {
    let ps = lorenz(3000);
    let d = ps.diameter();
    let radii = log_spaced(0.01 * d, d, 8);
    let mut group = c.benchmark_group("invariants_n3000");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("divergence_curve", &name), |b| {
            b.iter(|| pool.install(|| divergence_curve(black_box(&ps), 100, 300).unwrap()))
        });
        group.bench_function(BenchmarkId::new("correlation_integral", &name), |b| {
            b.iter(|| pool.install(|| correlation_integral(black_box(&ps), &radii, 100).unwrap()))
        });
    }
    group.finish();
}

fn classification(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<LabeledFeature> = (0..400)
        .map(|i| {
            let v: Vec<f64> = (0..150).map(|_| rng.gen::<f64>()).collect();
            LabeledFeature::new(v, format!("c{}", i % 4), format!("{i:04}")).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("loocv_400x150");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("chi2", &name), |b| {
            b.iter(|| pool.install(|| loocv_predictions(black_box(&data), Metric::Chi2).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, shapes, invariants, classification);
criterion_main!(benches);
