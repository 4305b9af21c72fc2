use std::hint::black_box;

use ccsa_bench::{portfolio, PORTFOLIO_OPTIMUM};
use ccsa_core::analysis::bias_variance_oracle;
use ccsa_core::estimators::{ac_gradient_estimate, ac_probability_estimate, fd_gradient_estimate};
use ccsa_core::{ChanceProblem, EstimatorConfig, EstimatorKind, MollifierKernel};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn samples(n: usize) -> Vec<f64> {
    let p = portfolio();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n).map(|_| p.noise().sample(&mut rng)).collect()
}

fn per_sample(c: &mut Criterion) {
    let p = portfolio();
    let u = PORTFOLIO_OPTIMUM;
    let k = MollifierKernel::parabolic();
    let xs = samples(1024);
    let mut g = c.benchmark_group("estimate_1024_samples");
    g.bench_function("ac_gradient", |b| {
        b.iter(|| {
            for &xi in &xs {
                black_box(ac_gradient_estimate(&p, black_box(&u), xi, &k, 0.1));
            }
        })
    });
    g.bench_function("ac_probability", |b| {
        b.iter(|| {
            for &xi in &xs {
                black_box(ac_probability_estimate(&p, black_box(&u), xi, &k, 0.1));
            }
        })
    });
    g.bench_function("fd_gradient", |b| {
        b.iter(|| {
            for &xi in &xs {
                black_box(fd_gradient_estimate(&p, black_box(&u), xi, 0.05));
            }
        })
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let p = portfolio();
    let mut g = c.benchmark_group("bias_variance_oracle");
    g.sample_size(20);
    for (kind, s) in [(EstimatorKind::Ac, 0.1), (EstimatorKind::Fd, 0.05)] {
        let est = EstimatorConfig::new(kind, s).unwrap();
        g.bench_function(kind.name(), |b| {
            b.iter(|| bias_variance_oracle(&p, &est, black_box(&PORTFOLIO_OPTIMUM), 1.0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, per_sample, oracle);
criterion_main!(benches);
