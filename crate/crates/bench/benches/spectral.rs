use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kae_core::linalg::{eig_decompose, Matrix};
use kae_core::model::{Architecture, KaeModel, KoopmanInit};
use kae_core::spectral::{eigenloss_grad, Eigenloss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let s = 1.0 / (n as f64).sqrt();
    Matrix::from_vec(n, n, (0..n * n).map(|_| s * (rng.random::<f64>() * 2.0 - 1.0)).collect()).unwrap()
}

fn eig(c: &mut Criterion) {
    let mut group = c.benchmark_group("eig_decompose");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [4, 8, 16, 32] {
        let u = gaussian(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| eig_decompose(black_box(u))));
    }
    group.finish();
}

fn eigenloss(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigenloss_grad");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [4, 8, 16] {
        let u = gaussian(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| eigenloss_grad(black_box(u))));
    }
    group.finish();
}

// One mini-batch of the pendulum-sized model, with and without the penalty.
fn training_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("total_loss");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = Architecture::default();
    let model = KaeModel::build(&arch, &KoopmanInit::Gaussian { sigma: None }, &mut rng).unwrap();
    let window: Vec<Matrix> = (0..=8)
        .map(|_| Matrix::from_vec(128, 2, (0..256).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    for weight in [0.0, 1e3] {
        let eig = Eigenloss::new(weight);
        group.bench_function(BenchmarkId::new("eigenloss_weight", weight), |b| {
            let mut m = model.clone();
            b.iter(|| {
                m.zero_grad();
                m.total_loss(black_box(&window), &eig).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, eig, eigenloss, training_step);
criterion_main!(benches);
