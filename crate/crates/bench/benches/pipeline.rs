//! Forward and backward passes of the desk network, ensemble combination
//! and distribution fitting.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use l2d_core::data_model::SEMANTIC_FEATURES;
use l2d_core::ensemble::{combine, fit_distribution, Weighting, ANGLE_BINS};
use l2d_core::fusion::{FusionBatch, FusionConfig, FusionModel};
use l2d_core::nn::Mode;
use l2d_core::trainer::joint_loss_grad;
use l2d_core::SampleKey;
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BATCH: usize = 16;

fn batch(rng: &mut ChaCha8Rng, w: usize, h: usize, dim: usize) -> FusionBatch {
    let mut img = || Array4::from_shape_simple_fn((BATCH, 3, h, w), || rng.random_range(-1.0..1.0));
    let (previous, current) = (img(), img());
    let mut sem = || Array2::from_shape_simple_fn((BATCH, dim), || rng.random_range(-1.0..1.0));
    let (sem_previous, sem_current) = (sem(), sem());
    FusionBatch {
        previous,
        current,
        sem_previous,
        sem_current,
        missing_previous: Array2::zeros((BATCH, dim)),
        missing_current: Array2::zeros((BATCH, dim)),
    }
}

fn network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (w, h) = (64, 36);
    let model = FusionModel::new(FusionConfig::desk((w, h), SEMANTIC_FEATURES)).unwrap();
    let b = batch(&mut rng, w, h, SEMANTIC_FEATURES);
    let target = Array2::from_shape_simple_fn((BATCH, 2), || rng.random_range(-1.0..1.0));

    c.bench_function("forward_batch16_64x36", |bench| {
        bench.iter(|| model.forward_batch(black_box(&b), Mode::Eval).unwrap())
    });
    c.bench_function("forward_backward_batch16_64x36", |bench| {
        bench.iter_batched(
            || model.params.zeros_like(),
            |mut grads| {
                let (pred, cache) = model.forward_batch(&b, Mode::Eval).unwrap();
                model.backward(&cache, &joint_loss_grad(&pred, &target), &mut grads);
                grads
            },
            BatchSize::LargeInput,
        )
    });
}

fn ensemble(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let training: Vec<f64> = (0..100_000).map(|_| rng.random_range(-300.0..300.0)).collect();
    c.bench_function("fit_distribution_100k", |bench| {
        bench.iter(|| fit_distribution(black_box(&training), ANGLE_BINS).unwrap())
    });

    let dist = fit_distribution(&training, ANGLE_BINS).unwrap();
    let keys: Vec<SampleKey> = (0..10_000)
        .map(|i| SampleKey {
            route_id: "route00".into(),
            chapter_id: "chapter000".into(),
            frame_index: i,
        })
        .collect();
    let members: Vec<Vec<(SampleKey, f64)>> = (0..4)
        .map(|_| keys.iter().map(|k| (k.clone(), rng.random_range(-300.0..300.0))).collect())
        .collect();
    for (name, weighting) in [("per_sample", Weighting::PerSample), ("per_model", Weighting::PerModel)] {
        c.bench_function(&format!("combine_4x10k_{name}"), |bench| {
            bench.iter(|| combine(black_box(&members), &dist, weighting).unwrap())
        });
    }
}

criterion_group!(benches, network, ensemble);
criterion_main!(benches);
