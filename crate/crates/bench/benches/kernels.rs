//! Microbenchmarks for the hot kernels: convolution, pooling/unpooling,
//! the detector decoder and the pixel-level confusion counts.

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use sclera_core::dataset::BinaryMask;
use sclera_core::detector::{decode_predictions, DetectorConfig};
use sclera_core::evaluation::pixel_counts;
use sclera_core::nn::{max_pool, unpool, Conv2d, Layer, Tensor, WeightInit};

fn random_tensor(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array4::zeros(shape);
    x.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
    x
}

fn bench_conv_forward(c: &mut Criterion) {
    let mut init = WeightInit::new(1);
    let mut conv = Conv2d::new("bench", 16, 32, 3, 1, 1, &mut init);
    let x = random_tensor((1, 16, 60, 80), 2);
    c.bench_function("conv2d 3x3 16->32 at 80x60", |b| {
        b.iter(|| black_box(conv.forward(black_box(x.clone()))))
    });
}

fn bench_pooling(c: &mut Criterion) {
    let x = random_tensor((1, 64, 120, 160), 3);
    c.bench_function("max_pool 2x2/2 64ch at 160x120", |b| {
        b.iter(|| black_box(max_pool(black_box(&x), 2, 2)))
    });
    let (pooled, idx) = max_pool(&x, 2, 2);
    c.bench_function("unpool 2x2/2 64ch to 160x120", |b| {
        b.iter(|| black_box(unpool(black_box(&pooled), &idx)))
    });
}

fn bench_decoder(c: &mut Criterion) {
    let cfg = DetectorConfig {
        confidence_threshold: 0.25,
        ..DetectorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut raw = Array3::zeros((30, 13, 13));
    raw.mapv_inplace(|_: f64| rng.random::<f64>() * 8.0 - 4.0);
    c.bench_function("decode_predictions 13x13x30", |b| {
        b.iter(|| black_box(decode_predictions(black_box(&raw), &cfg)))
    });
}

fn bench_pixel_counts(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bits: Vec<bool> = (0..400 * 300 * 2).map(|_| rng.random()).collect();
    let pred = BinaryMask::from_fn(400, 300, |x, y| bits[(y * 400 + x) as usize]);
    let gt = BinaryMask::from_fn(400, 300, |x, y| bits[(400 * 300 + y * 400 + x) as usize]);
    c.bench_function("pixel_counts 400x300", |b| {
        b.iter(|| black_box(pixel_counts(black_box(&pred), black_box(&gt))))
    });
}

criterion_group!(
    kernels,
    bench_conv_forward,
    bench_pooling,
    bench_decoder,
    bench_pixel_counts
);
criterion_main!(kernels);
