use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sten_bench::{normal, synthetic_batch};
use sten_core::data::{bandpass_taps, filtfilt, FIR_TAPS};
use sten_core::model::{build_model, forward, Phase};
use sten_core::nn::{conv2d_forward, depthwise_conv2d_forward, softmax_xent, Padding};
use sten_core::train::{adam_step, AdamConfig, AdamState};
use sten_core::{ArchConfig, Rng};

fn temporal_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("temporal_conv");
    for (channels, samples) in [(16, 250), (128, 875)] {
        let x = normal(&[4, 1, channels, samples], 1);
        let k = normal(&[8, 1, 1, 64], 2);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{channels}x{samples}")),
            &(x, k),
            |b, (x, k)| b.iter(|| conv2d_forward(black_box(x), k, Padding::Same).unwrap()),
        );
    }
    group.finish();
}

fn spatial_depthwise(c: &mut Criterion) {
    let x = normal(&[4, 8, 128, 875], 3);
    let k = normal(&[8, 2, 128, 1], 4);
    c.bench_function("depthwise_128ch", |b| {
        b.iter(|| depthwise_conv2d_forward(black_box(&x), &k).unwrap())
    });
}

fn train_step(c: &mut Criterion) {
    let arch = ArchConfig::with_geometry(16, 250);
    let data = synthetic_batch(16, 5);
    let indices: Vec<usize> = (0..16).collect();
    let (x, y) = data.batch(&indices).unwrap();
    let mut params = build_model(&arch, &mut Rng::new(1)).unwrap();
    let mut state = AdamState::for_model(&params).unwrap();
    let mut rng = Rng::new(2);
    let cfg = AdamConfig::default();
    c.bench_function("train_step_16x250_batch16", |b| {
        b.iter(|| {
            let (logits, trace) = forward(&params, &x, Phase::Train(&mut rng)).unwrap();
            let xent = softmax_xent(&logits, &y).unwrap();
            trace.commit_running_stats(&mut params);
            let grads = trace.backward(&xent.grad).unwrap();
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
            params.apply_maxnorm();
        })
    });
}

fn bandpass(c: &mut Criterion) {
    let h = bandpass_taps(1.0, 40.0, 125.0, FIR_TAPS).unwrap();
    let row = normal(&[875], 6).into_data();
    c.bench_function("filtfilt_875", |b| b.iter(|| filtfilt(&h, black_box(&row))));
}

criterion_group!(
    benches,
    temporal_conv,
    spatial_depthwise,
    train_step,
    bandpass
);
criterion_main!(benches);
