use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedclust_core::clustering::{kappa, kmeans_fit, nmi, KMeansConfig};
use fedclust_core::data::blobs2;
use fedclust_core::dcn::{DcnConfig, DcnModel};
use fedclust_core::gan::{GanConfig, GanModel};
use fedclust_core::nn::{loss, Adam, AdamConfig};
use ndarray::Array2;
use std::hint::black_box;

fn uniform(rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        ((i * 31 + j * 17) % 97) as f64 / 97.0
    })
}

fn sae_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("sae_step");
    group.sample_size(10);
    for batch in [16usize, 110] {
        let x = uniform(batch, 16);
        let mut model = DcnModel::new(16, 10, DcnConfig::default(), 0).unwrap();
        let mut enc_opt = Adam::new(AdamConfig::new(2e-3, 0.9, 0.999)).unwrap();
        let mut dec_opt = Adam::new(AdamConfig::new(2e-3, 0.9, 0.999)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(batch), &x, |b, x| {
            b.iter(|| {
                let enc = model.encoder.forward_train(x.view()).unwrap();
                let dec = model.decoder.forward_train(enc.output().view()).unwrap();
                let (l, g) = loss::reconstruction(dec.output().view(), x.view()).unwrap();
                let (dg, gz) = model.decoder.backward(&dec, g.view()).unwrap();
                let (eg, _) = model.encoder.backward(&enc, gz.view()).unwrap();
                dec_opt.step(&mut model.decoder, &dg).unwrap();
                enc_opt.step(&mut model.encoder, &eg).unwrap();
                black_box(l)
            })
        });
    }
    group.finish();
}

fn gan_epoch(c: &mut Criterion) {
    let data = uniform(1100, 16);
    let config = GanConfig {
        epochs: 1,
        ..GanConfig::default()
    };
    let model = GanModel::new(16, 10, config, 0).unwrap();
    c.bench_function("gan_epoch_1100x16", |b| {
        b.iter(|| {
            let mut m = model.clone();
            black_box(m.train(data.view(), 1).unwrap())
        })
    });
}

fn kmeans(c: &mut Criterion) {
    let ds = blobs2();
    c.bench_function("kmeans_blobs2_10_restarts", |b| {
        b.iter(|| {
            black_box(
                kmeans_fit(ds.features.view(), &KMeansConfig::new(2, 3))
                    .unwrap()
                    .objective,
            )
        })
    });
    let data = uniform(2000, 16);
    c.bench_function("kmeans_2000x16_k10", |b| {
        b.iter(|| {
            black_box(
                kmeans_fit(data.view(), &KMeansConfig::new(10, 3))
                    .unwrap()
                    .objective,
            )
        })
    });
}

fn metrics(c: &mut Criterion) {
    let truth: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
    let pred: Vec<usize> = (0..10_000).map(|i| (i * 7 / 3) % 10).collect();
    c.bench_function("nmi_10k", |b| {
        b.iter(|| black_box(nmi(&pred, &truth).unwrap()))
    });
    c.bench_function("kappa_10k_k10", |b| {
        b.iter(|| black_box(kappa(&pred, &truth, 10).unwrap()))
    });
}

criterion_group!(benches, sae_step, gan_epoch, kmeans, metrics);
criterion_main!(benches);
