use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tstok_bench::{model_and_input, slerp_block, DIM};
use tstok_core::model::kernels::{gemm, View};
use tstok_core::regularizers::{fit_projection, loss_mono, loss_ord, measure};
use tstok_core::ts_processor::{build_vocab, tokenize, RawSeries};

fn bench_gemm(c: &mut Criterion) {
    let (m, k, n) = (256, 64, 256);
    let a = vec![0.5f32; m * k];
    let b = vec![0.25f32; k * n];
    let mut out = vec![0.0f32; m * n];
    c.bench_function("gemm_f32_256x64x256", |bch| {
        bch.iter(|| gemm(View::rm(&a, 0, m, k, k), View::rm(&b, 0, k, n, n), &mut out, 0, n, 0.0))
    });
}

fn bench_model(c: &mut Criterion) {
    let mut g = c.benchmark_group("micro_lm");
    for len_index in [0, 2] {
        let (model, ids, target) = model_and_input(len_index);
        g.bench_with_input(BenchmarkId::new("forward", ids.len()), &ids, |bch, ids| {
            bch.iter(|| model.forward(black_box(ids)).unwrap())
        });
        let mut grad = vec![0.0f32; model.layout.total];
        g.bench_with_input(BenchmarkId::new("forward_backward", ids.len()), &ids, |bch, ids| {
            bch.iter(|| model.loss_and_grad(black_box(ids), target, 1.0, &mut grad).unwrap())
        });
    }
    g.finish();
}

fn bench_regularizers(c: &mut Criterion) {
    let block = slerp_block();
    let ctx = fit_projection(&block, DIM).unwrap();
    let mut g = c.benchmark_group("regularizers");
    g.bench_function("fit_projection_2001x64", |b| b.iter(|| fit_projection(black_box(&block), DIM).unwrap()));
    g.bench_function("loss_ord_k100", |b| b.iter(|| loss_ord(&ctx, black_box(&block), 100, 0.0).unwrap()));
    g.bench_function("loss_mono_k1", |b| b.iter(|| loss_mono(&ctx, black_box(&block), 1, 0.0).unwrap()));
    g.bench_function("measure", |b| b.iter(|| measure(black_box(&block), DIM).unwrap()));
    g.finish();
}

fn bench_tokenize(c: &mut Criterion) {
    let vocab = build_vocab(0.001, 12).unwrap();
    let series = RawSeries {
        channels: vec![(0..4096).map(|i| (i as f64 * 0.01).sin() * 3.0).collect()],
    };
    c.bench_function("tokenize_4096", |b| b.iter(|| tokenize(black_box(&series), &vocab).unwrap()));
}

criterion_group!(benches, bench_gemm, bench_model, bench_regularizers, bench_tokenize);
criterion_main!(benches);
