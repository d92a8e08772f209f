use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmas_bench::Fixture;
use dmas_core::dsp::{istft, stft_channels, SpectrogramRole};
use dmas_core::propagation::{build_operator, LazyOperator};
use dmas_core::rtm::{back_project, forward_project, gram_filter, inpaint_gram, Normalization};
use dmas_core::SPEED_OF_SOUND;

fn stft(c: &mut Criterion) {
    let fx = Fixture::new(8, 2.0);
    let mut g = c.benchmark_group("stft");
    g.bench_function("analysis_8ch_1s", |b| {
        b.iter(|| stft_channels(black_box(&fx.signal), &fx.params, SpectrogramRole::Observed).unwrap())
    });
    g.bench_function("synthesis_8ch_1s", |b| b.iter(|| istft(black_box(&fx.spectrogram), &fx.params, None).unwrap()));
    g.finish();
}

fn operator(c: &mut Criterion) {
    let mut g = c.benchmark_group("operator_build");
    g.sample_size(10);
    for spacing in [4.0, 2.0] {
        let fx = Fixture::new(16, spacing);
        g.bench_with_input(BenchmarkId::from_parameter(fx.grid.len()), &fx, |b, fx| {
            b.iter(|| build_operator(&fx.layout, &fx.grid, &fx.params, SPEED_OF_SOUND).unwrap())
        });
    }
    g.finish();
}

fn projection(c: &mut Criterion) {
    let fx = Fixture::new(16, 2.0);
    let op = build_operator(&fx.layout, &fx.grid, &fx.params, SPEED_OF_SOUND).unwrap();
    let image = back_project(&op, &fx.spectrogram).unwrap();
    let mut g = c.benchmark_group("projection");
    g.sample_size(10);
    g.bench_function("back", |b| b.iter(|| back_project(&op, black_box(&fx.spectrogram)).unwrap()));
    g.bench_function("forward", |b| b.iter(|| forward_project(&op, black_box(&image)).unwrap()));
    g.finish();
}

fn gram(c: &mut Criterion) {
    let fx = Fixture::new(16, 2.0);
    let lazy = LazyOperator::new(&fx.layout, &fx.grid, &fx.params, SPEED_OF_SOUND).unwrap();
    let g_filter = gram_filter(&lazy).unwrap();
    let mut g = c.benchmark_group("gram");
    g.sample_size(10);
    g.bench_function("build_lazy", |b| b.iter(|| gram_filter(black_box(&lazy)).unwrap()));
    for norm in [Normalization::Diagonal, Normalization::UnitGain] {
        g.bench_with_input(BenchmarkId::new("inpaint", norm), &norm, |b, &norm| {
            b.iter(|| inpaint_gram(black_box(&fx.spectrogram), &g_filter, norm).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stft, operator, projection, gram);
criterion_main!(benches);
