use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use flim_core::crlb::fisher_information;
use flim_core::estimators::Method;
use flim_core::pipeline::{interleaved_stream, run_pipeline, PipelineConfig};
use flim_core::quant::{quantize_model, QuantSpec, QuantizedGru, Rounding};
use flim_core::rng::rng_from_seed;
use flim_core::rnn::{stream_estimate, CellVariant, RnnConfig};
use flim_core::sim::generate_sequence;
use flim_core::train::{batch_gradient, init_weights, loss_weights, Example};
use flim_core::DecayModel;

fn model() -> DecayModel {
    DecayModel::mono(2.5, 0.02, 1.0, 0.1673, 50.0).unwrap()
}

fn gru(hidden: usize) -> flim_core::rnn::RnnWeights {
    let mut cfg = RnnConfig::new(CellVariant::Gru, hidden, 50.0);
    cfg.input_scale_ns = 10.0;
    cfg.output_scale_ns = 5.0;
    init_weights(&cfg, &mut rng_from_seed(1)).unwrap()
}

fn simulation(c: &mut Criterion) {
    let m = model();
    let mut g = c.benchmark_group("simulate");
    g.throughput(Throughput::Elements(1024));
    g.bench_function("sequence_1024", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            generate_sequence(black_box(&m), 1024, seed).unwrap()
        })
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let seq = generate_sequence(&model(), 1024, 3).unwrap();
    let w = gru(16);
    let q = QuantizedGru::new(
        quantize_model(&w, &QuantSpec::new(16, 16, Rounding::Convergent))
            .unwrap()
            .0,
    )
    .unwrap();
    let mut g = c.benchmark_group("estimate_1024");
    g.throughput(Throughput::Elements(1024));
    for (name, m) in [
        ("cmm", Method::cmm()),
        ("lsfit", Method::lsfit()),
        ("gru16", Method::Rnn(&w)),
        ("gru16_fixed", Method::Quantized(&q)),
    ] {
        g.bench_function(name, |b| b.iter(|| m.estimate(black_box(&seq))));
    }
    g.bench_function("gru16_stream_every_64", |b| {
        b.iter(|| stream_estimate(black_box(&seq.timestamps), &w, 64).unwrap())
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let w = gru(16);
    let seqs: Vec<_> = (0..32)
        .map(|i| generate_sequence(&model(), 256, i).unwrap())
        .collect();
    let batch: Vec<Example<'_>> = seqs
        .iter()
        .map(|s| Example {
            timestamps: &s.timestamps,
            lifetime_ns: 2.5,
        })
        .collect();
    let lw = loss_weights(256);
    let mut g = c.benchmark_group("train");
    g.throughput(Throughput::Elements(32 * 256));
    g.sample_size(20);
    g.bench_function("gru16_batch32x256_gradient", |b| {
        b.iter(|| batch_gradient(black_box(&batch), &lw, &w, None).unwrap())
    });
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let q = QuantizedGru::new(
        quantize_model(&gru(16), &QuantSpec::new(16, 16, Rounding::Convergent))
            .unwrap()
            .0,
    )
    .unwrap();
    let events = interleaved_stream(8e6, 10_000_000_000, &model(), 1).unwrap();
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("pipeline");
    g.throughput(Throughput::Elements(events.len() as u64));
    g.sample_size(10);
    g.bench_function("interleaved_8M_per_s_10ms", |b| {
        b.iter_batched(
            || events.clone(),
            |ev| run_pipeline(&ev, &q, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn bound(c: &mut Criterion) {
    let m = model();
    c.bench_function("fisher_information", |b| {
        b.iter(|| fisher_information(black_box(&m), 1024).unwrap())
    });
}

criterion_group!(benches, simulation, estimators, training, pipeline, bound);
criterion_main!(benches);
