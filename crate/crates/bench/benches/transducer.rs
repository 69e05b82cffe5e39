use adr_cotrain::confidence::score_sample;
use adr_cotrain::embedding::CellKind;
use adr_cotrain::transducer::{batch_gradient, forward};
use adr_cotrain::ScoreNormalization;
use adr_cotrain_bench::{corpus, encoded, model};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn forward_pass(c: &mut Criterion) {
    let (corpus, table) = corpus(32, 32);
    let seq = &corpus.examples[0];
    let mut group = c.benchmark_group("forward");
    for kind in [CellKind::Lstm, CellKind::Gru] {
        for hidden in [16, 64] {
            let params = model(kind, 32, hidden);
            group.bench_with_input(
                BenchmarkId::new(kind.to_string(), hidden),
                &params,
                |b, p| b.iter(|| forward(p, &table, black_box(seq.tokens())).unwrap()),
            );
        }
    }
    group.finish();
}

fn minibatch_gradient(c: &mut Criterion) {
    let (corpus, table) = corpus(32, 32);
    let batch = encoded(&corpus, &table);
    let refs: Vec<_> = batch.iter().collect();
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(20);
    for kind in [CellKind::Lstm, CellKind::Gru] {
        let params = model(kind, 32, 32);
        group.bench_function(kind.to_string(), |b| {
            b.iter(|| batch_gradient(&params, black_box(&refs)).unwrap())
        });
    }
    group.finish();
}

fn pool_scoring(c: &mut Criterion) {
    let (corpus, table) = corpus(64, 16);
    let params = model(CellKind::Lstm, 16, 16);
    c.bench_function("score_sample/64", |b| {
        b.iter(|| {
            corpus
                .examples
                .iter()
                .map(|s| {
                    score_sample(&params, &table, s, ScoreNormalization::GeometricMean).unwrap()
                })
                .collect::<Vec<_>>()
        })
    });
}

criterion_group!(benches, forward_pass, minibatch_gradient, pool_scoring);
criterion_main!(benches);
