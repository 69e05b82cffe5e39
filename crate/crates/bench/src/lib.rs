//! Shared fixtures for the criterion benchmarks.

use adr_cotrain::corpus::Corpus;
use adr_cotrain::embedding::{CellKind, EmbeddingTable};
use adr_cotrain::synth::{generate, SynthConfig};
use adr_cotrain::transducer::{encode, EncodedSequence, TransducerParams};

/// A synthetic corpus with `n` labeled sequences and its random table.
pub fn corpus(n: usize, dim: usize) -> (Corpus, EmbeddingTable) {
    let data = generate(&SynthConfig {
        labeled: n,
        unlabeled: 0,
        seed: 1,
        ..SynthConfig::default()
    })
    .expect("valid synth config");
    let corpus = data.labeled_corpus();
    let table = EmbeddingTable::random(dim, 2, &corpus.vocabulary());
    (corpus, table)
}

pub fn model(kind: CellKind, dim: usize, hidden: usize) -> TransducerParams {
    TransducerParams::init(kind, dim, hidden, 3)
}

pub fn encoded(corpus: &Corpus, table: &EmbeddingTable) -> Vec<EncodedSequence> {
    corpus.examples.iter().map(|s| encode(table, s)).collect()
}
