//! Semi-supervised extraction of adverse-drug-reaction (ADR) mentions from
//! short social-media texts.
//!
//! Two bi-directional recurrent transducers (a bi-LSTM and a bi-GRU, each
//! reading its own word-embedding view) are trained on labeled sequences and
//! then co-trained: each model labels the unlabeled pool, and sequences it is
//! confident about join the other model's training set.
//!
//! * [`corpus`]: sequences, IO labels, spans, file formats, lexicon filter
//! * [`embedding`]: embedding tables and view specs
//! * [`transducer`]: the bi-directional transducer, its loss and training
//! * [`confidence`]: pseudo-label confidence scoring
//! * [`cotrain`]: the co-training loop
//! * [`eval`]: approximate-match metrics and k-fold cross-validation
//! * [`synth`]: a synthetic corpus generator with a learnable ADR task

pub mod confidence;
pub mod corpus;
pub mod cotrain;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod transducer;

pub use confidence::{score_distribution, score_sample, ScoreNormalization, ScoredSample, Scoring};
pub use corpus::{AnnotatedSequence, Corpus, Label, Lexicon, Span};
pub use cotrain::{run_cotraining, CotrainConfig, CotrainOutcome, CotrainState, IterationRecord};
pub use embedding::{CellKind, EmbeddingSource, EmbeddingTable, View, ViewSpec};
pub use error::{Error, Result};
pub use eval::{approx_match, FoldSummary, MatchReport};
pub use transducer::{StepDistribution, TrainConfig, TransducerParams};
