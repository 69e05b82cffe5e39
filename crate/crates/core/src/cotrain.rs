//! Two-view co-training.
//!
//! Both transducers are initialized once. Each iteration trains M1 (bi-LSTM,
//! view 1) on T1 and M2 (bi-GRU, view 2) on T2, then scans the unlabeled
//! pool in its fixed order. A sequence M1 scores at or above `tau` moves,
//! with M1's pseudo-labels, into T2; failing that, a sequence M2 accepts
//! moves into T1. The loop ends after `max_iterations`, when the pool is
//! empty, or after an iteration that accepted nothing.

use std::fmt;

use rayon::prelude::*;

use crate::confidence::{score_sample, ScoreNormalization, Scoring};
use crate::corpus::{AnnotatedSequence, Corpus};
use crate::embedding::{CellKind, View};
use crate::error::{Error, Result};
use crate::rng;
use crate::transducer::{train, TrainConfig, TransducerParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CotrainConfig {
    pub tau: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub score_normalization: ScoreNormalization,
    /// Re-initialize both models at the start of every iteration instead of
    /// carrying parameters over.
    pub reinit_each_iteration: bool,
}

impl Default for CotrainConfig {
    fn default() -> Self {
        CotrainConfig {
            tau: 0.5,
            max_iterations: 5,
            seed: 0,
            score_normalization: ScoreNormalization::GeometricMean,
            reinit_each_iteration: false,
        }
    }
}

impl CotrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which side of the co-training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewId {
    View1,
    View2,
}

impl ViewId {
    pub fn other(self) -> ViewId {
        match self {
            ViewId::View1 => ViewId::View2,
            ViewId::View2 => ViewId::View1,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            ViewId::View1 => "view1",
            ViewId::View2 => "view2",
        }
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Seed for a view's initial parameters.
pub fn init_seed(seed: u64, view: ViewId, iteration: usize) -> u64 {
    rng::derive_indexed(seed, &format!("{}-init", view.tag()), iteration as u64)
}

/// Training config for a view in a given (1-based) iteration; the split and
/// shuffle seed is offset per view and iteration.
pub fn iteration_train_config(
    train_cfg: &TrainConfig,
    view: ViewId,
    iteration: usize,
) -> TrainConfig {
    TrainConfig {
        seed: rng::derive_indexed(
            train_cfg.seed,
            &format!("{}-train", view.tag()),
            iteration as u64,
        ),
        ..train_cfg.clone()
    }
}

/// Provenance of one pool sequence that moved into a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub source_id: String,
    /// Position in the original pool.
    pub pool_index: usize,
    pub iteration: usize,
    pub scored_by: ViewId,
    pub recipient: ViewId,
    pub score: f64,
}

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub accepted_t1: usize,
    pub accepted_t2: usize,
    pub pool_remaining: usize,
    pub t1_size: usize,
    pub t2_size: usize,
    pub train_loss_1: f64,
    pub train_loss_2: f64,
    pub val_loss_1: f64,
    pub val_loss_2: f64,
}

pub const LOG_HEADER: &str =
    "iteration\taccepted_T1\taccepted_T2\tpool_remaining\ttrain_loss_1\ttrain_loss_2\tval_loss_1\tval_loss_2";

impl IterationRecord {
    pub fn to_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}",
            self.iteration,
            self.accepted_t1,
            self.accepted_t2,
            self.pool_remaining,
            self.train_loss_1,
            self.train_loss_2,
            self.val_loss_1,
            self.val_loss_2
        )
    }
}

/// Renders the iteration log as a tab-separated table.
pub fn format_log(log: &[IterationRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&r.to_row());
        out.push('\n');
    }
    out
}

/// Mutable state of the co-training loop.
#[derive(Debug, Clone)]
pub struct CotrainState {
    pub t1: Vec<AnnotatedSequence>,
    pub t2: Vec<AnnotatedSequence>,
    /// Remaining pool entries with their original pool index.
    pub pool: Vec<(usize, AnnotatedSequence)>,
    pub initial_pool: usize,
    pub iteration: usize,
    pub params1: TransducerParams,
    pub params2: TransducerParams,
    pub log: Vec<IterationRecord>,
    pub exchanges: Vec<Exchange>,
    labeled_size: usize,
}

impl CotrainState {
    /// Conservation and direction checks.
    pub fn check_invariants(&self) -> Result<()> {
        let into_t1 = self
            .exchanges
            .iter()
            .filter(|e| e.recipient == ViewId::View1)
            .count();
        let into_t2 = self.exchanges.len() - into_t1;
        if self.initial_pool != self.pool.len() + into_t1 + into_t2 {
            return Err(Error::Config(format!(
                "pool conservation violated: {} != {} + {} + {}",
                self.initial_pool,
                self.pool.len(),
                into_t1,
                into_t2
            )));
        }
        if self.t1.len() != self.labeled_size + into_t1
            || self.t2.len() != self.labeled_size + into_t2
        {
            return Err(Error::Config(
                "training-set sizes disagree with the exchange ledger".into(),
            ));
        }
        if self
            .exchanges
            .iter()
            .any(|e| e.recipient != e.scored_by.other())
        {
            return Err(Error::Config(
                "a sample was given to the model that scored it".into(),
            ));
        }
        Ok(())
    }

    fn corpus(&self, view: ViewId, max_length: usize) -> Corpus {
        Corpus {
            examples: match view {
                ViewId::View1 => self.t1.clone(),
                ViewId::View2 => self.t2.clone(),
            },
            max_length,
        }
    }
}

/// Final models, the iteration log and the exchange ledger.
#[derive(Debug, Clone)]
pub struct CotrainOutcome {
    pub params1: TransducerParams,
    pub params2: TransducerParams,
    pub log: Vec<IterationRecord>,
    pub exchanges: Vec<Exchange>,
    pub t1: Vec<AnnotatedSequence>,
    pub t2: Vec<AnnotatedSequence>,
    pub pool_remaining: Vec<AnnotatedSequence>,
}

fn check_views(view1: &View, view2: &View) -> Result<()> {
    for (view, kind) in [(view1, CellKind::Lstm), (view2, CellKind::Gru)] {
        if view.spec.cell_kind != kind {
            return Err(Error::Config(format!(
                "{} must use a {kind} transducer, got {}",
                view.spec.name, view.spec.cell_kind
            )));
        }
        if view.spec.embedding_dim != view.table.dim() {
            return Err(Error::Config(format!(
                "{} declares {}-d embeddings but its table is {}-d",
                view.spec.name,
                view.spec.embedding_dim,
                view.table.dim()
            )));
        }
        if view.spec.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "{} has a zero hidden size",
                view.spec.name
            )));
        }
    }
    Ok(())
}

/// Runs co-training on `labeled` with the unlabeled `pool`.
///
/// All sequences are padded to one common length. An empty pool reduces to
/// one supervised round per view.
pub fn run_cotraining(
    labeled: &Corpus,
    pool: &[AnnotatedSequence],
    view1: &View,
    view2: &View,
    cfg: &CotrainConfig,
    train_cfg: &TrainConfig,
) -> Result<CotrainOutcome> {
    cfg.validate()?;
    train_cfg.validate()?;
    check_views(view1, view2)?;
    if labeled.is_empty() {
        return Err(Error::InsufficientData(
            "co-training needs labeled data".into(),
        ));
    }

    let max_length = labeled
        .examples
        .iter()
        .chain(pool)
        .map(AnnotatedSequence::original_length)
        .max()
        .unwrap_or(0);
    let labeled = labeled.repadded(max_length);
    let init = |view: ViewId, iteration: usize| {
        let spec = match view {
            ViewId::View1 => &view1.spec,
            ViewId::View2 => &view2.spec,
        };
        TransducerParams::init(
            spec.cell_kind,
            spec.embedding_dim,
            spec.hidden_dim,
            init_seed(cfg.seed, view, iteration),
        )
    };

    let mut state = CotrainState {
        t1: labeled.examples.clone(),
        t2: labeled.examples.clone(),
        pool: pool
            .iter()
            .map(|s| s.padded(max_length))
            .enumerate()
            .collect(),
        initial_pool: pool.len(),
        iteration: 0,
        params1: init(ViewId::View1, 0),
        params2: init(ViewId::View2, 0),
        log: Vec::new(),
        exchanges: Vec::new(),
        labeled_size: labeled.len(),
    };

    loop {
        state.iteration += 1;
        let it = state.iteration;
        if cfg.reinit_each_iteration && it > 1 {
            state.params1 = init(ViewId::View1, it);
            state.params2 = init(ViewId::View2, it);
        }

        let out1 = train(
            state.params1.clone(),
            &view1.table,
            &state.corpus(ViewId::View1, max_length),
            &iteration_train_config(train_cfg, ViewId::View1, it),
        )?;
        let out2 = train(
            state.params2.clone(),
            &view2.table,
            &state.corpus(ViewId::View2, max_length),
            &iteration_train_config(train_cfg, ViewId::View2, it),
        )?;
        state.params1 = out1.params.clone();
        state.params2 = out2.params.clone();

        // Scoring is order-independent; acceptance is applied in pool order.
        let scores1: Vec<Scoring> = state
            .pool
            .par_iter()
            .map(|(_, s)| score_sample(&state.params1, &view1.table, s, cfg.score_normalization))
            .collect::<Result<_>>()?;
        let pending: Vec<bool> = scores1
            .iter()
            .map(|s| !matches!(s, Scoring::Scored(x) if x.accepted(cfg.tau)))
            .collect();
        let scores2: Vec<Option<Scoring>> = state
            .pool
            .par_iter()
            .zip(&pending)
            .map(|((_, s), &p)| {
                p.then(|| score_sample(&state.params2, &view2.table, s, cfg.score_normalization))
                    .transpose()
            })
            .collect::<Result<_>>()?;

        let (mut accepted_t1, mut accepted_t2) = (0, 0);
        let mut remaining = Vec::with_capacity(state.pool.len());
        let pool = std::mem::take(&mut state.pool);
        for (((pool_index, seq), s1), s2) in pool.into_iter().zip(scores1).zip(scores2) {
            let (scored_by, sample) = if let Some(sample) = s1.into_accepted(cfg.tau) {
                (ViewId::View1, sample)
            } else if let Some(sample) = s2.and_then(|s| s.into_accepted(cfg.tau)) {
                (ViewId::View2, sample)
            } else {
                remaining.push((pool_index, seq));
                continue;
            };
            let recipient = scored_by.other();
            match recipient {
                ViewId::View1 => {
                    state.t1.push(sample.sequence);
                    accepted_t1 += 1;
                }
                ViewId::View2 => {
                    state.t2.push(sample.sequence);
                    accepted_t2 += 1;
                }
            }
            state.exchanges.push(Exchange {
                source_id: seq.source_id().to_string(),
                pool_index,
                iteration: it,
                scored_by,
                recipient,
                score: sample.score,
            });
        }
        state.pool = remaining;

        let b1 = out1.best();
        let b2 = out2.best();
        state.log.push(IterationRecord {
            iteration: it,
            accepted_t1,
            accepted_t2,
            pool_remaining: state.pool.len(),
            t1_size: state.t1.len(),
            t2_size: state.t2.len(),
            train_loss_1: b1.train_loss,
            train_loss_2: b2.train_loss,
            val_loss_1: b1.val_loss,
            val_loss_2: b2.val_loss,
        });
        state.check_invariants()?;
        log::info!(
            "iteration {it}: +{accepted_t1} to T1, +{accepted_t2} to T2, {} left in pool",
            state.pool.len()
        );

        if it >= cfg.max_iterations || state.pool.is_empty() || accepted_t1 + accepted_t2 == 0 {
            break;
        }
    }

    Ok(CotrainOutcome {
        params1: state.params1,
        params2: state.params2,
        log: state.log,
        exchanges: state.exchanges,
        t1: state.t1,
        t2: state.t2,
        pool_remaining: state.pool.into_iter().map(|(_, s)| s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingSource, EmbeddingTable, ViewSpec};
    use crate::synth::{generate, SynthConfig};

    fn views(corpus: &Corpus, pool: &[AnnotatedSequence]) -> (View, View) {
        let mut vocab = corpus.vocabulary();
        for s in pool {
            vocab.extend(s.content_tokens().iter().cloned());
        }
        let s1 = ViewSpec::view1(EmbeddingSource::Random).with_dims(6, 5);
        let s2 = ViewSpec::view2(EmbeddingSource::Random).with_dims(5, 5);
        let t1 = s1.load_table(1, &vocab).unwrap();
        let t2 = s2.load_table(2, &vocab).unwrap();
        (View::new(s1, t1).unwrap(), View::new(s2, t2).unwrap())
    }

    fn quick_train() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            max_epochs: 4,
            early_stop_patience: 2,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn small_task(labeled: usize, unlabeled: usize) -> (Corpus, Vec<AnnotatedSequence>) {
        let data = generate(&SynthConfig {
            labeled,
            unlabeled,
            seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        (data.labeled_corpus(), data.unlabeled_sequences())
    }

    #[test]
    fn empty_pool_runs_one_round() {
        let (corpus, _) = small_task(12, 0);
        let (v1, v2) = views(&corpus, &[]);
        let out = run_cotraining(
            &corpus,
            &[],
            &v1,
            &v2,
            &CotrainConfig::default(),
            &quick_train(),
        )
        .unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].accepted_t1 + out.log[0].accepted_t2, 0);
    }

    #[test]
    fn unreachable_threshold_stops_after_first_iteration() {
        let (corpus, pool) = small_task(12, 30);
        let (v1, v2) = views(&corpus, &pool);
        let cfg = CotrainConfig {
            tau: 1.0,
            ..CotrainConfig::default()
        };
        let out = run_cotraining(&corpus, &pool, &v1, &v2, &cfg, &quick_train()).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].pool_remaining, 30);
        assert!(out.exchanges.is_empty());
    }

    #[test]
    fn ledger_invariants_hold() {
        let (corpus, pool) = small_task(30, 60);
        let (v1, v2) = views(&corpus, &pool);
        let cfg = CotrainConfig {
            tau: 0.3,
            max_iterations: 3,
            ..CotrainConfig::default()
        };
        let train_cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 15,
            early_stop_patience: 3,
            ..quick_train()
        };
        let out = run_cotraining(&corpus, &pool, &v1, &v2, &cfg, &train_cfg).unwrap();
        assert!(out.log.len() <= cfg.max_iterations);
        let mut accepted = 0;
        let mut prev = (corpus.len(), corpus.len(), pool.len());
        for r in &out.log {
            accepted += r.accepted_t1 + r.accepted_t2;
            assert_eq!(pool.len(), r.pool_remaining + accepted);
            assert!(r.t1_size >= prev.0 && r.t2_size >= prev.1 && r.pool_remaining <= prev.2);
            prev = (r.t1_size, r.t2_size, r.pool_remaining);
        }
        assert!(accepted > 0, "a low threshold should accept something");
        for e in &out.exchanges {
            assert_eq!(e.recipient, e.scored_by.other());
            let (target, other) = match e.recipient {
                ViewId::View1 => (&out.t1, &out.t2),
                ViewId::View2 => (&out.t2, &out.t1),
            };
            assert!(target.iter().any(|s| s.source_id() == e.source_id));
            assert!(!other.iter().any(|s| s.source_id() == e.source_id));
            assert!(!out
                .pool_remaining
                .iter()
                .any(|s| s.source_id() == e.source_id));
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        let (corpus, _) = small_task(6, 0);
        let (v1, v2) = views(&corpus, &[]);
        let bad_tau = CotrainConfig {
            tau: 1.5,
            ..CotrainConfig::default()
        };
        assert!(matches!(
            run_cotraining(&corpus, &[], &v1, &v2, &bad_tau, &quick_train()),
            Err(Error::Config(_))
        ));
        // Views swapped: view1 slot holds the GRU.
        assert!(matches!(
            run_cotraining(
                &corpus,
                &[],
                &v2,
                &v1,
                &CotrainConfig::default(),
                &quick_train()
            ),
            Err(Error::Config(_))
        ));
        let mut mismatched = v1.clone();
        mismatched.table = EmbeddingTable::empty(9, 0);
        assert!(matches!(
            run_cotraining(
                &corpus,
                &[],
                &mismatched,
                &v2,
                &CotrainConfig::default(),
                &quick_train()
            ),
            Err(Error::Config(_))
        ));
    }
}
