//! K-fold experiment runners for the supervised baseline and co-training.
//!
//! Every fold derives its own seeds from the experiment seed and its index,
//! so folds can run on any number of threads with identical results. The
//! baseline for a fold uses the same initial parameters and split seed as
//! the first co-training iteration of view 1 on that fold.

use rayon::prelude::*;

use crate::corpus::{AnnotatedSequence, Corpus};
use crate::cotrain::{
    init_seed, iteration_train_config, run_cotraining, CotrainConfig, IterationRecord, ViewId,
};
use crate::embedding::View;
use crate::error::{Error, Result};
use crate::eval::{evaluate_corpus, kfold_split, FoldSummary, MatchReport};
use crate::rng;
use crate::transducer::{train, EpochRecord, TrainConfig, TransducerParams};

/// Seeds for fold `index`.
pub fn fold_configs(
    cotrain: &CotrainConfig,
    train: &TrainConfig,
    index: usize,
) -> (CotrainConfig, TrainConfig) {
    let c = CotrainConfig {
        seed: rng::derive_indexed(cotrain.seed, "fold", index as u64),
        ..cotrain.clone()
    };
    let t = TrainConfig {
        seed: rng::derive_indexed(train.seed, "fold", index as u64),
        ..train.clone()
    };
    (c, t)
}

/// One fold of a supervised run.
#[derive(Debug, Clone)]
pub struct BaselineFold {
    pub report: MatchReport,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// One fold of a co-training run.
#[derive(Debug, Clone)]
pub struct CotrainFold {
    pub report: MatchReport,
    pub log: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub summary: FoldSummary,
    pub folds: Vec<BaselineFold>,
}

#[derive(Debug, Clone)]
pub struct CotrainRun {
    pub summary: FoldSummary,
    pub folds: Vec<CotrainFold>,
}

/// Trains view 1 alone on `corpus` with the seeds co-training would use in
/// its first iteration.
pub fn train_baseline(
    corpus: &Corpus,
    view: &View,
    cotrain_cfg: &CotrainConfig,
    train_cfg: &TrainConfig,
) -> Result<crate::transducer::TrainOutcome> {
    let spec = &view.spec;
    if spec.embedding_dim != view.table.dim() {
        return Err(Error::Config(format!(
            "{} declares {}-d embeddings but its table is {}-d",
            spec.name,
            spec.embedding_dim,
            view.table.dim()
        )));
    }
    let init = TransducerParams::init(
        spec.cell_kind,
        spec.embedding_dim,
        spec.hidden_dim,
        init_seed(cotrain_cfg.seed, ViewId::View1, 0),
    );
    train(
        init,
        &view.table,
        corpus,
        &iteration_train_config(train_cfg, ViewId::View1, 1),
    )
}

fn padded_folds(
    corpus: &Corpus,
    folds: usize,
    seed: u64,
    length: usize,
) -> Result<Vec<(Corpus, Corpus)>> {
    Ok(kfold_split(corpus, folds, seed)?
        .into_iter()
        .map(|(tr, te)| (tr.repadded(length), te.repadded(length)))
        .collect())
}

/// K-fold supervised baseline with view 1.
pub fn cross_validate_baseline(
    corpus: &Corpus,
    view: &View,
    cotrain_cfg: &CotrainConfig,
    train_cfg: &TrainConfig,
    folds: usize,
) -> Result<BaselineRun> {
    let splits = padded_folds(corpus, folds, cotrain_cfg.seed, corpus.max_length)?;
    let results = splits
        .par_iter()
        .enumerate()
        .map(|(i, (tr, te))| {
            let (c, t) = fold_configs(cotrain_cfg, train_cfg, i);
            let outcome = train_baseline(tr, view, &c, &t)?;
            let (report, _) = evaluate_corpus(&outcome.params, &view.table, te)?;
            Ok(BaselineFold {
                report,
                best_epoch: outcome.best_epoch,
                epochs: outcome.epochs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineRun {
        summary: FoldSummary::from_reports(results.iter().map(|f| f.report).collect()),
        folds: results,
    })
}

/// K-fold co-training; view 1's final model is evaluated on each test fold.
pub fn cross_validate_cotrain(
    corpus: &Corpus,
    pool: &[AnnotatedSequence],
    view1: &View,
    view2: &View,
    cotrain_cfg: &CotrainConfig,
    train_cfg: &TrainConfig,
    folds: usize,
) -> Result<CotrainRun> {
    let length = pool
        .iter()
        .map(AnnotatedSequence::original_length)
        .chain(std::iter::once(corpus.max_length))
        .max()
        .unwrap_or(0);
    let splits = padded_folds(corpus, folds, cotrain_cfg.seed, length)?;
    let results = splits
        .par_iter()
        .enumerate()
        .map(|(i, (tr, te))| {
            let (c, t) = fold_configs(cotrain_cfg, train_cfg, i);
            let outcome = run_cotraining(tr, pool, view1, view2, &c, &t)?;
            let (report, _) = evaluate_corpus(&outcome.params1, &view1.table, te)?;
            Ok(CotrainFold {
                report,
                log: outcome.log,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CotrainRun {
        summary: FoldSummary::from_reports(results.iter().map(|f| f.report).collect()),
        folds: results,
    })
}
