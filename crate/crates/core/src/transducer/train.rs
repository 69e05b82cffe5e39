use rand::seq::SliceRandom;

use super::{batch_gradient, encode, mean_loss, EncodedSequence, TransducerParams};
use crate::corpus::Corpus;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng;

/// Mini-batch Adam training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss.
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 25,
            early_stop_patience: 3,
            validation_fraction: 0.10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "early_stop_patience ({}) must be below max_epochs ({})",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: TransducerParams,
    v: TransducerParams,
    step: i32,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(params: &TransducerParams, config: &TrainConfig) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    pub fn update(&mut self, params: &mut TransducerParams, grads: &TransducerParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
            let iter = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((p, &g), (m, v)) in iter {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Losses after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sequence loss over the epoch's batches.
    pub train_loss: f64,
    /// Mean per-sequence loss on the held-out split after the epoch.
    pub val_loss: f64,
}

/// Result of [`train`]: the best-validation snapshot and the epoch log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TransducerParams,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Mean loss of the training split under the initial parameters.
    pub initial_train_loss: f64,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Seeded split of `0..n` into (train, validation) indices.
pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(rng::derive_seed(seed, "validation-split")));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let train = idx.split_off(n_val);
    (train, idx)
}

fn clip(grads: &mut TransducerParams, max_norm: f64) {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// Trains `params` on `corpus` with a seeded 90:10 train/validation split,
/// returning the parameters of the epoch with the lowest validation loss.
pub fn train(
    params: TransducerParams,
    table: &EmbeddingTable,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 sequences for a validation split, got {}",
            corpus.len()
        )));
    }
    if table.dim() != params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim,
            found: table.dim(),
        });
    }
    let encoded: Vec<EncodedSequence> = corpus.examples.iter().map(|s| encode(table, s)).collect();
    let (mut train_idx, val_idx) =
        split_indices(encoded.len(), config.validation_fraction, config.seed);
    let val: Vec<&EncodedSequence> = val_idx.iter().map(|&i| &encoded[i]).collect();

    let mut params = params;
    let mut optimizer = Adam::new(&params, config);
    let mut shuffler = rng::rng(rng::derive_seed(config.seed, "epoch-shuffle"));
    let initial_train_loss = mean_loss(
        &params,
        &train_idx.iter().map(|&i| &encoded[i]).collect::<Vec<_>>(),
    )?;

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, TransducerParams)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<&EncodedSequence> = chunk.iter().map(|&i| &encoded[i]).collect();
            let (batch_loss, mut grads) = batch_gradient(&params, &batch)?;
            loss_sum += batch_loss * batch.len() as f64;
            clip(&mut grads, config.clip_norm);
            optimizer.update(&mut params, &grads);
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_loss: mean_loss(&params, &val)?,
        };
        log::debug!(
            "epoch {epoch}: train {:.6} val {:.6}",
            record.train_loss,
            record.val_loss
        );
        epochs.push(record);
        match &best {
            Some((best_val, _, _)) if record.val_loss >= *best_val => {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((record.val_loss, epoch, params.clone()));
                since_best = 0;
            }
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        epochs,
        best_epoch,
        initial_train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotatedSequence, Corpus, Label};
    use crate::embedding::CellKind;

    fn toy_corpus(n: usize) -> Corpus {
        // "bad" words are ADR, everything else O.
        let words = [
            "i", "got", "bad", "ache", "from", "pills", "today", "nausea",
        ];
        let seqs = (0..n)
            .map(|i| {
                let tokens: Vec<String> = (0..5)
                    .map(|j| words[(i * 3 + j * 5) % words.len()].to_string())
                    .collect();
                let labels = tokens
                    .iter()
                    .map(|t| {
                        if t == "ache" || t == "nausea" {
                            Label::IAdr
                        } else {
                            Label::O
                        }
                    })
                    .collect();
                AnnotatedSequence::new(tokens, labels, format!("s{i}")).unwrap()
            })
            .collect();
        Corpus::from_sequences(seqs)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss() {
        let corpus = toy_corpus(20);
        let table = EmbeddingTable::random(6, 1, &corpus.vocabulary());
        let init = TransducerParams::init(CellKind::Lstm, 6, 5, 2);
        let out = train(init, &table, &corpus, &config()).unwrap();
        assert!(out.best().train_loss < out.initial_train_loss);
    }

    #[test]
    fn returns_best_validation_snapshot() {
        let corpus = toy_corpus(20);
        let table = EmbeddingTable::random(6, 1, &corpus.vocabulary());
        let cfg = TrainConfig {
            learning_rate: 0.2,
            max_epochs: 25,
            ..config()
        };
        let init = TransducerParams::init(CellKind::Gru, 6, 5, 2);
        let out = train(init, &table, &corpus, &cfg).unwrap();
        let argmin = out
            .epochs
            .iter()
            .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
            .unwrap();
        assert_eq!(out.best_epoch, argmin.epoch);
        // Re-evaluating the returned parameters reproduces the best val loss.
        let enc: Vec<_> = corpus.examples.iter().map(|s| encode(&table, s)).collect();
        let (_, val_idx) = split_indices(enc.len(), cfg.validation_fraction, cfg.seed);
        let val: Vec<_> = val_idx.iter().map(|&i| &enc[i]).collect();
        assert!((mean_loss(&out.params, &val).unwrap() - argmin.val_loss).abs() < 1e-12);
        if out.epochs.len() < cfg.max_epochs {
            assert_eq!(out.epochs.len(), out.best_epoch + cfg.early_stop_patience);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let corpus = toy_corpus(12);
        let table = EmbeddingTable::random(4, 1, &corpus.vocabulary());
        let run = || {
            let init = TransducerParams::init(CellKind::Lstm, 4, 3, 2);
            train(init, &table, &corpus, &config()).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn rejects_tiny_corpus_and_bad_config() {
        let corpus = toy_corpus(1);
        let table = EmbeddingTable::random(4, 1, &corpus.vocabulary());
        let init = TransducerParams::init(CellKind::Lstm, 4, 3, 2);
        assert!(matches!(
            train(init.clone(), &table, &corpus, &config()),
            Err(Error::InsufficientData(_))
        ));
        let bad = TrainConfig {
            early_stop_patience: 25,
            ..config()
        };
        assert!(matches!(
            train(init, &table, &toy_corpus(4), &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_is_ninety_ten() {
        let (train, val) = split_indices(50, 0.1, 3);
        assert_eq!((train.len(), val.len()), (45, 5));
        let mut all: Vec<_> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(split_indices(2, 0.1, 3).1.len(), 1);
    }
}
