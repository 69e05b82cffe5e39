//! Approximate-match evaluation of ADR spans and k-fold bookkeeping.
//!
//! A predicted ADR span counts as matched when it shares at least one token
//! with some gold ADR span; a gold span counts as found when some predicted
//! span overlaps it. Precision uses the first count, recall the second, so
//! both stay in `[0, 1]` under one-to-many overlaps. Counts are summed over
//! a corpus before the ratios are taken; across folds the ratios are
//! averaged and their sample standard deviation reported.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use rand::seq::SliceRandom;

use crate::corpus::{labels_to_spans, Corpus, Label, Span};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng;
use crate::transducer::{predict, TransducerParams};

/// Raw span-match counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub matched_predicted: usize,
    pub matched_gold: usize,
    pub predicted_total: usize,
    pub gold_total: usize,
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched_predicted: self.matched_predicted + o.matched_predicted,
            matched_gold: self.matched_gold + o.matched_gold,
            predicted_total: self.predicted_total + o.predicted_total,
            gold_total: self.gold_total + o.gold_total,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

/// Counts with the derived precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchReport {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchReport {
    pub fn from_counts(counts: MatchCounts) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(counts.matched_predicted, counts.predicted_total);
        let recall = ratio(counts.matched_gold, counts.gold_total);
        MatchReport {
            counts,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn adr_only(spans: &[Span]) -> Vec<Span> {
    spans
        .iter()
        .copied()
        .filter(|s| s.kind == Label::IAdr)
        .collect()
}

/// Overlap counts between predicted and gold ADR spans of one sequence.
/// Non-ADR spans are ignored.
pub fn approx_match_counts(predicted: &[Span], gold: &[Span]) -> MatchCounts {
    let predicted = adr_only(predicted);
    let gold = adr_only(gold);
    MatchCounts {
        matched_predicted: predicted
            .iter()
            .filter(|p| gold.iter().any(|g| p.overlaps(g)))
            .count(),
        matched_gold: gold
            .iter()
            .filter(|g| predicted.iter().any(|p| p.overlaps(g)))
            .count(),
        predicted_total: predicted.len(),
        gold_total: gold.len(),
    }
}

pub fn approx_match(predicted: &[Span], gold: &[Span]) -> MatchReport {
    MatchReport::from_counts(approx_match_counts(predicted, gold))
}

/// Exact-boundary counterpart of [`approx_match_counts`].
pub fn exact_match_counts(predicted: &[Span], gold: &[Span]) -> MatchCounts {
    let predicted = adr_only(predicted);
    let gold = adr_only(gold);
    let same = |a: &Span, b: &Span| a.start == b.start && a.end == b.end;
    MatchCounts {
        matched_predicted: predicted
            .iter()
            .filter(|p| gold.iter().any(|g| same(p, g)))
            .count(),
        matched_gold: gold
            .iter()
            .filter(|g| predicted.iter().any(|p| same(p, g)))
            .count(),
        predicted_total: predicted.len(),
        gold_total: gold.len(),
    }
}

/// Micro-averaged counts over aligned label sequences.
pub fn corpus_counts<'a, I>(pairs: I) -> MatchCounts
where
    I: IntoIterator<Item = (&'a [Label], &'a [Label])>,
{
    pairs
        .into_iter()
        .map(|(pred, gold)| approx_match_counts(&labels_to_spans(pred), &labels_to_spans(gold)))
        .fold(MatchCounts::default(), Add::add)
}

/// Decodes every sequence of `corpus` and scores it against the gold labels.
pub fn evaluate_corpus(
    params: &TransducerParams,
    table: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<(MatchReport, Vec<Vec<Label>>)> {
    let predictions = corpus
        .examples
        .iter()
        .map(|s| predict(params, table, s))
        .collect::<Result<Vec<_>>>()?;
    let counts = corpus_counts(
        predictions
            .iter()
            .zip(&corpus.examples)
            .map(|(p, s)| (p.as_slice(), s.labels())),
    );
    Ok((MatchReport::from_counts(counts), predictions))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-fold reports with cross-fold mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub folds: Vec<MatchReport>,
    pub precision: (f64, f64),
    pub recall: (f64, f64),
    pub f1: (f64, f64),
}

impl FoldSummary {
    pub fn from_reports(folds: Vec<MatchReport>) -> Self {
        let column =
            |f: fn(&MatchReport) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        FoldSummary {
            precision: column(|r| r.precision),
            recall: column(|r| r.recall),
            f1: column(|r| r.f1),
            folds,
        }
    }
}

/// Seeded k-fold partition: fold `i` tests on partition `i` and trains on
/// the rest. Partition sizes differ by at most one.
pub fn kfold_split(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<(Corpus, Corpus)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if corpus.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} examples cannot fill {k} folds",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::rng(rng::derive_seed(seed, "kfold")));
    let base = corpus.len() / k;
    let extra = corpus.len() % k;
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        parts.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok((0..k)
        .map(|i| {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            (corpus.select(&train), corpus.select(&parts[i]))
        })
        .collect())
}

/// Scores one trained model per fold on that fold's test split.
pub fn evaluate_run(
    models: &[TransducerParams],
    table: &EmbeddingTable,
    test_folds: &[Corpus],
) -> Result<FoldSummary> {
    if models.len() != test_folds.len() {
        return Err(Error::Config(format!(
            "{} models for {} test folds",
            models.len(),
            test_folds.len()
        )));
    }
    let reports = models
        .iter()
        .zip(test_folds)
        .map(|(m, fold)| evaluate_corpus(m, table, fold).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldSummary::from_reports(reports))
}

pub const SUMMARY_HEADER: &str = "method\tprecision\trecall\tf1";

/// One row per method: `mean±std` cells.
pub fn format_summary_table(rows: &[(&str, &FoldSummary)]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for (method, s) in rows {
        writeln!(
            out,
            "{method}\t{:.6}±{:.6}\t{:.6}±{:.6}\t{:.6}±{:.6}",
            s.precision.0, s.precision.1, s.recall.0, s.recall.1, s.f1.0, s.f1.1
        )
        .unwrap();
    }
    out
}

pub const FOLD_HEADER: &str =
    "fold\tprecision\trecall\tf1\tmatched_predicted\tmatched_gold\tpredicted_total\tgold_total";

/// One row per fold.
pub fn format_fold_table(summary: &FoldSummary) -> String {
    let mut out = format!("{FOLD_HEADER}\n");
    for (i, r) in summary.folds.iter().enumerate() {
        let c = r.counts;
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
            i + 1,
            r.precision,
            r.recall,
            r.f1,
            c.matched_predicted,
            c.matched_gold,
            c.predicted_total,
            c.gold_total
        )
        .unwrap();
    }
    out
}

/// `TOKEN<TAB>GOLD<TAB>PREDICTED`, blank line between sequences, padding
/// omitted.
pub fn format_predictions(corpus: &Corpus, predictions: &[Vec<Label>]) -> String {
    let mut out = String::new();
    for (i, (seq, pred)) in corpus.examples.iter().zip(predictions).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for ((token, gold), p) in seq
            .content_tokens()
            .iter()
            .zip(seq.content_labels())
            .zip(pred)
        {
            writeln!(out, "{token}\t{gold}\t{p}").unwrap();
        }
    }
    out
}
