//! Confidence of a transducer's pseudo-labels for one unlabeled sequence.
//!
//! The sequence is decoded by argmax. If no content position is labeled
//! I-ADR the sample is rejected outright. Otherwise the score combines the
//! I-ADR probabilities of the k ADR-labeled positions: by default their
//! geometric mean `(∏ p_t)^(1/k)`, or the product divided by k.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{AnnotatedSequence, Label};
use crate::embedding::EmbeddingTable;
use crate::error::Result;
use crate::transducer::{decode, forward, StepDistribution, TransducerParams};

/// How the product of ADR probabilities is normalized by the ADR count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreNormalization {
    /// k-th root of the product.
    #[default]
    GeometricMean,
    /// Product divided by k.
    DivideByK,
}

impl fmt::Display for ScoreNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreNormalization::GeometricMean => "geometric_mean",
            ScoreNormalization::DivideByK => "divide_by_k",
        })
    }
}

impl FromStr for ScoreNormalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "geometric_mean" => Ok(ScoreNormalization::GeometricMean),
            "divide_by_k" => Ok(ScoreNormalization::DivideByK),
            other => Err(format!("unknown score normalization {other:?}")),
        }
    }
}

/// A pseudo-labeled sequence with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sequence: AnnotatedSequence,
    pub score: f64,
    pub adr_word_count: usize,
}

impl ScoredSample {
    /// Threshold test (`score ≥ tau`).
    pub fn accepted(&self, tau: f64) -> bool {
        self.score >= tau
    }
}

/// Outcome of scoring one sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Scoring {
    /// No I-ADR label was decoded.
    Reject,
    Scored(ScoredSample),
}

impl Scoring {
    /// The sample, if it was scored and reaches `tau`.
    pub fn into_accepted(self, tau: f64) -> Option<ScoredSample> {
        match self {
            Scoring::Scored(s) if s.accepted(tau) => Some(s),
            _ => None,
        }
    }
}

/// Decodes `dist` and scores the result; `None` means reject. Returns the
/// decoded labels, the score and the ADR count.
pub fn score_distribution(
    dist: &StepDistribution,
    original_length: usize,
    normalization: ScoreNormalization,
) -> Option<(Vec<Label>, f64, usize)> {
    let labels = decode(dist, original_length);
    let probs: Vec<f64> = labels
        .iter()
        .enumerate()
        .take(original_length)
        .filter(|(_, &l)| l == Label::IAdr)
        .map(|(t, _)| dist.prob(t, Label::IAdr))
        .collect();
    let k = probs.len();
    if k == 0 {
        return None;
    }
    let score = match normalization {
        // Summing logs keeps long products from underflowing.
        ScoreNormalization::GeometricMean => {
            (probs.iter().map(|p| p.ln()).sum::<f64>() / k as f64).exp()
        }
        ScoreNormalization::DivideByK => probs.iter().product::<f64>() / k as f64,
    };
    Some((labels, score.clamp(0.0, 1.0), k))
}

/// Scores `seq` under a trained model.
pub fn score_sample(
    params: &TransducerParams,
    table: &EmbeddingTable,
    seq: &AnnotatedSequence,
    normalization: ScoreNormalization,
) -> Result<Scoring> {
    let dist = forward(params, table, seq.tokens())?;
    Ok(
        match score_distribution(&dist, seq.original_length(), normalization) {
            None => Scoring::Reject,
            Some((labels, score, adr_word_count)) => Scoring::Scored(ScoredSample {
                sequence: seq.relabeled(&labels)?,
                score,
                adr_word_count,
            }),
        },
    )
}
