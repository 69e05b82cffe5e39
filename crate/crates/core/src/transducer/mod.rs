//! Bi-directional recurrent transducer.
//!
//! A forward and a backward cell (both LSTM or both GRU) read the embedded
//! sequence; their hidden states are concatenated into a `2·d_h` vector per
//! position and mapped to a softmax over the four labels. Training minimizes
//! the summed per-position cross entropy, padding positions included.

mod cell;
mod checkpoint;
mod train;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cell::{CellParams, Trace};
pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint};
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainOutcome};

use crate::corpus::{AnnotatedSequence, Label, NUM_LABELS};
use crate::embedding::{CellKind, EmbeddingTable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Log-argument floor in the cross entropy.
pub const LOG_CLAMP: f64 = 1e-12;

/// Default hidden size of each direction.
pub const DEFAULT_HIDDEN_DIM: usize = 500;

/// All learnable parameters of one bi-directional transducer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerParams {
    pub cell_kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub forward: CellParams,
    pub backward: CellParams,
    /// `[NUM_LABELS × 2·d_h]`
    pub out_w: Tensor,
    /// `[NUM_LABELS × 1]`
    pub out_b: Tensor,
}

impl TransducerParams {
    pub fn zeros(cell_kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        TransducerParams {
            cell_kind,
            input_dim,
            hidden_dim,
            forward: CellParams::zeros(cell_kind, input_dim, hidden_dim),
            backward: CellParams::zeros(cell_kind, input_dim, hidden_dim),
            out_w: Tensor::zeros(NUM_LABELS, 2 * hidden_dim),
            out_b: Tensor::zeros(NUM_LABELS, 1),
        }
    }

    /// Seeded random initialization.
    pub fn init(cell_kind: CellKind, input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forward = CellParams::init(cell_kind, input_dim, hidden_dim, &mut rng);
        let backward = CellParams::init(cell_kind, input_dim, hidden_dim, &mut rng);
        let out_w = Tensor::glorot(
            NUM_LABELS,
            2 * hidden_dim,
            2 * hidden_dim,
            NUM_LABELS,
            &mut rng,
        );
        TransducerParams {
            cell_kind,
            input_dim,
            hidden_dim,
            forward,
            backward,
            out_w,
            out_b: Tensor::zeros(NUM_LABELS, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.cell_kind, self.input_dim, self.hidden_dim)
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("forward.w_x", &self.forward.w_x),
            ("forward.w_h", &self.forward.w_h),
            ("forward.bias", &self.forward.bias),
            ("backward.w_x", &self.backward.w_x),
            ("backward.w_h", &self.backward.w_h),
            ("backward.bias", &self.backward.bias),
            ("output.w", &self.out_w),
            ("output.b", &self.out_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 8] {
        [
            ("forward.w_x", &mut self.forward.w_x),
            ("forward.w_h", &mut self.forward.w_h),
            ("forward.bias", &mut self.forward.bias),
            ("backward.w_x", &mut self.backward.w_x),
            ("backward.w_h", &mut self.backward.w_h),
            ("backward.bias", &mut self.backward.bias),
            ("output.w", &mut self.out_w),
            ("output.b", &mut self.out_b),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_assign(&mut self, other: &TransducerParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(factor);
        }
    }
}

/// Per-position label distributions, `n × NUM_LABELS`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub rows: Vec<[f64; NUM_LABELS]>,
}

impl StepDistribution {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Probability of `label` at position `t`.
    pub fn prob(&self, t: usize, label: Label) -> f64 {
        self.rows[t][label.index()]
    }
}

/// A sequence resolved against an embedding table.
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    /// `n × d_e`, position order.
    pub inputs: Vec<f64>,
    pub labels: Vec<Label>,
    pub original_length: usize,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Resolves every token of `tokens` to its input vector.
pub fn embed(table: &EmbeddingTable, tokens: &[String]) -> Vec<f64> {
    let mut inputs = Vec::with_capacity(tokens.len() * table.dim());
    for token in tokens {
        let v: Arc<[f64]> = table.lookup(token);
        inputs.extend_from_slice(&v);
    }
    inputs
}

pub fn encode(table: &EmbeddingTable, seq: &AnnotatedSequence) -> EncodedSequence {
    EncodedSequence {
        inputs: embed(table, seq.tokens()),
        labels: seq.labels().to_vec(),
        original_length: seq.original_length(),
    }
}

fn softmax(logits: &[f64; NUM_LABELS]) -> [f64; NUM_LABELS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_LABELS];
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

struct ForwardPass {
    fwd: Trace,
    bwd: Trace,
    dist: StepDistribution,
}

fn check_dims(params: &TransducerParams, inputs: &[f64], n: usize) -> Result<()> {
    if inputs.len() != n * params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: n * params.input_dim,
            found: inputs.len(),
        });
    }
    Ok(())
}

fn forward_pass(params: &TransducerParams, inputs: &[f64], n: usize) -> Result<ForwardPass> {
    check_dims(params, inputs, n)?;
    let h = params.hidden_dim;
    let fwd = params.forward.run(inputs, n, false);
    let bwd = params.backward.run(inputs, n, true);
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let mut logits = [0.0; NUM_LABELS];
        logits.copy_from_slice(params.out_b.as_slice());
        params
            .out_w
            .matvec_add(&concat(fwd.hidden_at(t), bwd.hidden_at(t), h), &mut logits);
        let row = softmax(&logits);
        let sum: f64 = row.iter().sum();
        if !row.iter().all(|p| p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::NonFinite(format!(
                "output distribution at position {t}"
            )));
        }
        rows.push(row);
    }
    Ok(ForwardPass {
        fwd,
        bwd,
        dist: StepDistribution { rows },
    })
}

fn concat(a: &[f64], b: &[f64], h: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * h);
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Label distributions for pre-embedded inputs (`n × d_e`).
pub fn forward_inputs(
    params: &TransducerParams,
    inputs: &[f64],
    n: usize,
) -> Result<StepDistribution> {
    Ok(forward_pass(params, inputs, n)?.dist)
}

/// Label distributions for a (padded) token sequence.
pub fn forward(
    params: &TransducerParams,
    table: &EmbeddingTable,
    tokens: &[String],
) -> Result<StepDistribution> {
    if table.dim() != params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim,
            found: table.dim(),
        });
    }
    forward_inputs(params, &embed(table, tokens), tokens.len())
}

/// Summed cross entropy of `dist` against the gold labels, over every
/// position including padding.
pub fn loss(dist: &StepDistribution, gold: &[Label]) -> f64 {
    assert_eq!(
        dist.len(),
        gold.len(),
        "distribution and gold lengths differ"
    );
    dist.rows
        .iter()
        .zip(gold)
        .map(|(row, label)| -row[label.index()].max(LOG_CLAMP).ln())
        .sum()
}

/// Per-position argmax; ties go to the earliest label in
/// (I-ADR, I-Other, O, PAD). Positions past `original_length` are PAD.
pub fn decode(dist: &StepDistribution, original_length: usize) -> Vec<Label> {
    dist.rows
        .iter()
        .enumerate()
        .map(|(t, row)| {
            if t >= original_length {
                return Label::Pad;
            }
            let mut best = 0;
            for i in 1..NUM_LABELS {
                if row[i] > row[best] {
                    best = i;
                }
            }
            Label::from_index(best).expect("index below NUM_LABELS")
        })
        .collect()
}

/// Loss of one encoded sequence and its gradient, accumulated into `grads`.
pub fn accumulate_gradient(
    params: &TransducerParams,
    seq: &EncodedSequence,
    grads: &mut TransducerParams,
) -> Result<f64> {
    let n = seq.len();
    let h = params.hidden_dim;
    let pass = forward_pass(params, &seq.inputs, n)?;
    let mut d_fwd = vec![0.0; n * h];
    let mut d_bwd = vec![0.0; n * h];
    let mut total = 0.0;
    let mut d_concat = vec![0.0; 2 * h];
    for t in 0..n {
        let row = &pass.dist.rows[t];
        let gold = seq.labels[t].index();
        total -= row[gold].max(LOG_CLAMP).ln();
        let mut d_logits = *row;
        d_logits[gold] -= 1.0;
        let hcat = concat(pass.fwd.hidden_at(t), pass.bwd.hidden_at(t), h);
        grads.out_w.outer_rows_add(0..NUM_LABELS, &d_logits, &hcat);
        for (b, d) in grads.out_b.as_mut_slice().iter_mut().zip(&d_logits) {
            *b += d;
        }
        d_concat.fill(0.0);
        params
            .out_w
            .matvec_t_rows_add(0..NUM_LABELS, &d_logits, &mut d_concat);
        d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_concat[..h]);
        d_bwd[t * h..(t + 1) * h].copy_from_slice(&d_concat[h..]);
    }
    params
        .forward
        .backprop(&pass.fwd, &seq.inputs, &d_fwd, &mut grads.forward);
    params
        .backward
        .backprop(&pass.bwd, &seq.inputs, &d_bwd, &mut grads.backward);
    Ok(total)
}

/// Mean loss over `batch` and its exact gradient.
pub fn batch_gradient(
    params: &TransducerParams,
    batch: &[&EncodedSequence],
) -> Result<(f64, TransducerParams)> {
    let mut grads = params.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let mut total = 0.0;
    for seq in batch {
        total += accumulate_gradient(params, seq, &mut grads)?;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

/// Mean loss over `batch` (token sequences resolved through `table`) and its
/// gradient with respect to every parameter.
pub fn gradient(
    params: &TransducerParams,
    table: &EmbeddingTable,
    batch: &[AnnotatedSequence],
) -> Result<(f64, TransducerParams)> {
    let encoded: Vec<EncodedSequence> = batch.iter().map(|s| encode(table, s)).collect();
    let refs: Vec<&EncodedSequence> = encoded.iter().collect();
    batch_gradient(params, &refs)
}

/// Mean per-sequence loss without gradients.
pub fn mean_loss(params: &TransducerParams, sequences: &[&EncodedSequence]) -> Result<f64> {
    if sequences.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for seq in sequences {
        let dist = forward_inputs(params, &seq.inputs, seq.len())?;
        total += loss(&dist, &seq.labels);
    }
    Ok(total / sequences.len() as f64)
}

/// Decoded labels for a sequence.
pub fn predict(
    params: &TransducerParams,
    table: &EmbeddingTable,
    seq: &AnnotatedSequence,
) -> Result<Vec<Label>> {
    let dist = forward(params, table, seq.tokens())?;
    Ok(decode(&dist, seq.original_length()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label::*;
    use rand::Rng;

    fn tiny_inputs(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rows_are_distributions() {
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let p = TransducerParams::init(kind, 5, 4, 3);
            let dist = forward_inputs(&p, &tiny_inputs(6, 5, 1), 6).unwrap();
            assert_eq!(dist.len(), 6);
            for row in &dist.rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let p = TransducerParams::zeros(CellKind::Lstm, 3, 2);
        let dist = forward_inputs(&p, &tiny_inputs(4, 3, 2), 4).unwrap();
        for row in &dist.rows {
            for &x in row {
                assert!((x - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reversal_symmetry() {
        // Reversing the input and swapping the two cells (and the matching
        // halves of the output weights) reverses the output rows.
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let p = TransducerParams::init(kind, 3, 4, 11);
            let (n, d, h) = (5, 3, 4);
            let x = tiny_inputs(n, d, 5);
            let mut rev = Vec::with_capacity(x.len());
            for t in (0..n).rev() {
                rev.extend_from_slice(&x[t * d..(t + 1) * d]);
            }
            let mut q = p.clone();
            std::mem::swap(&mut q.forward, &mut q.backward);
            let mut w = Vec::new();
            for r in 0..NUM_LABELS {
                let row = p.out_w.row(r);
                w.extend_from_slice(&row[h..]);
                w.extend_from_slice(&row[..h]);
            }
            q.out_w = Tensor::from_vec(NUM_LABELS, 2 * h, w);
            let a = forward_inputs(&p, &x, n).unwrap();
            let b = forward_inputs(&q, &rev, n).unwrap();
            for t in 0..n {
                for i in 0..NUM_LABELS {
                    assert!((a.rows[t][i] - b.rows[n - 1 - t][i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn loss_examples() {
        let perfect = StepDistribution {
            rows: vec![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        };
        assert_eq!(loss(&perfect, &[IAdr, O]), 0.0);
        let uniform = StepDistribution {
            rows: vec![[0.25; 4]; 5],
        };
        assert!((loss(&uniform, &[O; 5]) - 5.0 * 4f64.ln()).abs() < 1e-12);
        // Clamped at 1e-12.
        let wrong = StepDistribution {
            rows: vec![[0.0, 0.0, 1.0, 0.0]],
        };
        assert!((loss(&wrong, &[IAdr]) - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn loss_matches_hand_sum() {
        let dist = StepDistribution {
            rows: vec![
                [0.1, 0.2, 0.3, 0.4],
                [0.7, 0.1, 0.1, 0.1],
                [0.05, 0.05, 0.6, 0.3],
            ],
        };
        let gold = [Pad, IAdr, O];
        // One-hot double sum written out term by term.
        let mut expected = 0.0;
        for (t, row) in dist.rows.iter().enumerate() {
            for (i, &p) in row.iter().enumerate() {
                let y = if i == gold[t].index() { 1.0 } else { 0.0 };
                expected -= y * p.ln();
            }
        }
        assert!((loss(&dist, &gold) - expected).abs() < 1e-12);
        assert!((expected - (-(0.4f64.ln()) - 0.7f64.ln() - 0.6f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn decode_rules() {
        let dist = StepDistribution {
            rows: vec![
                [0.7, 0.1, 0.1, 0.1],
                [0.25; 4],
                [0.1, 0.1, 0.1, 0.7],
                [0.9, 0.05, 0.03, 0.02],
            ],
        };
        assert_eq!(decode(&dist, 3), vec![IAdr, IAdr, Pad, Pad]);
        assert_eq!(decode(&dist, 4)[2], Pad);
        assert_eq!(decode(&dist, 4)[3], IAdr);
    }

    #[test]
    fn duplicated_example_gradient_equals_single() {
        let p = TransducerParams::init(CellKind::Gru, 3, 4, 8);
        let seq = EncodedSequence {
            inputs: tiny_inputs(3, 3, 9),
            labels: vec![IAdr, O, Pad],
            original_length: 2,
        };
        let (l1, g1) = batch_gradient(&p, &[&seq]).unwrap();
        let (l2, g2) = batch_gradient(&p, &[&seq, &seq]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
