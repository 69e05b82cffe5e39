//! LSTM and GRU cells run over one direction of a sequence, with
//! back-propagation through time.
//!
//! LSTM gate blocks are ordered (input, forget, candidate, output):
//!
//! ```text
//! c_t = f ⊙ c_{t-1} + i ⊙ g        h_t = o ⊙ tanh(c_t)
//! ```
//!
//! GRU gate blocks are ordered (update, reset, candidate):
//!
//! ```text
//! n_t = tanh(W_n x_t + U_n (r ⊙ h_{t-1}) + b_n)
//! h_t = (1 - z) ⊙ n_t + z ⊙ h_{t-1}
//! ```

use rand::Rng;

use crate::embedding::CellKind;
use crate::tensor::{sigmoid, Tensor};

/// Weights of one recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `[gates·h × input_dim]`
    pub w_x: Tensor,
    /// `[gates·h × h]`
    pub w_h: Tensor,
    /// `[gates·h × 1]`
    pub bias: Tensor,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.gates() * hidden_dim;
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            w_x: Tensor::zeros(g, input_dim),
            w_h: Tensor::zeros(g, hidden_dim),
            bias: Tensor::zeros(g, 1),
        }
    }

    /// Glorot-uniform weights, zero biases, LSTM forget bias 1.
    pub fn init<R: Rng>(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let g = kind.gates() * hidden_dim;
        let mut bias = Tensor::zeros(g, 1);
        if kind == CellKind::Lstm {
            bias.as_mut_slice()[hidden_dim..2 * hidden_dim].fill(1.0);
        }
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            w_x: Tensor::glorot(g, input_dim, input_dim, g, rng),
            w_h: Tensor::glorot(g, hidden_dim, hidden_dim, g, rng),
            bias,
        }
    }

    pub fn zeros_like(&self) -> Self {
        CellParams::zeros(self.kind, self.input_dim, self.hidden_dim)
    }

    /// Runs the cell over `inputs` (`n × input_dim`, position order),
    /// right-to-left when `reverse`.
    pub fn run(&self, inputs: &[f64], n: usize, reverse: bool) -> Trace {
        let h = self.hidden_dim;
        let d = self.input_dim;
        let g = self.kind.gates() * h;
        debug_assert_eq!(inputs.len(), n * d);
        let mut trace = Trace {
            reverse,
            n,
            hidden_dim: h,
            gates: vec![0.0; n * g],
            cells: if self.kind == CellKind::Lstm {
                vec![0.0; n * h]
            } else {
                Vec::new()
            },
            hidden: vec![0.0; n * h],
        };
        let zeros = vec![0.0; h];
        let mut pre = vec![0.0; g];
        let mut rh = vec![0.0; h];
        for k in 0..n {
            let t = trace.position(k);
            let x = &inputs[t * d..(t + 1) * d];
            let (done, rest) = trace.hidden.split_at_mut(k * h);
            let h_prev: &[f64] = if k == 0 { &zeros } else { &done[(k - 1) * h..] };
            let h_out = &mut rest[..h];
            pre.copy_from_slice(self.bias.as_slice());
            self.w_x.matvec_add(x, &mut pre);
            let gates = &mut trace.gates[k * g..(k + 1) * g];
            match self.kind {
                CellKind::Lstm => {
                    self.w_h.matvec_add(h_prev, &mut pre);
                    let (cdone, crest) = trace.cells.split_at_mut(k * h);
                    let c_prev: &[f64] = if k == 0 {
                        &zeros
                    } else {
                        &cdone[(k - 1) * h..]
                    };
                    let c_out = &mut crest[..h];
                    for j in 0..h {
                        let i = sigmoid(pre[j]);
                        let f = sigmoid(pre[h + j]);
                        let gg = pre[2 * h + j].tanh();
                        let o = sigmoid(pre[3 * h + j]);
                        gates[j] = i;
                        gates[h + j] = f;
                        gates[2 * h + j] = gg;
                        gates[3 * h + j] = o;
                        let c = f * c_prev[j] + i * gg;
                        c_out[j] = c;
                        h_out[j] = o * c.tanh();
                    }
                }
                CellKind::Gru => {
                    self.w_h
                        .matvec_rows_add(0..2 * h, h_prev, &mut pre[..2 * h]);
                    for j in 0..h {
                        gates[j] = sigmoid(pre[j]);
                        gates[h + j] = sigmoid(pre[h + j]);
                        rh[j] = gates[h + j] * h_prev[j];
                    }
                    self.w_h
                        .matvec_rows_add(2 * h..3 * h, &rh, &mut pre[2 * h..]);
                    for j in 0..h {
                        let cand = pre[2 * h + j].tanh();
                        gates[2 * h + j] = cand;
                        let z = gates[j];
                        h_out[j] = (1.0 - z) * cand + z * h_prev[j];
                    }
                }
            }
        }
        trace
    }

    /// Back-propagates `d_hidden` (`n × h`, position order: the loss gradient
    /// w.r.t. each emitted hidden state) through the trace, accumulating into
    /// `grads`.
    pub fn backprop(
        &self,
        trace: &Trace,
        inputs: &[f64],
        d_hidden: &[f64],
        grads: &mut CellParams,
    ) {
        let h = self.hidden_dim;
        let d = self.input_dim;
        let g = self.kind.gates() * h;
        let n = trace.n;
        let zeros = vec![0.0; h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dpre = vec![0.0; g];
        let mut dh = vec![0.0; h];
        let mut rh = vec![0.0; h];
        let mut d_rh = vec![0.0; h];

        for k in (0..n).rev() {
            let t = trace.position(k);
            let x = &inputs[t * d..(t + 1) * d];
            let h_prev: &[f64] = if k == 0 {
                &zeros
            } else {
                &trace.hidden[(k - 1) * h..k * h]
            };
            let gates = &trace.gates[k * g..(k + 1) * g];
            for j in 0..h {
                dh[j] = d_hidden[t * h + j] + dh_next[j];
            }
            match self.kind {
                CellKind::Lstm => {
                    let c = &trace.cells[k * h..(k + 1) * h];
                    let c_prev: &[f64] = if k == 0 {
                        &zeros
                    } else {
                        &trace.cells[(k - 1) * h..k * h]
                    };
                    for j in 0..h {
                        let (i, f, gg, o) =
                            (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                        let tc = c[j].tanh();
                        let d_o = dh[j] * tc;
                        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
                        dpre[j] = dc * gg * i * (1.0 - i);
                        dpre[h + j] = dc * c_prev[j] * f * (1.0 - f);
                        dpre[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dpre[3 * h + j] = d_o * o * (1.0 - o);
                        dc_next[j] = dc * f;
                    }
                    grads.w_h.outer_rows_add(0..g, &dpre, h_prev);
                    dh_next.fill(0.0);
                    self.w_h.matvec_t_rows_add(0..g, &dpre, &mut dh_next);
                }
                CellKind::Gru => {
                    dh_next.fill(0.0);
                    for j in 0..h {
                        let (z, r, cand) = (gates[j], gates[h + j], gates[2 * h + j]);
                        rh[j] = r * h_prev[j];
                        let dz = dh[j] * (h_prev[j] - cand);
                        let dcand = dh[j] * (1.0 - z);
                        dh_next[j] = dh[j] * z;
                        dpre[j] = dz * z * (1.0 - z);
                        dpre[2 * h + j] = dcand * (1.0 - cand * cand);
                    }
                    grads.w_h.outer_rows_add(2 * h..3 * h, &dpre[2 * h..], &rh);
                    d_rh.fill(0.0);
                    self.w_h
                        .matvec_t_rows_add(2 * h..3 * h, &dpre[2 * h..], &mut d_rh);
                    for j in 0..h {
                        let r = gates[h + j];
                        dh_next[j] += d_rh[j] * r;
                        dpre[h + j] = d_rh[j] * h_prev[j] * r * (1.0 - r);
                    }
                    grads.w_h.outer_rows_add(0..2 * h, &dpre[..2 * h], h_prev);
                    self.w_h
                        .matvec_t_rows_add(0..2 * h, &dpre[..2 * h], &mut dh_next);
                }
            }
            grads.w_x.outer_rows_add(0..g, &dpre, x);
            for (b, &dp) in grads.bias.as_mut_slice().iter_mut().zip(&dpre) {
                *b += dp;
            }
        }
    }
}

/// Activations of one direction, stored in processing order.
#[derive(Debug, Clone)]
pub struct Trace {
    reverse: bool,
    n: usize,
    hidden_dim: usize,
    gates: Vec<f64>,
    cells: Vec<f64>,
    hidden: Vec<f64>,
}

impl Trace {
    #[inline]
    fn position(&self, step: usize) -> usize {
        if self.reverse {
            self.n - 1 - step
        } else {
            step
        }
    }

    /// Hidden state emitted at sequence position `t`.
    pub fn hidden_at(&self, t: usize) -> &[f64] {
        let k = if self.reverse { self.n - 1 - t } else { t };
        &self.hidden[k * self.hidden_dim..(k + 1) * self.hidden_dim]
    }
}
