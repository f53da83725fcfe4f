//! Two-level gated recurrent chunker.
//!
//! A lower tanh RNN composes words into a chunk state; an upper tanh RNN
//! composes finished chunks into a sentence state. At every step a scalar
//! gate in (0, 1), computed from both previous states and the current input,
//! decides how strongly the step behaves as a chunk boundary:
//!
//! * cut branch — the lower RNN restarts from a learned start state on the
//!   current word, and the upper RNN absorbs the lower state accumulated up
//!   to the previous step (the chunk that just closed);
//! * no-cut branch — the lower RNN advances normally and the upper RNN
//!   stays idle.
//!
//! The two branches are blended linearly by the gate value, which keeps the
//! whole recursion differentiable; the same gate doubles as the chunk
//! prediction (gate high = the token begins a chunk). Hard mode instead
//! rounds the gate to {0, 1} before blending and exists for decoding and
//! diagnostics only; it does not support gradients.
//!
//! One indexing consequence of the update order: a cut at step `t` closes
//! the chunk that ends at token `t - 1`, because the upper RNN consumes the
//! lower state from step `t - 1`. The pretraining target for step `t` is
//! therefore simply "does token `t` begin a chunk".

mod backward;
mod checkpoint;
mod train;

pub use backward::backward;
pub use checkpoint::{Container, CheckpointError};
pub use train::{chunk_corpus, train_pretrain, EpochRecord, PretrainConfig, PretrainOutcome};

use crate::corpus::{OMask, Tag, TagSeq};
use crate::embeddings::EmbeddingMatrix;
use crate::util::{sigmoid, softplus};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HrnnError {
    #[error("input has {got} columns, parameters expect {want}")]
    InputDim { want: usize, got: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("gradients are undefined for a hard-mode trace")]
    HardBackward,
    #[error("trace has {trace} steps, target has {target}")]
    LengthMismatch { trace: usize, target: usize },
    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged { step: usize },
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One tanh recurrence: `tanh(w_in x + w_rec state + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub w_in: Array2<f64>,
    pub w_rec: Array2<f64>,
    pub bias: Array1<f64>,
}

impl RnnCell {
    pub fn apply(&self, input: ArrayView1<f64>, state: ArrayView1<f64>) -> Array1<f64> {
        let mut a = self.w_in.dot(&input);
        a += &self.w_rec.dot(&state);
        a += &self.bias;
        a.mapv_inplace(f64::tanh);
        a
    }

    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        RnnCell {
            w_in: Array2::zeros((out_dim, in_dim)),
            w_rec: Array2::zeros((out_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    fn random<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        RnnCell {
            w_in: uniform_matrix(out_dim, in_dim, 1.0 / (in_dim as f64).sqrt(), rng),
            w_rec: uniform_matrix(out_dim, out_dim, 1.0 / (out_dim as f64).sqrt(), rng),
            bias: Array1::zeros(out_dim),
        }
    }
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

/// All learnable tensors. The gate weight vector is ordered
/// `[previous lower state; previous upper state; input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HrnnParams {
    pub d: usize,
    pub h: usize,
    pub gate_w: Array1<f64>,
    pub gate_b: f64,
    pub lower: RnnCell,
    pub upper: RnnCell,
    /// State the lower RNN restarts from at every cut.
    pub start_lower: Array1<f64>,
    /// Initial upper state before any chunk has closed.
    pub start_upper: Array1<f64>,
}

impl HrnnParams {
    pub fn init(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let gate_dim = 2 * h + d;
        HrnnParams {
            d,
            h,
            gate_w: Array1::from_shape_fn(gate_dim, |_| {
                (rng.random::<f64>() * 2.0 - 1.0) / (gate_dim as f64).sqrt()
            }),
            gate_b: 0.0,
            lower: RnnCell::random(h, d, &mut rng),
            upper: RnnCell::random(h, h, &mut rng),
            start_lower: Array1::zeros(h),
            start_upper: Array1::zeros(h),
        }
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        HrnnParams {
            d,
            h,
            gate_w: Array1::zeros(2 * h + d),
            gate_b: 0.0,
            lower: RnnCell::zeros(h, d),
            upper: RnnCell::zeros(h, h),
            start_lower: Array1::zeros(h),
            start_upper: Array1::zeros(h),
        }
    }

    pub fn n_params(&self) -> usize {
        (2 * self.h + self.d) + 1
            + self.h * self.d + self.h * self.h + self.h
            + self.h * self.h + self.h * self.h + self.h
            + 2 * self.h
    }

    /// Canonical flat layout: gate weights, gate bias, lower cell (input,
    /// recurrent, bias), upper cell, start states. Row-major matrices.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(self.gate_w.iter());
        out.push(self.gate_b);
        for cell in [&self.lower, &self.upper] {
            out.extend(cell.w_in.iter());
            out.extend(cell.w_rec.iter());
            out.extend(cell.bias.iter());
        }
        out.extend(self.start_lower.iter());
        out.extend(self.start_upper.iter());
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut cursor = 0;
        let mut take = |len: usize| {
            let s = &flat[cursor..cursor + len];
            cursor += len;
            s
        };
        let gw = take(2 * self.h + self.d);
        self.gate_w.as_slice_mut().unwrap().copy_from_slice(gw);
        self.gate_b = take(1)[0];
        let (d, h) = (self.d, self.h);
        for (cell, in_dim) in [(&mut self.lower, d), (&mut self.upper, h)] {
            cell.w_in.as_slice_mut().unwrap().copy_from_slice(take(h * in_dim));
            cell.w_rec.as_slice_mut().unwrap().copy_from_slice(take(h * h));
            cell.bias.as_slice_mut().unwrap().copy_from_slice(take(h));
        }
        self.start_lower.as_slice_mut().unwrap().copy_from_slice(take(h));
        self.start_upper.as_slice_mut().unwrap().copy_from_slice(take(h));
        debug_assert_eq!(cursor, flat.len());
    }
}

/// Gradients of a scalar loss: one tensor per parameter, plus the gradient
/// with respect to the input embeddings.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: HrnnParams,
    pub input: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    Soft,
    Hard,
}

/// Per-step forward record. For every step the gate equals
/// `sigmoid(gate_logit)`, except the first step when `force_first_cut` is
/// set (clamped to 1) and all steps in hard mode (rounded to 0 or 1).
#[derive(Debug, Clone)]
pub struct HrnnTrace {
    pub mode: GateMode,
    pub force_first_cut: bool,
    pub gate_logits: Vec<f64>,
    pub gates: Vec<f64>,
    /// Row `t`: lower state after step `t`.
    pub lower: Array2<f64>,
    /// Row `t`: upper state after step `t`.
    pub upper: Array2<f64>,
}

impl HrnnTrace {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }
}

/// Runs the gated recursion over the embedded sentence.
pub fn forward(
    params: &HrnnParams,
    x: &EmbeddingMatrix,
    mode: GateMode,
    force_first_cut: bool,
) -> Result<HrnnTrace, HrnnError> {
    forward_inner(params, x, mode, force_first_cut, None)
}

/// Runs the state recursion under an externally supplied gate sequence
/// (teacher-forced gating). Gate logits are still computed and recorded.
pub fn forward_with_gates(
    params: &HrnnParams,
    x: &EmbeddingMatrix,
    gates: &[f64],
) -> Result<HrnnTrace, HrnnError> {
    forward_inner(params, x, GateMode::Hard, false, Some(gates))
}

fn forward_inner(
    params: &HrnnParams,
    x: &EmbeddingMatrix,
    mode: GateMode,
    force_first_cut: bool,
    forced_gates: Option<&[f64]>,
) -> Result<HrnnTrace, HrnnError> {
    if x.ncols() != params.d {
        return Err(HrnnError::InputDim { want: params.d, got: x.ncols() });
    }
    let n = x.nrows();
    let h = params.h;
    let mut trace = HrnnTrace {
        mode,
        force_first_cut,
        gate_logits: Vec::with_capacity(n),
        gates: Vec::with_capacity(n),
        lower: Array2::zeros((n, h)),
        upper: Array2::zeros((n, h)),
    };
    let mut prev_lower = params.start_lower.clone();
    let mut prev_upper = params.start_upper.clone();

    for t in 0..n {
        let xt = x.row(t);
        let logit = params.gate_w.slice(ndarray::s![0..h]).dot(&prev_lower)
            + params.gate_w.slice(ndarray::s![h..2 * h]).dot(&prev_upper)
            + params.gate_w.slice(ndarray::s![2 * h..]).dot(&xt)
            + params.gate_b;
        let mut gate = match forced_gates {
            Some(g) => g[t],
            None => sigmoid(logit),
        };
        if forced_gates.is_none() {
            if mode == GateMode::Hard {
                gate = if gate >= 0.5 { 1.0 } else { 0.0 };
            }
            if t == 0 && force_first_cut {
                gate = 1.0;
            }
        }

        let cut_lower = params.lower.apply(xt, params.start_lower.view());
        let cut_upper = params.upper.apply(prev_lower.view(), prev_upper.view());
        let nocut_lower = params.lower.apply(xt, prev_lower.view());

        let new_lower = &cut_lower * gate + &nocut_lower * (1.0 - gate);
        let new_upper = &cut_upper * gate + &prev_upper * (1.0 - gate);
        if !logit.is_finite()
            || new_lower.iter().any(|v| !v.is_finite())
            || new_upper.iter().any(|v| !v.is_finite())
        {
            return Err(HrnnError::NonFinite { step: t });
        }

        trace.gate_logits.push(logit);
        trace.gates.push(gate);
        trace.lower.row_mut(t).assign(&new_lower);
        trace.upper.row_mut(t).assign(&new_upper);
        prev_lower = new_lower;
        prev_upper = new_upper;
    }
    Ok(trace)
}

/// Thresholds gate values into tags. The first token is always `B`, masked
/// positions become `O`, and the result is normalized. The comparison is
/// inclusive: a gate exactly at the threshold reads as a boundary.
pub fn decode_tags(trace: &HrnnTrace, threshold: f64, o_mask: &OMask) -> TagSeq {
    let mut tags = Vec::with_capacity(trace.len());
    for (t, &g) in trace.gates.iter().enumerate() {
        if t == 0 || g >= threshold {
            tags.push(Tag::B);
        } else {
            tags.push(Tag::I);
        }
    }
    TagSeq::masked_normalized(tags, o_mask)
}

/// Per-step gradients of a scalar loss with respect to the recorded trace:
/// direct contributions to gate logits, gate values, and the emitted lower
/// and upper states. [`backward`] propagates these through the recursion.
#[derive(Debug, Clone)]
pub struct TraceGrads {
    pub gate_logits: Vec<f64>,
    pub gates: Vec<f64>,
    pub lower: Array2<f64>,
    pub upper: Array2<f64>,
}

impl TraceGrads {
    pub fn zeros(n: usize, h: usize) -> Self {
        TraceGrads {
            gate_logits: vec![0.0; n],
            gates: vec![0.0; n],
            lower: Array2::zeros((n, h)),
            upper: Array2::zeros((n, h)),
        }
    }
}

/// Mean binary cross-entropy between gate values and B/I targets over the
/// supervised positions: everything except the first token and `O` tokens.
/// An empty supervised set gives loss 0.
pub fn pretrain_loss(trace: &HrnnTrace, target: &TagSeq) -> Result<f64, HrnnError> {
    Ok(pretrain_loss_seeds(trace, target)?.0)
}

/// Loss plus its trace gradients (on gate logits, for stability).
pub fn pretrain_loss_seeds(trace: &HrnnTrace, target: &TagSeq) -> Result<(f64, TraceGrads), HrnnError> {
    if trace.len() != target.len() {
        return Err(HrnnError::LengthMismatch { trace: trace.len(), target: target.len() });
    }
    let h = trace.lower.ncols();
    let mut seeds = TraceGrads::zeros(trace.len(), h);
    let supervised: Vec<(usize, f64)> = target
        .tags()
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(t, tag)| match tag {
            Tag::B => Some((t, 1.0)),
            Tag::I => Some((t, 0.0)),
            Tag::O => None,
        })
        .collect();
    if supervised.is_empty() {
        return Ok((0.0, seeds));
    }
    let count = supervised.len() as f64;
    let mut loss = 0.0;
    for (t, y) in supervised {
        let z = trace.gate_logits[t];
        // BCE in terms of the logit: softplus(z) - y z.
        loss += softplus(z) - y * z;
        seeds.gate_logits[t] = (sigmoid(z) - y) / count;
    }
    Ok((loss / count, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TagSeq;
    use ndarray::array;

    fn small_x(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn zero_gate_weights_give_half_gates() {
        let mut p = HrnnParams::init(3, 4, 0);
        p.gate_w.fill(0.0);
        p.gate_b = 0.0;
        let x = small_x(5, 3, 1);
        let trace = forward(&p, &x, GateMode::Soft, false).unwrap();
        for &g in &trace.gates {
            assert!((g - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn all_cut_hard_mode_runs_upper_as_plain_rnn_over_words() {
        // Bias the gate so every step rounds to a cut.
        let mut p = HrnnParams::init(3, 4, 2);
        p.gate_b = 50.0;
        let x = small_x(6, 3, 3);
        let trace = forward(&p, &x, GateMode::Hard, false).unwrap();
        assert!(trace.gates.iter().all(|&g| g == 1.0));

        // Lower state resets every step: it only sees the current word.
        for t in 0..x.nrows() {
            let expect = p.lower.apply(x.row(t), p.start_lower.view());
            for (a, b) in trace.lower.row(t).iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        // Upper state is a plain RNN over the per-step one-word chunk states.
        let mut upper = p.start_upper.clone();
        let mut prev_lower = p.start_lower.clone();
        for t in 0..x.nrows() {
            upper = p.upper.apply(prev_lower.view(), upper.view());
            prev_lower = p.lower.apply(x.row(t), p.start_lower.view());
            for (a, b) in trace.upper.row(t).iter().zip(upper.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn teacher_forced_gates_reproduce_chunk_states() {
        // Under an arbitrary forced cut pattern, the lower state at the step
        // before each cut equals a plain RNN run over exactly that chunk's
        // words from the start state, and the upper state at the cut absorbs
        // it through one upper transition.
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for trial in 0..30u64 {
            let p = HrnnParams::init(3, 4, trial);
            let n = 2 + (trial as usize % 7);
            let x = small_x(n, 3, 500 + trial);
            let gates: Vec<f64> = (0..n)
                .map(|t| if t == 0 || rng.random::<bool>() { 1.0 } else { 0.0 })
                .collect();
            let trace = forward_with_gates(&p, &x, &gates).unwrap();
            let cuts: Vec<usize> = (0..n).filter(|&t| gates[t] == 1.0).collect();
            for w in cuts.windows(2) {
                let (open, close) = (w[0], w[1]);
                let mut state = p.start_lower.clone();
                for i in open..close {
                    state = p.lower.apply(x.row(i), state.view());
                }
                for (a, b) in trace.lower.row(close - 1).iter().zip(state.iter()) {
                    assert!((a - b).abs() < 1e-12);
                }
                let absorbed = p.upper.apply(trace.lower.row(close - 1), trace.upper.row(close - 1));
                for (a, b) in trace.upper.row(close).iter().zip(absorbed.iter()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn saturated_soft_matches_hard() {
        for seed in 0..20 {
            let mut p = HrnnParams::init(4, 5, seed);
            // Saturate the gate logits far past the linear regime.
            p.gate_w *= 400.0;
            p.gate_b = if seed % 2 == 0 { 35.0 } else { -35.0 };
            let x = small_x(7, 4, seed + 100);
            let soft = forward(&p, &x, GateMode::Soft, false).unwrap();
            let hard = forward(&p, &x, GateMode::Hard, false).unwrap();
            let all_saturated = soft.gate_logits.iter().all(|l| l.abs() >= 30.0);
            if !all_saturated {
                continue;
            }
            for t in 0..x.nrows() {
                for (a, b) in soft.lower.row(t).iter().zip(hard.lower.row(t)) {
                    assert!((a - b).abs() < 1e-9);
                }
                for (a, b) in soft.upper.row(t).iter().zip(hard.upper.row(t)) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn decode_threshold_is_inclusive() {
        let trace = HrnnTrace {
            mode: GateMode::Soft,
            force_first_cut: false,
            gate_logits: vec![0.0; 3],
            gates: vec![0.9, 0.1, 0.8],
            lower: Array2::zeros((3, 1)),
            upper: Array2::zeros((3, 1)),
        };
        let tags = decode_tags(&trace, 0.5, &OMask::new());
        assert_eq!(tags.tags(), &[Tag::B, Tag::I, Tag::B]);
        // Decoded output re-validates as a well-formed sequence, also with
        // a mask covering the first position.
        assert!(TagSeq::new(tags.tags().to_vec()).is_ok());
        let masked = decode_tags(&trace, 0.5, &[0].into_iter().collect());
        assert!(TagSeq::new(masked.tags().to_vec()).is_ok());
        assert_eq!(masked.tags(), &[Tag::O, Tag::B, Tag::B]);

        let trace = HrnnTrace { gates: vec![0.5, 0.5], gate_logits: vec![0.0; 2], lower: Array2::zeros((2, 1)), upper: Array2::zeros((2, 1)), mode: GateMode::Soft, force_first_cut: false };
        assert_eq!(decode_tags(&trace, 0.5, &OMask::new()).tags(), &[Tag::B, Tag::B]);

        let trace = HrnnTrace { gates: vec![0.1, 0.2, 0.3], gate_logits: vec![0.0; 3], lower: Array2::zeros((3, 1)), upper: Array2::zeros((3, 1)), mode: GateMode::Soft, force_first_cut: false };
        assert_eq!(decode_tags(&trace, 0.5, &OMask::new()).tags(), &[Tag::B, Tag::I, Tag::I]);
    }

    #[test]
    fn pretrain_loss_closed_forms() {
        let mk = |gates: Vec<f64>| {
            let n = gates.len();
            HrnnTrace {
                mode: GateMode::Soft,
                force_first_cut: false,
                gate_logits: gates.iter().map(|m: &f64| (m / (1.0 - m)).ln()).collect(),
                gates,
                lower: Array2::zeros((n, 1)),
                upper: Array2::zeros((n, 1)),
            }
        };
        // All gates 0.5: loss is ln 2 regardless of targets.
        let trace = mk(vec![0.5; 4]);
        let target = TagSeq::new(vec![Tag::B, Tag::I, Tag::B, Tag::I]).unwrap();
        let loss = pretrain_loss(&trace, &target).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-9);

        // One supervised position with gate 0.9 and target B.
        let trace = mk(vec![0.5, 0.9]);
        let target = TagSeq::new(vec![Tag::B, Tag::B]).unwrap();
        let loss = pretrain_loss(&trace, &target).unwrap();
        assert!((loss + 0.9f64.ln()).abs() < 1e-9, "got {loss}");

        // Gates matching hard targets: loss tends to zero.
        let trace = mk(vec![0.5, 1.0 - 1e-12, 1e-12]);
        let target = TagSeq::new(vec![Tag::B, Tag::B, Tag::I]).unwrap();
        let loss = pretrain_loss(&trace, &target).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn o_positions_and_first_token_are_excluded() {
        let trace = HrnnTrace {
            mode: GateMode::Soft,
            force_first_cut: false,
            gate_logits: vec![5.0, -3.0, 0.0, 7.0],
            gates: vec![0.9, 0.2, 0.5, 0.99],
            lower: Array2::zeros((4, 2)),
            upper: Array2::zeros((4, 2)),
        };
        let target = TagSeq::new(vec![Tag::B, Tag::O, Tag::B, Tag::O]).unwrap();
        let (loss, seeds) = pretrain_loss_seeds(&trace, &target).unwrap();
        assert_eq!(seeds.gate_logits[0], 0.0);
        assert_eq!(seeds.gate_logits[1], 0.0);
        assert_eq!(seeds.gate_logits[3], 0.0);
        assert!(seeds.gate_logits[2] != 0.0);
        assert!((loss - 2f64.ln()).abs() < 1e-9, "only the 0.5 gate is supervised");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let trace = HrnnTrace {
            mode: GateMode::Soft,
            force_first_cut: false,
            gate_logits: vec![0.0],
            gates: vec![0.5],
            lower: Array2::zeros((1, 1)),
            upper: Array2::zeros((1, 1)),
        };
        let target = TagSeq::new(vec![Tag::B, Tag::I]).unwrap();
        assert!(matches!(pretrain_loss(&trace, &target), Err(HrnnError::LengthMismatch { .. })));
    }

    #[test]
    fn flatten_round_trips() {
        let p = HrnnParams::init(3, 5, 44);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        let mut q = HrnnParams::zeros(3, 5);
        q.assign_from_flat(&flat);
        assert_eq!(p, q);
    }

    #[test]
    fn input_dim_checked() {
        let p = HrnnParams::init(3, 4, 0);
        let x = array![[1.0, 2.0]];
        assert!(matches!(forward(&p, &x, GateMode::Soft, false), Err(HrnnError::InputDim { want: 3, got: 2 })));
    }
}
