//! Reverse-mode differentiation of the gated two-level recursion.
//!
//! The forward trace stores gate logits, gate values, and both state
//! sequences; branch activations are cheap to recompute from the previous
//! step's states, so the backward pass re-derives them instead of taping
//! them. Gradients accumulate for every parameter tensor, both start
//! states, and the input embedding rows.

use super::{Gradients, GateMode, HrnnError, HrnnParams, HrnnTrace, TraceGrads};
use crate::embeddings::EmbeddingMatrix;
use ndarray::{Array1, ArrayView1};

fn outer_add(acc: &mut ndarray::Array2<f64>, col: &Array1<f64>, row: ArrayView1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut target = acc.row_mut(i);
        for (j, &r) in row.iter().enumerate() {
            target[j] += c * r;
        }
    }
}

/// Exact gradients of a scalar loss whose trace-level derivatives are given
/// in `seeds`. The trace must come from a soft-mode forward pass.
pub fn backward(
    params: &HrnnParams,
    x: &EmbeddingMatrix,
    trace: &HrnnTrace,
    seeds: &TraceGrads,
) -> Result<Gradients, HrnnError> {
    if trace.mode == GateMode::Hard {
        return Err(HrnnError::HardBackward);
    }
    let n = trace.len();
    let h = params.h;
    let d = params.d;
    let mut grads = Gradients {
        params: HrnnParams::zeros(d, h),
        input: ndarray::Array2::zeros((n, d)),
    };
    let gw_lower = params.gate_w.slice(ndarray::s![0..h]);
    let gw_upper = params.gate_w.slice(ndarray::s![h..2 * h]);
    let gw_input = params.gate_w.slice(ndarray::s![2 * h..]);

    // dL/d(state emitted at step t), accumulated from step t+1.
    let mut carry_lower = Array1::<f64>::zeros(h);
    let mut carry_upper = Array1::<f64>::zeros(h);

    for t in (0..n).rev() {
        let xt = x.row(t);
        let prev_lower =
            if t == 0 { params.start_lower.view() } else { trace.lower.row(t - 1) };
        let prev_upper =
            if t == 0 { params.start_upper.view() } else { trace.upper.row(t - 1) };
        let gate = trace.gates[t];

        // Branch activations, recomputed.
        let cut_lower = params.lower.apply(xt, params.start_lower.view());
        let nocut_lower = params.lower.apply(xt, prev_lower);
        let cut_upper = params.upper.apply(prev_lower, prev_upper);

        let g_low: Array1<f64> = &seeds.lower.row(t) + &carry_lower;
        let g_up: Array1<f64> = &seeds.upper.row(t) + &carry_upper;

        // Gate path: the blend weights both branches.
        let mut d_gate = seeds.gates[t];
        for i in 0..h {
            d_gate += g_low[i] * (cut_lower[i] - nocut_lower[i]);
            d_gate += g_up[i] * (cut_upper[i] - prev_upper[i]);
        }
        let forced = t == 0 && trace.force_first_cut;
        let d_logit = seeds.gate_logits[t]
            + if forced { 0.0 } else { d_gate * gate * (1.0 - gate) };

        let mut d_prev_lower = Array1::<f64>::zeros(h);
        let mut d_prev_upper: Array1<f64> = &g_up * (1.0 - gate); // idle upper branch

        // Lower cut branch: restarts from the learned start state.
        let t_cl: Array1<f64> =
            (0..h).map(|i| g_low[i] * gate * (1.0 - cut_lower[i] * cut_lower[i])).collect();
        outer_add(&mut grads.params.lower.w_in, &t_cl, xt);
        outer_add(&mut grads.params.lower.w_rec, &t_cl, params.start_lower.view());
        grads.params.lower.bias += &t_cl;
        grads.params.start_lower += &params.lower.w_rec.t().dot(&t_cl);
        let mut dxt = params.lower.w_in.t().dot(&t_cl);

        // Lower no-cut branch: ordinary recurrence.
        let t_nl: Array1<f64> =
            (0..h).map(|i| g_low[i] * (1.0 - gate) * (1.0 - nocut_lower[i] * nocut_lower[i])).collect();
        outer_add(&mut grads.params.lower.w_in, &t_nl, xt);
        outer_add(&mut grads.params.lower.w_rec, &t_nl, prev_lower);
        grads.params.lower.bias += &t_nl;
        d_prev_lower += &params.lower.w_rec.t().dot(&t_nl);
        dxt += &params.lower.w_in.t().dot(&t_nl);

        // Upper cut branch: absorbs the previous lower state.
        let t_cu: Array1<f64> =
            (0..h).map(|i| g_up[i] * gate * (1.0 - cut_upper[i] * cut_upper[i])).collect();
        outer_add(&mut grads.params.upper.w_in, &t_cu, prev_lower);
        outer_add(&mut grads.params.upper.w_rec, &t_cu, prev_upper);
        grads.params.upper.bias += &t_cu;
        d_prev_lower += &params.upper.w_in.t().dot(&t_cu);
        d_prev_upper += &params.upper.w_rec.t().dot(&t_cu);

        // Gate inputs.
        if d_logit != 0.0 {
            for i in 0..h {
                grads.params.gate_w[i] += d_logit * prev_lower[i];
                grads.params.gate_w[h + i] += d_logit * prev_upper[i];
                d_prev_lower[i] += d_logit * gw_lower[i];
                d_prev_upper[i] += d_logit * gw_upper[i];
            }
            for j in 0..d {
                grads.params.gate_w[2 * h + j] += d_logit * xt[j];
                dxt[j] += d_logit * gw_input[j];
            }
            grads.params.gate_b += d_logit;
        }

        grads.input.row_mut(t).assign(&dxt);
        if t == 0 {
            grads.params.start_lower += &d_prev_lower;
            grads.params.start_upper += &d_prev_upper;
        } else {
            carry_lower = d_prev_lower;
            carry_upper = d_prev_upper;
        }
    }
    Ok(grads)
}
