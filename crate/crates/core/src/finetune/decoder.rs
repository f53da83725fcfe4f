//! One-layer attention decoder with teacher forcing.
//!
//! At target step `j` the query is a projection of the previous target
//! token's embedding (a learned start-of-sequence row at `j = 0`). Keys and
//! values are projections of the encoder's upper states; attention is
//! gate-reweighted. The context passes through a tanh layer and a vocabulary
//! softmax; the task loss is mean cross-entropy over target positions.

use super::{reweighted_attention, FinetuneError};
use crate::hrnn::TraceGrads;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Index of the start-of-sequence embedding row.
pub const SOS: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub n_heads: usize,
    pub d_k: usize,
    /// Encoder state dimension (the upper RNN's hidden size).
    pub d_model: usize,
    /// Target vocabulary; index 0 is the start-of-sequence marker.
    pub vocab: Vec<String>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub embed: Array2<f64>,
}

impl DecoderParams {
    pub fn init(n_heads: usize, d_k: usize, d_model: usize, mut vocab: Vec<String>, seed: u64) -> Self {
        assert!(n_heads >= 1 && d_k >= 1);
        vocab.insert(0, "<s>".to_string());
        let hd = n_heads * d_k;
        let v = vocab.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let scale = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        };
        DecoderParams {
            n_heads,
            d_k,
            d_model,
            w_q: mat(hd, d_model),
            w_k: mat(hd, d_model),
            w_v: mat(hd, d_model),
            w_o: mat(d_model, hd),
            b_o: Array1::zeros(d_model),
            w_out: mat(v, d_model),
            b_out: Array1::zeros(v),
            embed: mat(v, d_model),
            vocab,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, word: &str) -> Result<usize, FinetuneError> {
        self.vocab
            .iter()
            .position(|w| w == word)
            .ok_or_else(|| FinetuneError::UnknownTargetToken { word: word.to_string() })
    }

    pub fn target_ids(&self, words: &[String]) -> Result<Vec<usize>, FinetuneError> {
        words.iter().map(|w| self.token_id(w)).collect()
    }

    pub fn zeros_like(&self) -> Self {
        DecoderParams {
            n_heads: self.n_heads,
            d_k: self.d_k,
            d_model: self.d_model,
            vocab: self.vocab.clone(),
            w_q: Array2::zeros(self.w_q.dim()),
            w_k: Array2::zeros(self.w_k.dim()),
            w_v: Array2::zeros(self.w_v.dim()),
            w_o: Array2::zeros(self.w_o.dim()),
            b_o: Array1::zeros(self.b_o.len()),
            w_out: Array2::zeros(self.w_out.dim()),
            b_out: Array1::zeros(self.b_out.len()),
            embed: Array2::zeros(self.embed.dim()),
        }
    }

    pub fn n_params(&self) -> usize {
        self.w_q.len()
            + self.w_k.len()
            + self.w_v.len()
            + self.w_o.len()
            + self.b_o.len()
            + self.w_out.len()
            + self.b_out.len()
            + self.embed.len()
    }

    /// Flat layout: w_q, w_k, w_v, w_o, b_o, w_out, b_out, embed.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for m in [&self.w_q, &self.w_k, &self.w_v, &self.w_o] {
            out.extend(m.iter());
        }
        out.extend(self.b_o.iter());
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out.extend(self.embed.iter());
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
        for m in [&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o] {
            let len = m.len();
            m.as_slice_mut().unwrap().copy_from_slice(take(len));
        }
        let len = self.b_o.len();
        self.b_o.as_slice_mut().unwrap().copy_from_slice(take(len));
        let len = self.w_out.len();
        self.w_out.as_slice_mut().unwrap().copy_from_slice(take(len));
        let len = self.b_out.len();
        self.b_out.as_slice_mut().unwrap().copy_from_slice(take(len));
        let len = self.embed.len();
        self.embed.as_slice_mut().unwrap().copy_from_slice(take(len));
    }
}

/// Result of a teacher-forced pass: the mean cross-entropy, decoder
/// gradients, and the gradients flowing back into the encoder trace.
#[derive(Debug, Clone)]
pub struct DecoderPass {
    pub loss: f64,
    pub grads: DecoderParams,
    /// Gradient with respect to each upper encoder state.
    pub d_upper: Array2<f64>,
    /// Gradient with respect to each gate logit, from the reweighting term.
    pub d_gate_logits: Vec<f64>,
}

impl DecoderPass {
    /// Packages the encoder-side gradients as backward seeds.
    pub fn trace_seeds(&self, n: usize, h: usize) -> TraceGrads {
        let mut seeds = TraceGrads::zeros(n, h);
        seeds.upper.assign(&self.d_upper);
        seeds.gate_logits.copy_from_slice(&self.d_gate_logits);
        seeds
    }
}

/// Teacher-forced cross-entropy of the target sequence together with all
/// gradients.
pub fn seq_xent(
    dec: &DecoderParams,
    upper: &Array2<f64>,
    gate_logits: &[f64],
    target_ids: &[usize],
    gamma: f64,
) -> Result<DecoderPass, FinetuneError> {
    if upper.ncols() != dec.d_model {
        return Err(FinetuneError::DimMismatch { dec: dec.d_model, enc: upper.ncols() });
    }
    let n = upper.nrows();
    let m = target_ids.len();
    let hd = dec.n_heads * dec.d_k;
    let scale = 1.0 / (dec.d_k as f64).sqrt();

    // Keys and values for every encoder step, all heads stacked.
    let keys = upper.dot(&dec.w_k.t()); // n x hd
    let values = upper.dot(&dec.w_v.t()); // n x hd

    let mut grads = dec.zeros_like();
    let mut d_keys = Array2::<f64>::zeros((n, hd));
    let mut d_values = Array2::<f64>::zeros((n, hd));
    let mut d_upper = Array2::<f64>::zeros((n, dec.d_model));
    let mut d_gate_logits = vec![0.0; n];
    let mut loss = 0.0;
    let inv_m = 1.0 / m as f64;

    for j in 0..m {
        let prev = if j == 0 { SOS } else { target_ids[j - 1] };
        let e = dec.embed.row(prev);
        let q_all = dec.w_q.dot(&e); // hd

        // Forward per head.
        let mut alphas: Vec<Array1<f64>> = Vec::with_capacity(dec.n_heads);
        let mut ctx = Array1::<f64>::zeros(hd);
        for head in 0..dec.n_heads {
            let lo = head * dec.d_k;
            let hi = lo + dec.d_k;
            let q = q_all.slice(ndarray::s![lo..hi]);
            let k_head = keys.slice(ndarray::s![.., lo..hi]).to_owned();
            let alpha = reweighted_attention(q, &k_head, gate_logits, gamma)?;
            for i in 0..n {
                let v = values.slice(ndarray::s![i, lo..hi]);
                for (c, vv) in ctx.slice_mut(ndarray::s![lo..hi]).iter_mut().zip(v.iter()) {
                    *c += alpha[i] * vv;
                }
            }
            alphas.push(alpha);
        }
        let pre = dec.w_o.dot(&ctx) + &dec.b_o;
        let u = pre.mapv(f64::tanh);
        let logits = dec.w_out.dot(&u) + &dec.b_out;
        let log_z = {
            let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi + logits.mapv(|l| (l - hi).exp()).sum().ln()
        };
        loss += (log_z - logits[target_ids[j]]) * inv_m;

        // Backward through the softmax cross-entropy.
        let mut d_logits = logits.mapv(|l| (l - log_z).exp() * inv_m);
        d_logits[target_ids[j]] -= inv_m;

        for (r, &dl) in d_logits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            grads.b_out[r] += dl;
            for (c, &uv) in u.iter().enumerate() {
                grads.w_out[(r, c)] += dl * uv;
            }
        }
        let d_u = dec.w_out.t().dot(&d_logits);
        let d_pre = &d_u * &u.mapv(|t| 1.0 - t * t);
        grads.b_o += &d_pre;
        for (r, &dp) in d_pre.iter().enumerate() {
            for (c, &cv) in ctx.iter().enumerate() {
                grads.w_o[(r, c)] += dp * cv;
            }
        }
        let d_ctx = dec.w_o.t().dot(&d_pre);

        let mut d_q_all = Array1::<f64>::zeros(hd);
        for head in 0..dec.n_heads {
            let lo = head * dec.d_k;
            let hi = lo + dec.d_k;
            let alpha = &alphas[head];
            let d_ctx_head = d_ctx.slice(ndarray::s![lo..hi]);
            let q = q_all.slice(ndarray::s![lo..hi]);

            // d(alpha) from context; softmax backward to scores.
            let mut d_alpha = Array1::<f64>::zeros(n);
            for i in 0..n {
                d_alpha[i] = d_ctx_head.dot(&values.slice(ndarray::s![i, lo..hi]));
            }
            let dot = alpha.dot(&d_alpha);
            for i in 0..n {
                let d_score = alpha[i] * (d_alpha[i] - dot);
                // Score = q.k_i * scale + gamma * gate_logit_i.
                d_gate_logits[i] += gamma * d_score;
                for (qq, dk) in q
                    .iter()
                    .zip(d_keys.slice_mut(ndarray::s![i, lo..hi]).iter_mut())
                {
                    *dk += d_score * qq * scale;
                }
                let k_i = keys.slice(ndarray::s![i, lo..hi]);
                for (dq, kk) in d_q_all.slice_mut(ndarray::s![lo..hi]).iter_mut().zip(k_i.iter()) {
                    *dq += d_score * kk * scale;
                }
                // Value path.
                for (dv, dc) in d_values
                    .slice_mut(ndarray::s![i, lo..hi])
                    .iter_mut()
                    .zip(d_ctx_head.iter())
                {
                    *dv += alpha[i] * dc;
                }
            }
        }
        // Query projection and previous-token embedding.
        for (r, &dq) in d_q_all.iter().enumerate() {
            if dq == 0.0 {
                continue;
            }
            for (c, &ev) in e.iter().enumerate() {
                grads.w_q[(r, c)] += dq * ev;
            }
        }
        let d_e = dec.w_q.t().dot(&d_q_all);
        for (c, &de) in d_e.iter().enumerate() {
            grads.embed[(prev, c)] += de;
        }
    }

    // Key/value projections and the encoder states.
    grads.w_k += &d_keys.t().dot(upper);
    grads.w_v += &d_values.t().dot(upper);
    d_upper += &d_keys.dot(&dec.w_k);
    d_upper += &d_values.dot(&dec.w_v);

    Ok(DecoderPass { loss, grads, d_upper, d_gate_logits })
}
