//! Adam over a flat parameter vector, with warm-up followed by linear decay.

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Total optimizer steps the schedule is planned for.
    pub total_steps: usize,
    /// Fraction of total steps spent warming up (default 0.1).
    pub warmup_frac: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, total_steps: usize) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, total_steps, warmup_frac: 0.1 }
    }

    /// Learning rate at a 1-based step: ramps linearly over the warm-up
    /// steps, then decays linearly toward zero at `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.lr;
        }
        let warmup = ((self.total_steps as f64 * self.warmup_frac).round() as usize).max(1);
        if step <= warmup {
            self.lr * step as f64 / warmup as f64
        } else if self.total_steps <= warmup {
            self.lr
        } else {
            let span = (self.total_steps - warmup) as f64;
            let remaining = self.total_steps.saturating_sub(step) as f64;
            // Never fully zero before the schedule ends, so the final
            // planned step still moves the parameters.
            self.lr * (remaining + 1.0).min(span) / span
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Adam { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let lr = self.cfg.lr_at(self.t);
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let cfg = AdamConfig::new(0.0, 10);
        let mut adam = Adam::new(cfg, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let orig = params.clone();
        for _ in 0..10 {
            adam.step(&mut params, &[0.3, -0.1, 2.0]);
        }
        assert_eq!(params, orig);
    }

    #[test]
    fn schedule_ramps_then_decays() {
        let cfg = AdamConfig::new(1.0, 100);
        assert!((cfg.lr_at(1) - 0.1).abs() < 1e-12);
        assert!((cfg.lr_at(10) - 1.0).abs() < 1e-12);
        assert!(cfg.lr_at(50) < 1.0);
        assert!(cfg.lr_at(99) > cfg.lr_at(100) - 1e-12);
        assert!(cfg.lr_at(100) > 0.0);
        for s in 11..100 {
            assert!(cfg.lr_at(s + 1) <= cfg.lr_at(s) + 1e-12);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let cfg = AdamConfig::new(0.05, 500);
        let mut adam = Adam::new(cfg, 1);
        let mut params = vec![3.0];
        for _ in 0..500 {
            let g = 2.0 * params[0];
            adam.step(&mut params, &[g]);
        }
        assert!(params[0].abs() < 0.2, "got {}", params[0]);
    }
}
