//! Adam optimizers, parameter initialization, and stable logistic numerics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const ADAM_BETA1: f64 = 0.9;
pub(crate) const ADAM_BETA2: f64 = 0.999;
pub(crate) const ADAM_EPS: f64 = 1e-8;

/// Adam over one dense parameter vector.
pub(crate) struct Adam {
    lr: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(n_params: usize, lr: f64) -> Adam {
        Adam { lr, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    /// One update over the full vector; `grads` holds the batch-mean gradient.
    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Adam over a column-partitioned matrix where most columns see no gradient
/// in a given batch. Each column keeps its own step counter and advances only
/// when touched, so untouched columns cost nothing.
pub(crate) struct ColumnAdam {
    lr: f64,
    width: usize,
    t: Vec<u64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl ColumnAdam {
    pub(crate) fn new(n_cols: usize, width: usize, lr: f64) -> ColumnAdam {
        ColumnAdam {
            lr,
            width,
            t: vec![0; n_cols],
            m: vec![0.0; n_cols * width],
            v: vec![0.0; n_cols * width],
        }
    }

    /// Updates one column in place given its gradient slice.
    pub(crate) fn step_column(&mut self, col: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.width);
        debug_assert_eq!(grads.len(), self.width);
        self.t[col] += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t[col] as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t[col] as i32);
        let base = col * self.width;
        for i in 0..self.width {
            let g = grads[i];
            let m = &mut self.m[base + i];
            let v = &mut self.v[base + i];
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            params[i] -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        }
    }
}

/// Fills `out` with draws from U(-limit, limit), limit = sqrt(6/(fan_in+fan_out)).
pub(crate) fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out.iter_mut() {
        *w = rng.gen_range(-limit..limit);
    }
}

/// Fills `out` with draws from U(-scale, scale).
pub(crate) fn scaled_uniform(rng: &mut ChaCha8Rng, scale: f64, out: &mut [f64]) {
    for w in out.iter_mut() {
        *w = rng.gen_range(-scale..scale);
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy evaluated from the logit: max(z,0) - z*y + ln(1+e^-|z|).
pub(crate) fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Fisher-Yates shuffle of row indices.
pub(crate) fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
