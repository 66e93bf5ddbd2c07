//! Many-to-one LSTM over id sequences: embedding, a single recurrent layer
//! with input dropout and L2 penalties on both kernels, and a sigmoid output
//! read from the hidden state at the last real token, trained with Adam on
//! binary cross-entropy via truncated-free BPTT over each document's length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::models::optim::{bce_with_logits, glorot_uniform, scaled_uniform, shuffled_indices, sigmoid, Adam};
use crate::models::{
    check_rows_match, check_two_classes, target, threshold_accuracy, EarlyStopMonitor,
    EarlyStopping, EmbeddingMode, FeaturesRef, Predictor, TrainedModel, TrainingHistory,
};
use crate::util::splitmix64;
use crate::vectorize::{EmbeddingTable, IdSequences, PAD_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub units: usize,
    /// L2 penalty on the input kernel.
    #[serde(alias = "KR")]
    pub kr: f64,
    /// L2 penalty on the recurrent kernel.
    #[serde(alias = "RR", alias = "KK")]
    pub rr: f64,
    /// Input dropout rate; one mask per document per epoch, shared by all
    /// timesteps.
    #[serde(alias = "D")]
    pub dropout: f64,
    pub embedding: EmbeddingMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            units: 8,
            kr: 0.0,
            rr: 0.0,
            dropout: 0.0,
            embedding: EmbeddingMode::default(),
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            early_stopping: None,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::InvalidConfig("lstm units must be >= 1".into()));
        }
        if !(self.kr >= 0.0 && self.rr >= 0.0) {
            return Err(Error::InvalidConfig("lstm kernel penalties must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "lstm dropout must satisfy 0 <= d < 1, got {}",
                self.dropout
            )));
        }
        if let EmbeddingMode::Trainable { dim } = self.embedding {
            if dim == 0 {
                return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
            }
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be finite and > 0".into()));
        }
        if let Some(es) = &self.early_stopping {
            es.validate()?;
        }
        Ok(())
    }
}

/// Trained LSTM weights over one flat vector laid out as
/// [embedding (trainable mode only) | input kernel | recurrent kernel |
/// gate biases | output weights | output bias].
/// Both kernels are row-major over the 4 * units gate rows, ordered input,
/// forget, cell, output; row r of the input kernel has width embed_dim and
/// row r of the recurrent kernel has width units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub vocab_len: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    pub units: usize,
    pub trainable_embedding: bool,
    pub flat: Vec<f64>,
    /// Embedding matrix when it is frozen rather than trained.
    pub frozen_embed: Option<Vec<f64>>,
    /// Fingerprint of the word-vector table behind a frozen embedding.
    pub embedding_fingerprint: Option<String>,
}

/// Everything the backward pass replays: post-dropout inputs and the gate,
/// cell, and hidden activations of each step.
struct Tape {
    steps: usize,
    /// steps * embed_dim post-dropout inputs.
    xs: Vec<f64>,
    /// steps * 4 * units gate activations in row order (i, f, g, o).
    gates: Vec<f64>,
    /// steps * units cell states.
    cs: Vec<f64>,
    /// steps * units values of tanh(c).
    tcs: Vec<f64>,
    /// steps * units hidden states.
    hs: Vec<f64>,
    logit: f64,
}

struct SampleGrad {
    loss: f64,
    tail: Vec<f64>,
    embed_rows: Vec<(u32, Vec<f64>)>,
}

impl LstmParams {
    fn emb_len(&self) -> usize {
        self.vocab_len * self.embed_dim
    }

    fn off_w(&self) -> usize {
        if self.trainable_embedding {
            self.emb_len()
        } else {
            0
        }
    }

    fn w_len(&self) -> usize {
        4 * self.units * self.embed_dim
    }

    fn off_u(&self) -> usize {
        self.off_w() + self.w_len()
    }

    fn u_len(&self) -> usize {
        4 * self.units * self.units
    }

    fn off_b(&self) -> usize {
        self.off_u() + self.u_len()
    }

    fn off_wo(&self) -> usize {
        self.off_b() + 4 * self.units
    }

    fn off_bo(&self) -> usize {
        self.off_wo() + self.units
    }

    fn flat_len(&self) -> usize {
        self.off_bo() + 1
    }

    fn embed_row(&self, id: u32) -> &[f64] {
        let e = self.embed_dim;
        let base = id as usize * e;
        match &self.frozen_embed {
            Some(table) => &table[base..base + e],
            None => &self.flat[base..base + e],
        }
    }

    /// Gate pre-activations for one step: z = b + W x + U h_prev.
    fn gate_preacts(&self, x: &[f64], h_prev: &[f64], z: &mut [f64]) {
        let (e, u) = (self.embed_dim, self.units);
        let w = &self.flat[self.off_w()..self.off_w() + self.w_len()];
        let urec = &self.flat[self.off_u()..self.off_u() + self.u_len()];
        let b = &self.flat[self.off_b()..self.off_b() + 4 * u];
        z.copy_from_slice(b);
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = *zr;
            for (xv, wv) in x.iter().zip(&w[r * e..(r + 1) * e]) {
                acc += xv * wv;
            }
            for (hv, uv) in h_prev.iter().zip(&urec[r * u..(r + 1) * u]) {
                acc += hv * uv;
            }
            *zr = acc;
        }
    }

    /// An empty document still runs one step, over the padding row.
    fn steps_for(len: usize) -> usize {
        len.max(1)
    }

    fn logit(&self, ids: &[u32], len: usize) -> f64 {
        let (e, u) = (self.embed_dim, self.units);
        let steps = Self::steps_for(len);
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        let mut z = vec![0.0; 4 * u];
        let mut x = vec![0.0; e];
        for &id in ids.iter().take(steps) {
            x.copy_from_slice(self.embed_row(id));
            self.gate_preacts(&x, &h, &mut z);
            for k in 0..u {
                let i_a = sigmoid(z[k]);
                let f_a = sigmoid(z[u + k]);
                let g_a = z[2 * u + k].tanh();
                let o_a = sigmoid(z[3 * u + k]);
                c[k] = f_a * c[k] + i_a * g_a;
                h[k] = o_a * c[k].tanh();
            }
        }
        let wo = &self.flat[self.off_wo()..self.off_wo() + u];
        self.flat[self.off_bo()] + h.iter().zip(wo).map(|(&hv, &w)| hv * w).sum::<f64>()
    }

    pub(crate) fn scores(&self, s: &IdSequences) -> Result<Vec<f64>> {
        if s.max_len != self.max_len || s.vocab_len != self.vocab_len {
            return Err(Error::ShapeMismatch(format!(
                "lstm expects max_len {} over vocab {}, sequences have max_len {} over vocab {}",
                self.max_len, self.vocab_len, s.max_len, s.vocab_len
            )));
        }
        Ok((0..s.n_rows())
            .into_par_iter()
            .map(|i| sigmoid(self.logit(s.row(i), s.lengths[i])))
            .collect())
    }

    fn forward(&self, ids: &[u32], len: usize, mask: Option<&[f64]>) -> Tape {
        let (e, u) = (self.embed_dim, self.units);
        let steps = Self::steps_for(len);
        let mut tape = Tape {
            steps,
            xs: vec![0.0; steps * e],
            gates: vec![0.0; steps * 4 * u],
            cs: vec![0.0; steps * u],
            tcs: vec![0.0; steps * u],
            hs: vec![0.0; steps * u],
            logit: 0.0,
        };
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        let mut z = vec![0.0; 4 * u];
        for (t, &id) in ids.iter().enumerate().take(steps) {
            let x = &mut tape.xs[t * e..(t + 1) * e];
            x.copy_from_slice(self.embed_row(id));
            if let Some(m) = mask {
                for (xv, &mv) in x.iter_mut().zip(m) {
                    *xv *= mv;
                }
            }
            self.gate_preacts(&tape.xs[t * e..(t + 1) * e], &h, &mut z);
            let gates = &mut tape.gates[t * 4 * u..(t + 1) * 4 * u];
            for k in 0..u {
                let i_a = sigmoid(z[k]);
                let f_a = sigmoid(z[u + k]);
                let g_a = z[2 * u + k].tanh();
                let o_a = sigmoid(z[3 * u + k]);
                gates[k] = i_a;
                gates[u + k] = f_a;
                gates[2 * u + k] = g_a;
                gates[3 * u + k] = o_a;
                c[k] = f_a * c[k] + i_a * g_a;
                let tc = c[k].tanh();
                h[k] = o_a * tc;
                tape.cs[t * u + k] = c[k];
                tape.tcs[t * u + k] = tc;
                tape.hs[t * u + k] = h[k];
            }
        }
        let wo = &self.flat[self.off_wo()..self.off_wo() + u];
        tape.logit =
            self.flat[self.off_bo()] + h.iter().zip(wo).map(|(&hv, &w)| hv * w).sum::<f64>();
        tape
    }

    /// Cross-entropy gradient of one sample via BPTT (no penalty terms).
    fn sample_grad(&self, ids: &[u32], len: usize, y: f64, mask: Option<&[f64]>) -> SampleGrad {
        let (e, u) = (self.embed_dim, self.units);
        let tape = self.forward(ids, len, mask);
        let loss = bce_with_logits(tape.logit, y);
        let dlogit = sigmoid(tape.logit) - y;

        let off_w = self.off_w();
        let mut tail = vec![0.0; self.flat_len() - off_w];
        let (rw, ru) = (0, self.w_len());
        let rb = self.off_b() - off_w;
        let (rwo, rbo) = (self.off_wo() - off_w, self.off_bo() - off_w);
        let w = &self.flat[off_w..off_w + self.w_len()];
        let urec = &self.flat[self.off_u()..self.off_u() + self.u_len()];

        let last = (tape.steps - 1) * u;
        let mut dh = vec![0.0; u];
        let wo = &self.flat[self.off_wo()..self.off_wo() + u];
        for k in 0..u {
            tail[rwo + k] += dlogit * tape.hs[last + k];
            dh[k] = dlogit * wo[k];
        }
        tail[rbo] += dlogit;

        let zeros = vec![0.0; u];
        let mut dc = vec![0.0; u];
        let mut dz = vec![0.0; 4 * u];
        let mut dh_prev = vec![0.0; u];
        let mut embed_acc: Vec<(u32, Vec<f64>)> = Vec::new();
        for t in (0..tape.steps).rev() {
            let gates = &tape.gates[t * 4 * u..(t + 1) * 4 * u];
            let tc = &tape.tcs[t * u..(t + 1) * u];
            let (c_prev, h_prev) = if t > 0 {
                (&tape.cs[(t - 1) * u..t * u], &tape.hs[(t - 1) * u..t * u])
            } else {
                (&zeros[..], &zeros[..])
            };
            for k in 0..u {
                let (i_a, f_a) = (gates[k], gates[u + k]);
                let (g_a, o_a) = (gates[2 * u + k], gates[3 * u + k]);
                let dcell = dc[k] + dh[k] * o_a * (1.0 - tc[k] * tc[k]);
                dz[k] = dcell * g_a * i_a * (1.0 - i_a);
                dz[u + k] = dcell * c_prev[k] * f_a * (1.0 - f_a);
                dz[2 * u + k] = dcell * i_a * (1.0 - g_a * g_a);
                dz[3 * u + k] = dh[k] * tc[k] * o_a * (1.0 - o_a);
                dc[k] = dcell * f_a;
            }
            let x = &tape.xs[t * e..(t + 1) * e];
            dh_prev.fill(0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                tail[rb + r] += dzr;
                for (ee, &xv) in x.iter().enumerate() {
                    tail[rw + r * e + ee] += dzr * xv;
                }
                for (k, &hv) in h_prev.iter().enumerate() {
                    tail[ru + r * u + k] += dzr * hv;
                    dh_prev[k] += urec[r * u + k] * dzr;
                }
            }
            dh.copy_from_slice(&dh_prev);
            if self.trainable_embedding {
                let id = ids[t];
                let pos = match embed_acc.iter().position(|(i, _)| *i == id) {
                    Some(p) => p,
                    None => {
                        embed_acc.push((id, vec![0.0; e]));
                        embed_acc.len() - 1
                    }
                };
                let slot = &mut embed_acc[pos].1;
                for (ee, g) in slot.iter_mut().enumerate() {
                    let mut dx = 0.0;
                    for (r, &dzr) in dz.iter().enumerate() {
                        dx += w[r * e + ee] * dzr;
                    }
                    *g += dx * mask.map_or(1.0, |m| m[ee]);
                }
            }
        }
        embed_acc.sort_by_key(|(id, _)| *id);
        SampleGrad { loss, tail, embed_rows: embed_acc }
    }

    fn kernel_penalties(&self, kr: f64, rr: f64) -> f64 {
        let w = &self.flat[self.off_w()..self.off_w() + self.w_len()];
        let urec = &self.flat[self.off_u()..self.off_u() + self.u_len()];
        kr * w.iter().map(|v| v * v).sum::<f64>() + rr * urec.iter().map(|v| v * v).sum::<f64>()
    }
}

fn init_params(s: &IdSequences, cfg: &LstmConfig, table: Option<&EmbeddingTable>) -> Result<LstmParams> {
    let (embed_dim, trainable) = super::resolve_embedding(&cfg.embedding, table, s)?;
    let mut params = LstmParams {
        vocab_len: s.vocab_len,
        embed_dim,
        max_len: s.max_len,
        units: cfg.units,
        trainable_embedding: trainable,
        flat: Vec::new(),
        frozen_embed: None,
        embedding_fingerprint: None,
    };
    let mut flat = vec![0.0; params.flat_len()];
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed, 0));
    if trainable {
        scaled_uniform(&mut rng, 0.05, &mut flat[..params.emb_len()]);
        flat[..embed_dim].fill(0.0);
    } else {
        let table = table.unwrap();
        params.frozen_embed = Some(super::copy_table(table, s.vocab_len));
        params.embedding_fingerprint = Some(table.fingerprint());
    }
    let off_w = params.off_w();
    let mut w = vec![0.0; params.w_len()];
    glorot_uniform(&mut rng, embed_dim, 4 * cfg.units, &mut w);
    flat[off_w..off_w + w.len()].copy_from_slice(&w);
    // The recurrent kernel reuses the same uniform fan-in/fan-out scheme as
    // the input kernel.
    let mut urec = vec![0.0; params.u_len()];
    glorot_uniform(&mut rng, cfg.units, 4 * cfg.units, &mut urec);
    flat[params.off_u()..params.off_u() + urec.len()].copy_from_slice(&urec);
    // Forget-gate biases start at one so early cells carry state forward.
    let off_b = params.off_b();
    flat[off_b + cfg.units..off_b + 2 * cfg.units].fill(1.0);
    let mut wo = vec![0.0; cfg.units];
    glorot_uniform(&mut rng, cfg.units, 1, &mut wo);
    flat[params.off_wo()..params.off_wo() + wo.len()].copy_from_slice(&wo);
    params.flat = flat;
    Ok(params)
}

/// Inverted-dropout mask: zero with probability `rate`, else 1 / (1 - rate).
fn dropout_mask(seed: u64, rate: f64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - rate;
    (0..dim)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect()
}

/// Trains the LSTM; `table` supplies word vectors for the fixed embedding mode.
pub fn train_lstm_text(
    s: &IdSequences,
    y: &[Label],
    dev: Option<(&IdSequences, &[Label])>,
    cfg: &LstmConfig,
    table: Option<&EmbeddingTable>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_rows_match(s.n_rows(), y.len())?;
    check_two_classes(y)?;
    if let Some((ds, dy)) = dev {
        check_rows_match(ds.n_rows(), dy.len())?;
    }

    let n = s.n_rows();
    let mut params = init_params(s, cfg, table)?;
    let mut adam = Adam::new(params.flat.len(), cfg.learning_rate);
    let mut grad = vec![0.0; params.flat.len()];
    let mut history = TrainingHistory::default();
    let mut monitor: EarlyStopMonitor<Vec<f64>> = EarlyStopMonitor::new(cfg.early_stopping);
    let ys = y.iter().map(|&l| target(l)).collect::<Vec<_>>();

    'epochs: for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed, 1000 + epoch as u64));
        let order = shuffled_indices(n, &mut rng);
        // Masks are keyed by (epoch, row), not worker or batch position.
        let mask_base = splitmix64(cfg.seed, 2000 + epoch as u64);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample gradients run in parallel; the reduction below walks
            // them in batch order so results do not depend on worker count.
            let grads: Vec<SampleGrad> = batch
                .par_iter()
                .map(|&i| {
                    let mask = (cfg.dropout > 0.0).then(|| {
                        dropout_mask(splitmix64(mask_base, i as u64), cfg.dropout, params.embed_dim)
                    });
                    params.sample_grad(s.row(i), s.lengths[i], ys[i], mask.as_deref())
                })
                .collect();
            grad.fill(0.0);
            let inv = 1.0 / batch.len() as f64;
            let off_w = params.off_w();
            for g in &grads {
                loss_sum += g.loss;
                for (k, &gv) in g.tail.iter().enumerate() {
                    grad[off_w + k] += gv * inv;
                }
                for (id, row) in &g.embed_rows {
                    let base = *id as usize * params.embed_dim;
                    for (dd, &gv) in row.iter().enumerate() {
                        grad[base + dd] += gv * inv;
                    }
                }
            }
            if cfg.kr > 0.0 {
                for k in 0..params.w_len() {
                    grad[off_w + k] += 2.0 * cfg.kr * params.flat[off_w + k];
                }
            }
            if cfg.rr > 0.0 {
                let off_u = params.off_u();
                for k in 0..params.u_len() {
                    grad[off_u + k] += 2.0 * cfg.rr * params.flat[off_u + k];
                }
            }
            // The pad row is a constant, not a parameter: drop its gradient
            // so the optimizer state never moves it off zero.
            if params.trainable_embedding {
                let base = PAD_ID as usize * params.embed_dim;
                grad[base..base + params.embed_dim].fill(0.0);
            }
            adam.step(&mut params.flat, &grad);
        }
        let epoch_loss = loss_sum / n as f64 + params.kernel_penalties(cfg.kr, cfg.rr);
        if !epoch_loss.is_finite() {
            return Err(Error::DivergedLoss(epoch));
        }
        history.epoch_loss.push(epoch_loss);
        if let Some((ds, dy)) = dev {
            let acc = threshold_accuracy(&params.scores(ds)?, dy);
            history.dev_accuracy.push(acc);
            if monitor.observe(epoch, acc, || params.flat.clone()) {
                break 'epochs;
            }
        }
    }

    history.stopped_early_at = monitor.stopped_at();
    history.best_epoch = monitor.best_epoch();
    if let Some(flat) = monitor.into_restore() {
        params.flat = flat;
    }
    Ok(TrainedModel::new(
        cfg,
        FeaturesRef::Sequences(s).repr_fingerprint(),
        history,
        Predictor::Lstm(params),
    ))
}
