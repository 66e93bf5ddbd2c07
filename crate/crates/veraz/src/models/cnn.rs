//! Text CNN over id sequences: embedding, one valid-padding 1-D convolution
//! with ReLU, global max pooling, an L2-penalized ReLU dense layer, and a
//! sigmoid output, trained with Adam on binary cross-entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::models::optim::{
    bce_with_logits, glorot_uniform, scaled_uniform, shuffled_indices, sigmoid, Adam,
};
use crate::models::{
    check_rows_match, check_two_classes, target, threshold_accuracy, EarlyStopMonitor,
    EarlyStopping, EmbeddingMode, FeaturesRef, Predictor, TrainedModel, TrainingHistory,
};
use crate::util::splitmix64;
use crate::vectorize::{EmbeddingTable, IdSequences, PAD_ID};

/// Output positions of a valid 1-D convolution.
pub fn conv_output_len(max_len: usize, kernel_size: usize) -> usize {
    max_len - kernel_size + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub filters: usize,
    pub kernel_size: usize,
    pub dense_units: usize,
    /// L2 penalty on the dense layer's kernel.
    #[serde(alias = "KR")]
    pub kr: f64,
    pub embedding: EmbeddingMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filters: 16,
            kernel_size: 10,
            dense_units: 12,
            kr: 0.0,
            embedding: EmbeddingMode::default(),
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            early_stopping: None,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.dense_units == 0 {
            return Err(Error::InvalidConfig("cnn filters and dense_units must be >= 1".into()));
        }
        if self.kernel_size == 0 {
            return Err(Error::InvalidConfig("cnn kernel_size must be >= 1".into()));
        }
        if !(self.kr.is_finite() && self.kr >= 0.0) {
            return Err(Error::InvalidConfig("cnn KR must be finite and >= 0".into()));
        }
        if let EmbeddingMode::Trainable { dim } = self.embedding {
            if dim == 0 {
                return Err(Error::InvalidConfig("cnn embedding dim must be >= 1".into()));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("cnn epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("cnn learning_rate must be finite and > 0".into()));
        }
        if let Some(es) = &self.early_stopping {
            es.validate()?;
        }
        Ok(())
    }
}

/// Fitted CNN. `flat` packs, in order:
/// [embedding (trainable only) | conv kernel | conv bias | dense kernel |
/// dense bias | output weights | output bias].
/// The conv kernel is laid out [tap][embed dim][filter] with the filter axis
/// innermost; the dense kernel is [filter][dense unit].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub vocab_len: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub dense_units: usize,
    pub trainable_embedding: bool,
    pub flat: Vec<f64>,
    /// Embedding matrix when it is frozen rather than trained.
    pub frozen_embed: Option<Vec<f64>>,
    /// Fingerprint of the word-vector table behind a frozen embedding.
    pub embedding_fingerprint: Option<String>,
}

struct Forward {
    /// Convolution pre-activations, position-major: conv_z[t * filters + f].
    conv_z: Vec<f64>,
    /// Per-filter max of the ReLU outputs.
    pooled: Vec<f64>,
    /// Position attaining each filter's max; ties keep the lowest position.
    argmax: Vec<usize>,
    /// Dense pre-activations.
    zd: Vec<f64>,
    logit: f64,
}

/// One sample's gradient contribution: the non-embedding parameters as a
/// dense block (flat layout from the conv kernel onward) plus sparse
/// embedding rows.
struct SampleGrad {
    loss: f64,
    tail: Vec<f64>,
    embed_rows: Vec<(u32, Vec<f64>)>,
}

impl CnnParams {
    fn emb_len(&self) -> usize {
        self.vocab_len * self.embed_dim
    }

    fn off_conv(&self) -> usize {
        if self.trainable_embedding {
            self.emb_len()
        } else {
            0
        }
    }

    fn conv_len(&self) -> usize {
        self.kernel_size * self.embed_dim * self.filters
    }

    fn off_conv_b(&self) -> usize {
        self.off_conv() + self.conv_len()
    }

    fn off_wd(&self) -> usize {
        self.off_conv_b() + self.filters
    }

    fn off_bd(&self) -> usize {
        self.off_wd() + self.filters * self.dense_units
    }

    fn off_wo(&self) -> usize {
        self.off_bd() + self.dense_units
    }

    fn off_bo(&self) -> usize {
        self.off_wo() + self.dense_units
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

    fn forward(&self, ids: &[u32]) -> Forward {
        let (e, f, d, ks) = (self.embed_dim, self.filters, self.dense_units, self.kernel_size);
        let t_out = conv_output_len(self.max_len, ks);
        let conv = &self.flat[self.off_conv()..self.off_conv() + self.conv_len()];
        let conv_b = &self.flat[self.off_conv_b()..self.off_conv_b() + f];

        let mut conv_z = vec![0.0; t_out * f];
        for t in 0..t_out {
            let z = &mut conv_z[t * f..(t + 1) * f];
            z.copy_from_slice(conv_b);
            for k in 0..ks {
                let row = self.embed_row(ids[t + k]);
                for (dd, &x) in row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let w = &conv[(k * e + dd) * f..(k * e + dd + 1) * f];
                    for (zf, wf) in z.iter_mut().zip(w) {
                        *zf += x * wf;
                    }
                }
            }
        }

        let mut pooled = vec![0.0; f];
        let mut argmax = vec![0usize; f];
        for fi in 0..f {
            let mut best = conv_z[fi].max(0.0);
            let mut at = 0usize;
            for t in 1..t_out {
                let v = conv_z[t * f + fi].max(0.0);
                if v > best {
                    best = v;
                    at = t;
                }
            }
            pooled[fi] = best;
            argmax[fi] = at;
        }

        let wd = &self.flat[self.off_wd()..self.off_wd() + f * d];
        let bd = &self.flat[self.off_bd()..self.off_bd() + d];
        let mut zd = bd.to_vec();
        for (fi, &p) in pooled.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &wd[fi * d..(fi + 1) * d];
            for (z, w) in zd.iter_mut().zip(row) {
                *z += p * w;
            }
        }
        let wo = &self.flat[self.off_wo()..self.off_wo() + d];
        let bo = self.flat[self.off_bo()];
        let logit = bo + zd.iter().zip(wo).map(|(&z, &w)| z.max(0.0) * w).sum::<f64>();
        Forward { conv_z, pooled, argmax, zd, logit }
    }

    pub(crate) fn scores(&self, s: &IdSequences) -> Result<Vec<f64>> {
        if s.max_len != self.max_len || s.vocab_len != self.vocab_len {
            return Err(Error::ShapeMismatch(format!(
                "cnn expects max_len {} over vocab {}, sequences have max_len {} over vocab {}",
                self.max_len, self.vocab_len, s.max_len, s.vocab_len
            )));
        }
        Ok((0..s.n_rows())
            .into_par_iter()
            .map(|i| sigmoid(self.forward(s.row(i)).logit))
            .collect())
    }

    /// Cross-entropy gradient of one sample (no penalty term).
    fn sample_grad(&self, ids: &[u32], y: f64) -> SampleGrad {
        let (e, f, d, ks) = (self.embed_dim, self.filters, self.dense_units, self.kernel_size);
        let fw = self.forward(ids);
        let loss = bce_with_logits(fw.logit, y);
        let dlogit = sigmoid(fw.logit) - y;

        let off_conv = self.off_conv();
        let mut tail = vec![0.0; self.flat_len() - off_conv];
        let wo = &self.flat[self.off_wo()..self.off_wo() + d];
        let wd = &self.flat[self.off_wd()..self.off_wd() + f * d];
        let conv = &self.flat[off_conv..off_conv + self.conv_len()];

        let h: Vec<f64> = fw.zd.iter().map(|&z| z.max(0.0)).collect();
        for (dd, &hv) in h.iter().enumerate() {
            tail[self.off_wo() - off_conv + dd] += dlogit * hv;
        }
        tail[self.off_bo() - off_conv] += dlogit;

        let dzd: Vec<f64> = fw
            .zd
            .iter()
            .zip(wo)
            .map(|(&z, &w)| if z > 0.0 { dlogit * w } else { 0.0 })
            .collect();
        for (fi, &p) in fw.pooled.iter().enumerate() {
            if p != 0.0 {
                for (dd, &dz) in dzd.iter().enumerate() {
                    tail[self.off_wd() - off_conv + fi * d + dd] += p * dz;
                }
            }
        }
        for (dd, &dz) in dzd.iter().enumerate() {
            tail[self.off_bd() - off_conv + dd] += dz;
        }

        // Gradient reaching each filter's pooled value.
        let mut dpool = vec![0.0; f];
        for (fi, dp) in dpool.iter_mut().enumerate() {
            *dp = dzd.iter().enumerate().map(|(dd, &dz)| wd[fi * d + dd] * dz).sum();
        }

        let mut embed_acc: Vec<(u32, Vec<f64>)> = Vec::new();
        for fi in 0..f {
            let t = fw.argmax[fi];
            if fw.conv_z[t * f + fi] <= 0.0 {
                continue;
            }
            let dz = dpool[fi];
            if dz == 0.0 {
                continue;
            }
            tail[self.off_conv_b() - off_conv + fi] += dz;
            for k in 0..ks {
                let id = ids[t + k];
                let row = self.embed_row(id);
                for (dd, &x) in row.iter().enumerate() {
                    tail[(k * e + dd) * f + fi] += x * dz;
                }
                if self.trainable_embedding {
                    let pos = match embed_acc.iter().position(|(i, _)| *i == id) {
                        Some(p) => p,
                        None => {
                            embed_acc.push((id, vec![0.0; e]));
                            embed_acc.len() - 1
                        }
                    };
                    let slot = &mut embed_acc[pos].1;
                    for (dd, g) in slot.iter_mut().enumerate() {
                        *g += conv[(k * e + dd) * f + fi] * dz;
                    }
                }
            }
        }
        embed_acc.sort_by_key(|(id, _)| *id);
        SampleGrad { loss, tail, embed_rows: embed_acc }
    }

    fn dense_kernel_penalty(&self, kr: f64) -> f64 {
        let wd = &self.flat[self.off_wd()..self.off_wd() + self.filters * self.dense_units];
        kr * wd.iter().map(|w| w * w).sum::<f64>()
    }
}

fn init_params(s: &IdSequences, cfg: &CnnConfig, table: Option<&EmbeddingTable>) -> Result<CnnParams> {
    let (embed_dim, trainable) = super::resolve_embedding(&cfg.embedding, table, s)?;
    let mut params = CnnParams {
        vocab_len: s.vocab_len,
        embed_dim,
        max_len: s.max_len,
        filters: cfg.filters,
        kernel_size: cfg.kernel_size,
        dense_units: cfg.dense_units,
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
    let off = params.off_conv();
    let mut block = vec![0.0; params.conv_len()];
    glorot_uniform(&mut rng, cfg.kernel_size * embed_dim, cfg.filters, &mut block);
    flat[off..off + block.len()].copy_from_slice(&block);
    let mut wd = vec![0.0; cfg.filters * cfg.dense_units];
    glorot_uniform(&mut rng, cfg.filters, cfg.dense_units, &mut wd);
    flat[params.off_wd()..params.off_wd() + wd.len()].copy_from_slice(&wd);
    let mut wo = vec![0.0; cfg.dense_units];
    glorot_uniform(&mut rng, cfg.dense_units, 1, &mut wo);
    flat[params.off_wo()..params.off_wo() + wo.len()].copy_from_slice(&wo);
    params.flat = flat;
    Ok(params)
}

/// Trains the CNN; `table` supplies word vectors for the fixed embedding mode.
pub fn train_cnn_text(
    s: &IdSequences,
    y: &[Label],
    dev: Option<(&IdSequences, &[Label])>,
    cfg: &CnnConfig,
    table: Option<&EmbeddingTable>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_rows_match(s.n_rows(), y.len())?;
    check_two_classes(y)?;
    if cfg.kernel_size > s.max_len {
        return Err(Error::ShapeMismatch(format!(
            "cnn kernel_size {} exceeds max_len {}",
            cfg.kernel_size, s.max_len
        )));
    }
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
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample gradients run in parallel; the reduction below walks
            // them in batch order so results do not depend on worker count.
            let grads: Vec<SampleGrad> = batch
                .par_iter()
                .map(|&i| params.sample_grad(s.row(i), ys[i]))
                .collect();
            grad.fill(0.0);
            let inv = 1.0 / batch.len() as f64;
            let off_conv = params.off_conv();
            for g in &grads {
                loss_sum += g.loss;
                for (k, &gv) in g.tail.iter().enumerate() {
                    grad[off_conv + k] += gv * inv;
                }
                for (id, row) in &g.embed_rows {
                    let base = *id as usize * params.embed_dim;
                    for (dd, &gv) in row.iter().enumerate() {
                        grad[base + dd] += gv * inv;
                    }
                }
            }
            if cfg.kr > 0.0 {
                let off_wd = params.off_wd();
                for k in 0..params.filters * params.dense_units {
                    grad[off_wd + k] += 2.0 * cfg.kr * params.flat[off_wd + k];
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
        let epoch_loss = loss_sum / n as f64 + params.dense_kernel_penalty(cfg.kr);
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
        Predictor::Cnn(params),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gradcheck::{central_diff_grad, max_relative_error};
    use crate::vectorize::{build_vocab, IdSequences, Vocabulary};

    fn toy_vocab(n_tokens: usize) -> Vocabulary {
        let docs: Vec<Vec<String>> = (0..n_tokens)
            .map(|i| vec![format!("tok{i:02}"); n_tokens - i])
            .collect();
        build_vocab(&docs, usize::MAX, "toy").unwrap()
    }

    fn sequences(vocab: &Vocabulary, docs: &[Vec<String>], max_len: usize) -> IdSequences {
        IdSequences::encode(docs, vocab, max_len).unwrap()
    }

    fn token_docs(rows: &[&[usize]]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|i| format!("tok{i:02}")).collect())
            .collect()
    }

    #[test]
    fn conv_output_length_is_valid_padding() {
        assert_eq!(conv_output_len(10, 10), 1);
        assert_eq!(conv_output_len(12, 3), 10);
    }

    fn gradcheck(embedding: EmbeddingMode, table: Option<&EmbeddingTable>) {
        let vocab = toy_vocab(6);
        let docs = token_docs(&[&[0, 1, 2, 3], &[4, 5], &[2, 2, 0, 1, 3]]);
        let s = sequences(&vocab, &docs, 6);
        let ys = [1.0, 0.0, 1.0];
        let cfg = CnnConfig {
            filters: 2,
            kernel_size: 3,
            dense_units: 3,
            kr: 0.05,
            embedding,
            seed: 11,
            ..CnnConfig::default()
        };
        let params = init_params(&s, &cfg, table).unwrap();

        let loss_at = |flat: &[f64]| {
            let p = CnnParams { flat: flat.to_vec(), ..params.clone() };
            let bce: f64 =
                (0..3).map(|i| bce_with_logits(p.forward(s.row(i)).logit, ys[i])).sum::<f64>() / 3.0;
            bce + p.dense_kernel_penalty(cfg.kr)
        };

        let mut analytic = vec![0.0; params.flat.len()];
        let off_conv = params.off_conv();
        for (i, &yi) in ys.iter().enumerate() {
            let g = params.sample_grad(s.row(i), yi);
            for (k, &gv) in g.tail.iter().enumerate() {
                analytic[off_conv + k] += gv / 3.0;
            }
            for (id, row) in &g.embed_rows {
                let base = *id as usize * params.embed_dim;
                for (dd, &gv) in row.iter().enumerate() {
                    analytic[base + dd] += gv / 3.0;
                }
            }
        }
        let off_wd = params.off_wd();
        for k in 0..params.filters * params.dense_units {
            analytic[off_wd + k] += 2.0 * cfg.kr * params.flat[off_wd + k];
        }

        // sample_grad reports the pad row's gradient like any other row (the
        // trainer discards it separately), so every position is comparable.
        let numeric = central_diff_grad(&params.flat, 1e-5, loss_at);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradients_match_finite_differences_trainable() {
        gradcheck(EmbeddingMode::Trainable { dim: 4 }, None);
    }

    #[test]
    fn gradients_match_finite_differences_frozen() {
        let vocab = toy_vocab(6);
        let dim = 4;
        let mut vectors = vec![0.0; vocab.len() * dim];
        for (i, v) in vectors.iter_mut().enumerate().skip(dim) {
            *v = ((i * 37 % 19) as f64 - 9.0) / 10.0;
        }
        let table = EmbeddingTable::from_rows(dim, vectors, vocab.fingerprint());
        gradcheck(EmbeddingMode::Fixed, Some(&table));
    }

    #[test]
    fn learns_a_keyword_rule() {
        // Positive documents contain tok01; negatives do not.
        let docs = token_docs(&[
            &[1, 2, 3],
            &[4, 1, 5],
            &[3, 3, 1],
            &[1, 4],
            &[2, 3, 4],
            &[5, 4, 2],
            &[3, 2],
            &[4, 5, 3, 2],
        ]);
        let vocab = toy_vocab(6);
        let s = sequences(&vocab, &docs, 5);
        let y = [
            Label::Fake,
            Label::Fake,
            Label::Fake,
            Label::Fake,
            Label::True,
            Label::True,
            Label::True,
            Label::True,
        ];
        let cfg = CnnConfig {
            filters: 4,
            kernel_size: 2,
            dense_units: 4,
            embedding: EmbeddingMode::Trainable { dim: 8 },
            epochs: 150,
            batch_size: 8,
            learning_rate: 5e-3,
            ..CnnConfig::default()
        };
        let model = train_cnn_text(&s, &y, None, &cfg, None).unwrap();
        let scores = model.predict_scores(&FeaturesRef::Sequences(&s)).unwrap();
        assert_eq!(threshold_accuracy(&scores, &y), 1.0, "{scores:?}");
    }

    #[test]
    fn loss_decreases_on_a_toy_set() {
        let rows: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 6, (i * 3) % 6, 1 + i % 4]).collect();
        let docs: Vec<Vec<String>> =
            rows.iter().map(|r| r.iter().map(|i| format!("tok{i:02}")).collect()).collect();
        let vocab = toy_vocab(6);
        let s = sequences(&vocab, &docs, 4);
        let y: Vec<Label> =
            (0..20).map(|i| if i % 6 < 3 { Label::Fake } else { Label::True }).collect();
        let cfg = CnnConfig {
            filters: 3,
            kernel_size: 2,
            dense_units: 3,
            embedding: EmbeddingMode::Trainable { dim: 4 },
            epochs: 51,
            ..CnnConfig::default()
        };
        let model = train_cnn_text(&s, &y, None, &cfg, None).unwrap();
        let losses = &model.history.epoch_loss;
        assert!(losses[50] < losses[0], "{} -> {}", losses[0], losses[50]);
    }

    #[test]
    fn pad_embedding_row_never_trains() {
        let vocab = toy_vocab(4);
        let docs = token_docs(&[&[1, 2], &[3], &[2, 3, 1]]);
        let s = sequences(&vocab, &docs, 6);
        let y = [Label::Fake, Label::True, Label::Fake];
        let cfg = CnnConfig {
            filters: 2,
            kernel_size: 2,
            dense_units: 2,
            embedding: EmbeddingMode::Trainable { dim: 3 },
            epochs: 8,
            ..CnnConfig::default()
        };
        let model = train_cnn_text(&s, &y, None, &cfg, None).unwrap();
        let Predictor::Cnn(p) = &model.predictor else { panic!() };
        assert!(p.flat[..p.embed_dim].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_mode_requires_a_matching_table() {
        let vocab = toy_vocab(4);
        let docs = token_docs(&[&[1, 2], &[3]]);
        let s = sequences(&vocab, &docs, 4);
        let y = [Label::Fake, Label::True];
        let cfg = CnnConfig {
            filters: 2,
            kernel_size: 2,
            dense_units: 2,
            embedding: EmbeddingMode::Fixed,
            epochs: 2,
            ..CnnConfig::default()
        };
        assert!(matches!(
            train_cnn_text(&s, &y, None, &cfg, None),
            Err(Error::InvalidConfig(_))
        ));
        let table = EmbeddingTable::from_rows(3, vec![0.1; vocab.len() * 3], "other-vocab".into());
        assert!(matches!(
            train_cnn_text(&s, &y, None, &cfg, Some(&table)),
            Err(Error::RepresentationMismatch { .. })
        ));
        let short = EmbeddingTable::from_rows(3, vec![0.1; 3], vocab.fingerprint());
        assert!(matches!(
            train_cnn_text(&s, &y, None, &cfg, Some(&short)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn kernel_wider_than_sequences_is_rejected() {
        let vocab = toy_vocab(4);
        let docs = token_docs(&[&[1], &[2]]);
        let s = sequences(&vocab, &docs, 3);
        let y = [Label::Fake, Label::True];
        let cfg = CnnConfig { kernel_size: 4, ..CnnConfig::default() };
        assert!(matches!(
            train_cnn_text(&s, &y, None, &cfg, None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn training_is_identical_across_thread_pools() {
        let vocab = toy_vocab(5);
        let docs = token_docs(&[&[1, 2, 3], &[4, 2], &[3, 3], &[2, 4, 1], &[1], &[4, 3, 2]]);
        let s = sequences(&vocab, &docs, 4);
        let y = [
            Label::Fake,
            Label::True,
            Label::True,
            Label::Fake,
            Label::Fake,
            Label::True,
        ];
        let cfg = CnnConfig {
            filters: 3,
            kernel_size: 2,
            dense_units: 2,
            embedding: EmbeddingMode::Trainable { dim: 4 },
            epochs: 6,
            batch_size: 2,
            ..CnnConfig::default()
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_cnn_text(&s, &y, None, &cfg, None).unwrap().params_fingerprint())
        };
        assert_eq!(run(1), run(4));
    }
}
