//! Binary text classifiers over sparse feature matrices and id sequences.
//!
//! Every family trains to a [`TrainedModel`] that remembers which
//! representation built it and refuses to score anything else. Scores are
//! probabilities of the positive class (`Label::Fake`); the decision rule is
//! `score >= 0.5`.

pub mod cnn;
pub mod forest;
pub mod gbt;
#[cfg(test)]
pub(crate) mod gradcheck;
pub mod lstm;
pub mod mlp;
pub(crate) mod optim;
pub mod svm;
pub(crate) mod tree;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::util::fingerprint;
use crate::vectorize::{FeatureMatrix, IdSequences, WeightKind};

pub use cnn::{train_cnn_text, CnnConfig, CnnParams};
pub use forest::{train_random_forest, ForestConfig, ForestParams};
pub use gbt::{train_gbt, GbtConfig, GbtParams};
pub use lstm::{train_lstm_text, LstmConfig, LstmParams};
pub use mlp::{train_mlp, MlpConfig, MlpParams};
pub use svm::{train_svm, SvmConfig, SvmKernel, SvmParams};
pub use tree::{Tree, TreeNode};

/// Borrowed training or scoring inputs, one row per document.
#[derive(Debug, Clone, Copy)]
pub enum FeaturesRef<'a> {
    Sparse(&'a FeatureMatrix),
    Sequences(&'a IdSequences),
}

impl FeaturesRef<'_> {
    pub fn n_rows(&self) -> usize {
        match self {
            FeaturesRef::Sparse(m) => m.n_rows(),
            FeaturesRef::Sequences(s) => s.n_rows(),
        }
    }

    pub fn repr_fingerprint(&self) -> ReprFingerprint {
        match self {
            FeaturesRef::Sparse(m) => ReprFingerprint {
                kind: match m.kind {
                    WeightKind::Counts => "bow".to_owned(),
                    WeightKind::TfIdf => "tfidf".to_owned(),
                },
                vocab_fingerprint: m.vocab_fingerprint.clone(),
                weight_fingerprint: m.weight_fingerprint.clone(),
                max_len: None,
            },
            FeaturesRef::Sequences(s) => ReprFingerprint {
                kind: "sequence".to_owned(),
                vocab_fingerprint: s.vocab_fingerprint.clone(),
                weight_fingerprint: None,
                max_len: Some(s.max_len),
            },
        }
    }
}

/// Identity of the representation a model was fit on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReprFingerprint {
    /// "bow", "tfidf", or "sequence".
    pub kind: String,
    pub vocab_fingerprint: String,
    /// Present for tf-idf matrices: identity of the fitted idf vector.
    pub weight_fingerprint: Option<String>,
    /// Present for sequences.
    pub max_len: Option<usize>,
}

impl fmt::Display for ReprFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vocab={}", self.kind, &self.vocab_fingerprint[..12.min(self.vocab_fingerprint.len())])?;
        if let Some(w) = &self.weight_fingerprint {
            write!(f, " weights={}", &w[..12.min(w.len())])?;
        }
        if let Some(l) = self.max_len {
            write!(f, " max_len={l}")?;
        }
        Ok(())
    }
}

/// Dev-accuracy based stopping rule shared by the gradient-trained families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Minimum dev-accuracy gain over the best epoch that counts as progress.
    pub tolerance: f64,
    /// Epochs without progress tolerated before training halts.
    pub patience: usize,
    /// Restore the parameters of the best epoch when training ends.
    pub restore_best: bool,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { tolerance: 0.0, patience: 5, restore_best: true }
    }
}

impl EarlyStopping {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(Error::InvalidConfig("early stopping tolerance must be finite and >= 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("early stopping patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Tracks dev accuracy across epochs and decides when to halt.
pub(crate) struct EarlyStopMonitor<S> {
    rule: Option<EarlyStopping>,
    best: Option<(usize, f64, Option<S>)>,
    epochs_since_best: usize,
    stopped_at: Option<usize>,
}

impl<S> EarlyStopMonitor<S> {
    pub(crate) fn new(rule: Option<EarlyStopping>) -> Self {
        EarlyStopMonitor { rule, best: None, epochs_since_best: 0, stopped_at: None }
    }

    /// Records one epoch's dev accuracy; returns true when training should halt.
    /// The snapshot closure runs only when this epoch becomes the new best and
    /// parameter restoration is enabled.
    pub(crate) fn observe(&mut self, epoch: usize, acc: f64, snapshot: impl FnOnce() -> S) -> bool {
        let Some(rule) = self.rule else { return false };
        let improved = match &self.best {
            None => true,
            Some((_, best_acc, _)) => acc - best_acc > rule.tolerance,
        };
        if improved {
            let snap = rule.restore_best.then(snapshot);
            self.best = Some((epoch, acc, snap));
            self.epochs_since_best = 0;
            return false;
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best >= rule.patience {
            self.stopped_at = Some(epoch);
            return true;
        }
        false
    }

    pub(crate) fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    pub(crate) fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|(e, _, _)| *e)
    }

    /// Consumes the monitor, returning the snapshot to restore (if any).
    pub(crate) fn into_restore(self) -> Option<S> {
        match (self.rule, self.best) {
            (Some(rule), Some((_, _, snap))) if rule.restore_best => snap,
            _ => None,
        }
    }
}

/// Per-epoch training record kept inside every trained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean training loss after each epoch (empty for the tree families).
    pub epoch_loss: Vec<f64>,
    /// Dev accuracy after each epoch, when a dev set was supplied.
    pub dev_accuracy: Vec<f64>,
    /// Epoch at which the stopping rule halted training, if it did.
    pub stopped_early_at: Option<usize>,
    /// Epoch whose parameters the model kept, when restoration applied.
    pub best_epoch: Option<usize>,
}

/// Fitted parameters for each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Predictor {
    Svm(SvmParams),
    Forest(ForestParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
    Cnn(CnnParams),
    Lstm(LstmParams),
    /// Scores every row with the same constant; a baseline and test fixture.
    Constant { score: f64 },
}

impl Predictor {
    fn family(&self) -> &'static str {
        match self {
            Predictor::Svm(_) => "svm",
            Predictor::Forest(_) => "rf",
            Predictor::Gbt(_) => "gbt",
            Predictor::Mlp(_) => "mlp",
            Predictor::Cnn(_) => "cnn",
            Predictor::Lstm(_) => "lstm",
            Predictor::Constant { .. } => "constant",
        }
    }
}

/// A classifier bound to the representation it was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub algorithm: String,
    pub repr: ReprFingerprint,
    /// Fingerprint of the training configuration.
    pub config_fingerprint: String,
    pub history: TrainingHistory,
    pub predictor: Predictor,
}

/// On-disk envelope for saved models.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

const MODEL_FORMAT_VERSION: u32 = 1;

impl TrainedModel {
    pub(crate) fn new<C: Serialize>(
        config: &C,
        repr: ReprFingerprint,
        history: TrainingHistory,
        predictor: Predictor,
    ) -> TrainedModel {
        TrainedModel {
            algorithm: predictor.family().to_owned(),
            repr,
            config_fingerprint: fingerprint(config),
            history,
            predictor,
        }
    }

    /// Constant-score baseline over the given representation.
    pub fn constant(score: f64, repr: ReprFingerprint) -> TrainedModel {
        TrainedModel::new(&("constant", score), repr, TrainingHistory::default(), Predictor::Constant { score })
    }

    /// Fingerprint over the fitted parameters alone.
    pub fn params_fingerprint(&self) -> String {
        fingerprint(&self.predictor)
    }

    fn check_repr(&self, features: &FeaturesRef) -> Result<()> {
        let found = features.repr_fingerprint();
        if found != self.repr {
            return Err(Error::RepresentationMismatch {
                expected: self.repr.to_string(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// Positive-class probability per row.
    pub fn predict_scores(&self, features: &FeaturesRef) -> Result<Vec<f64>> {
        self.check_repr(features)?;
        match (&self.predictor, features) {
            (Predictor::Svm(p), FeaturesRef::Sparse(m)) => p.scores(m),
            (Predictor::Forest(p), FeaturesRef::Sparse(m)) => p.scores(m),
            (Predictor::Gbt(p), FeaturesRef::Sparse(m)) => p.scores(m),
            (Predictor::Mlp(p), FeaturesRef::Sparse(m)) => p.scores(m),
            (Predictor::Cnn(p), FeaturesRef::Sequences(s)) => p.scores(s),
            (Predictor::Lstm(p), FeaturesRef::Sequences(s)) => p.scores(s),
            (Predictor::Constant { score }, f) => Ok(vec![*score; f.n_rows()]),
            (p, f) => Err(Error::RepresentationMismatch {
                expected: format!("{} input for a {} model", if matches!(p, Predictor::Cnn(_) | Predictor::Lstm(_)) { "sequence" } else { "sparse" }, p.family()),
                found: f.repr_fingerprint().to_string(),
            }),
        }
    }

    /// Label plus score per row; `score >= 0.5` maps to `Label::Fake`.
    pub fn predict(&self, features: &FeaturesRef) -> Result<Vec<(Label, f64)>> {
        Ok(self
            .predict_scores(features)?
            .into_iter()
            .map(|s| (if s >= 0.5 { Label::Fake } else { Label::True }, s))
            .collect())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() };
        let bytes = serde_json::to_vec_pretty(&file)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_json(path: &Path) -> Result<TrainedModel> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unsupported model format version {}", file.format_version),
            });
        }
        Ok(file.model)
    }
}

/// Word-vector source for the sequence models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Embedding matrix learned from scratch at the given width.
    Trainable { dim: usize },
    /// Embedding matrix copied from a loaded table and never updated.
    Fixed,
}

impl Default for EmbeddingMode {
    fn default() -> Self {
        EmbeddingMode::Trainable { dim: 50 }
    }
}

/// Resolves the embedding width and trainability for a sequence model,
/// validating a fixed table against the sequences' vocabulary.
pub(crate) fn resolve_embedding(
    mode: &EmbeddingMode,
    table: Option<&crate::vectorize::EmbeddingTable>,
    s: &IdSequences,
) -> Result<(usize, bool)> {
    match mode {
        EmbeddingMode::Trainable { dim } => Ok((*dim, true)),
        EmbeddingMode::Fixed => {
            let t = table.ok_or_else(|| {
                Error::InvalidConfig("fixed embedding mode requires a word-vector table".into())
            })?;
            if t.vocab_fingerprint != s.vocab_fingerprint {
                return Err(Error::RepresentationMismatch {
                    expected: format!("embedding table over vocab {}", s.vocab_fingerprint),
                    found: format!("embedding table over vocab {}", t.vocab_fingerprint),
                });
            }
            if t.n_rows() != s.vocab_len {
                return Err(Error::ShapeMismatch(format!(
                    "embedding table has {} rows, vocabulary has {}",
                    t.n_rows(),
                    s.vocab_len
                )));
            }
            Ok((t.dim, false))
        }
    }
}

/// Concatenates a table's rows into one flat matrix.
pub(crate) fn copy_table(table: &crate::vectorize::EmbeddingTable, vocab_len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(vocab_len * table.dim);
    for id in 0..vocab_len as u32 {
        out.extend_from_slice(table.row(id));
    }
    out
}

/// Errors out unless both classes appear in the labels.
pub(crate) fn check_two_classes(labels: &[Label]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let fakes = labels.iter().filter(|l| **l == Label::Fake).count();
    if fakes == 0 || fakes == labels.len() {
        return Err(Error::SingleClassInput);
    }
    Ok(())
}

pub(crate) fn check_rows_match(n_rows: usize, n_labels: usize) -> Result<()> {
    if n_rows != n_labels {
        return Err(Error::LengthMismatch { left: n_rows, right: n_labels });
    }
    Ok(())
}

/// 1.0 for the positive class, 0.0 otherwise.
pub(crate) fn target(label: Label) -> f64 {
    match label {
        Label::Fake => 1.0,
        Label::True => 0.0,
    }
}

pub(crate) fn targets(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|&l| target(l)).collect()
}

/// Fraction of score/label pairs where `score >= 0.5` matches the label.
pub(crate) fn threshold_accuracy(scores: &[f64], labels: &[Label]) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s >= 0.5) == (**l == Label::Fake))
        .count();
    correct as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repr() -> ReprFingerprint {
        ReprFingerprint {
            kind: "bow".into(),
            vocab_fingerprint: "abc".into(),
            weight_fingerprint: None,
            max_len: None,
        }
    }

    #[test]
    fn constant_model_scores_every_row_identically() {
        let rows = vec![
            vec![(0u32, 1.0f64)],
            vec![(1, 2.0)],
            vec![],
        ];
        let m = FeatureMatrix::from_rows(&rows, 2, WeightKind::Counts, "abc".into()).unwrap();
        let model = TrainedModel::constant(0.25, FeaturesRef::Sparse(&m).repr_fingerprint());
        let preds = model.predict(&FeaturesRef::Sparse(&m)).unwrap();
        assert_eq!(preds.len(), 3);
        for (label, score) in preds {
            assert_eq!(label, Label::True);
            assert_eq!(score, 0.25);
        }
    }

    #[test]
    fn score_at_half_maps_to_fake() {
        let rows = vec![vec![(0u32, 1.0f64)]];
        let m = FeatureMatrix::from_rows(&rows, 1, WeightKind::Counts, "abc".into()).unwrap();
        let model = TrainedModel::constant(0.5, FeaturesRef::Sparse(&m).repr_fingerprint());
        let preds = model.predict(&FeaturesRef::Sparse(&m)).unwrap();
        assert_eq!(preds[0].0, Label::Fake);
    }

    #[test]
    fn mismatched_vocabulary_is_rejected() {
        let rows = vec![vec![(0u32, 1.0f64)]];
        let m = FeatureMatrix::from_rows(&rows, 1, WeightKind::Counts, "abc".into()).unwrap();
        let other = FeatureMatrix::from_rows(&rows, 1, WeightKind::Counts, "zzz".into()).unwrap();
        let model = TrainedModel::constant(0.9, FeaturesRef::Sparse(&m).repr_fingerprint());
        let err = model.predict_scores(&FeaturesRef::Sparse(&other)).unwrap_err();
        assert!(matches!(err, Error::RepresentationMismatch { .. }), "{err}");
    }

    #[test]
    fn early_stop_monitor_counts_epochs_without_gain() {
        // Accuracies and the tolerance are picked to be exact in binary.
        let rule = EarlyStopping { tolerance: 0.125, patience: 2, restore_best: true };
        let mut mon: EarlyStopMonitor<Vec<f64>> = EarlyStopMonitor::new(Some(rule));
        assert!(!mon.observe(0, 0.5, || vec![0.0]));
        assert!(!mon.observe(1, 0.75, || vec![1.0]));
        // Gain of exactly the tolerance does not count as progress.
        assert!(!mon.observe(2, 0.875, || vec![2.0]));
        assert!(mon.observe(3, 0.75, || vec![3.0]));
        assert_eq!(mon.stopped_at(), Some(3));
        assert_eq!(mon.best_epoch(), Some(1));
        assert_eq!(mon.into_restore(), Some(vec![1.0]));
    }

    #[test]
    fn early_stop_monitor_inactive_without_rule() {
        let mut mon: EarlyStopMonitor<Vec<f64>> = EarlyStopMonitor::new(None);
        for e in 0..50 {
            assert!(!mon.observe(e, 0.5, Vec::new));
        }
        assert_eq!(mon.stopped_at(), None);
    }

    #[test]
    fn single_class_labels_are_rejected() {
        assert!(matches!(check_two_classes(&[Label::Fake, Label::Fake]), Err(Error::SingleClassInput)));
        assert!(matches!(check_two_classes(&[]), Err(Error::EmptyInput(_))));
        assert!(check_two_classes(&[Label::Fake, Label::True]).is_ok());
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let model = TrainedModel::constant(0.125, repr());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let back = TrainedModel::load_json(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.params_fingerprint(), model.params_fingerprint());
    }
}
