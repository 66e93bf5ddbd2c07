//! Gradient boosting on the logistic loss: an initial log-odds score plus a
//! stagewise sum of depth-limited regression trees fit to residuals.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::models::optim::{bce_with_logits, sigmoid};
use crate::models::tree::{SplitCriterion, Tree, TreeBuilder, TreeNode};
use crate::models::{
    check_rows_match, check_two_classes, targets, FeaturesRef, Predictor, TrainedModel,
    TrainingHistory,
};
use crate::util::splitmix64;
use crate::vectorize::{CscView, FeatureMatrix};

/// Newton leaf steps are clamped to this magnitude; together with a learning
/// rate <= 0.1 it keeps the stagewise training loss non-increasing.
const MAX_LEAF_STEP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    /// Boosting stages; 0 leaves only the initial log-odds score.
    pub n_trees: usize,
    /// Features sampled per split; None uses every feature.
    pub max_features: Option<usize>,
    /// Shrinkage applied to every stage's leaf values.
    pub learning_rate: f64,
    pub tree_depth: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig { n_trees: 100, max_features: None, learning_rate: 0.1, tree_depth: 3, seed: 0 }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig("gbt learning_rate must be in (0, 1]".into()));
        }
        if self.tree_depth == 0 {
            return Err(Error::InvalidConfig("gbt tree_depth must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidConfig("gbt max_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_features: usize,
    /// Initial score: log-odds of the positive class in the training labels.
    pub f0: f64,
    /// Stage trees; leaf values already include the learning rate.
    pub trees: Vec<Tree>,
}

impl GbtParams {
    pub(crate) fn scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_cols != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "gbt expects {} features, matrix has {}",
                self.n_features, m.n_cols
            )));
        }
        Ok((0..m.n_rows())
            .map(|i| {
                let (cols, vals) = m.row(i);
                let f: f64 =
                    self.f0 + self.trees.iter().map(|t| t.predict_sparse(cols, vals)).sum::<f64>();
                sigmoid(f)
            })
            .collect())
    }
}

pub fn train_gbt(x: &FeatureMatrix, y: &[Label], cfg: &GbtConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_rows_match(x.n_rows(), y.len())?;
    check_two_classes(y)?;
    let max_features = cfg.max_features.unwrap_or(x.n_cols);
    if max_features > x.n_cols {
        return Err(Error::InvalidConfig(format!(
            "gbt max_features {} exceeds feature count {}",
            max_features, x.n_cols
        )));
    }
    let n = x.n_rows();
    let ys = targets(y);
    let p = ys.iter().sum::<f64>() / n as f64;
    let f0 = (p / (1.0 - p)).ln();
    let csc = CscView::from_csr(x);
    let ones = vec![1.0; n];

    let mut f: Vec<f64> = vec![f0; n];
    let mean_loss = |f: &[f64]| {
        f.iter().zip(&ys).map(|(&fi, &yi)| bce_with_logits(fi, yi)).sum::<f64>() / n as f64
    };
    // epoch_loss[0] is the pre-boosting loss; entry m+1 follows stage m.
    let mut losses = vec![mean_loss(&f)];
    let mut trees = Vec::with_capacity(cfg.n_trees);

    for stage in 0..cfg.n_trees {
        let prob: Vec<f64> = f.iter().map(|&fi| sigmoid(fi)).collect();
        let residuals: Vec<f64> = ys.iter().zip(&prob).map(|(y, p)| y - p).collect();
        let built = TreeBuilder {
            csc: &csc,
            targets: &residuals,
            criterion: SplitCriterion::Mse,
            max_depth: Some(cfg.tree_depth),
            min_samples_leaf: 1,
            max_features,
            seed: splitmix64(cfg.seed, stage as u64),
        }
        .build(&ones);
        let mut tree = built.tree;

        // Replace each leaf's mean residual by a clamped Newton step times the
        // learning rate: sum(residual) / sum(p(1-p)) over the leaf's rows.
        let mut num = vec![0.0; tree.nodes.len()];
        let mut den = vec![0.0; tree.nodes.len()];
        for i in 0..n {
            let slot = built.leaf_of_row[i] as usize;
            num[slot] += residuals[i];
            den[slot] += prob[i] * (1.0 - prob[i]);
        }
        for slot in 0..tree.nodes.len() {
            if let Some(value) = tree.leaf_value_mut(slot) {
                let step = (num[slot] / den[slot].max(1e-12)).clamp(-MAX_LEAF_STEP, MAX_LEAF_STEP);
                *value = cfg.learning_rate * step;
            }
        }
        for (fi, &leaf) in f.iter_mut().zip(&built.leaf_of_row) {
            let TreeNode::Leaf { value } = tree.nodes[leaf as usize] else { unreachable!() };
            *fi += value;
        }
        losses.push(mean_loss(&f));
        trees.push(tree);
    }

    let history = TrainingHistory { epoch_loss: losses, ..TrainingHistory::default() };
    let params = GbtParams { n_features: x.n_cols, f0, trees };
    Ok(TrainedModel::new(cfg, FeaturesRef::Sparse(x).repr_fingerprint(), history, Predictor::Gbt(params)))
}
