//! Random forest: bagged Gini trees with per-split feature sampling and
//! majority-vote prediction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::models::tree::{SplitCriterion, Tree, TreeBuilder};
use crate::models::{
    check_rows_match, check_two_classes, targets, FeaturesRef, Predictor, TrainedModel,
    TrainingHistory,
};
use crate::util::splitmix64;
use crate::vectorize::{CscView, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features sampled per split; None uses every feature.
    pub max_features: Option<usize>,
    /// None grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("forest n_trees must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidConfig("forest max_features must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("forest min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ForestParams {
    /// Fraction of trees voting for the positive class; a tree votes positive
    /// when its leaf fraction is >= 0.5.
    pub(crate) fn scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_cols != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "forest expects {} features, matrix has {}",
                self.n_features, m.n_cols
            )));
        }
        Ok((0..m.n_rows())
            .map(|i| {
                let (cols, vals) = m.row(i);
                let votes = self
                    .trees
                    .iter()
                    .filter(|t| t.predict_sparse(cols, vals) >= 0.5)
                    .count();
                votes as f64 / self.trees.len() as f64
            })
            .collect())
    }
}

/// Per-row bootstrap multiplicities from n draws with replacement.
fn bootstrap_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.gen_range(0..n)] += 1.0;
    }
    w
}

pub fn train_random_forest(x: &FeatureMatrix, y: &[Label], cfg: &ForestConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_rows_match(x.n_rows(), y.len())?;
    check_two_classes(y)?;
    let max_features = cfg.max_features.unwrap_or(x.n_cols);
    if max_features > x.n_cols {
        return Err(Error::InvalidConfig(format!(
            "forest max_features {} exceeds feature count {}",
            max_features, x.n_cols
        )));
    }
    let n = x.n_rows();
    let ys = targets(y);
    let csc = CscView::from_csr(x);

    // Tree seeds derive from the index, so the parallel build is bit-identical
    // to the sequential one regardless of worker count.
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = splitmix64(cfg.seed, t as u64);
            let weights = if cfg.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                bootstrap_weights(n, &mut rng)
            } else {
                vec![1.0; n]
            };
            TreeBuilder {
                csc: &csc,
                targets: &ys,
                criterion: SplitCriterion::Gini,
                max_depth: cfg.max_depth,
                min_samples_leaf: cfg.min_samples_leaf,
                max_features,
                seed: splitmix64(tree_seed, 1),
            }
            .build(&weights)
            .tree
        })
        .collect();

    let params = ForestParams { n_features: x.n_cols, trees };
    Ok(TrainedModel::new(
        cfg,
        FeaturesRef::Sparse(x).repr_fingerprint(),
        TrainingHistory::default(),
        Predictor::Forest(params),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::TreeNode;
    use crate::models::threshold_accuracy;
    use crate::vectorize::WeightKind;

    fn matrix(rows: &[Vec<(u32, f64)>], n_cols: usize) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, n_cols, WeightKind::Counts, "test-vocab".into()).unwrap()
    }

    fn leaf_tree(value: f64) -> Tree {
        Tree { nodes: vec![TreeNode::Leaf { value }] }
    }

    #[test]
    fn single_full_tree_memorizes_distinct_data() {
        let rows: Vec<Vec<(u32, f64)>> = (0..12)
            .map(|i| vec![(0, (i % 4) as f64), (1, (i / 4) as f64), (2, (i % 3) as f64)])
            .collect();
        let y: Vec<Label> =
            (0..12).map(|i| if i % 3 == 0 { Label::Fake } else { Label::True }).collect();
        let m = matrix(&rows, 3);
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, ..ForestConfig::default() };
        let model = train_random_forest(&m, &y, &cfg).unwrap();
        let scores = model.predict_scores(&FeaturesRef::Sparse(&m)).unwrap();
        assert_eq!(threshold_accuracy(&scores, &y), 1.0);
    }

    #[test]
    fn vote_fraction_is_the_score() {
        let mut trees: Vec<Tree> = (0..400).map(|_| leaf_tree(1.0)).collect();
        trees.extend((0..100).map(|_| leaf_tree(0.0)));
        let params = ForestParams { n_features: 1, trees };
        let m = matrix(&[vec![(0, 1.0)]], 1);
        let scores = params.scores(&m).unwrap();
        assert_eq!(scores, vec![0.8]);
    }

    #[test]
    fn split_vote_breaks_toward_fake() {
        let params = ForestParams { n_features: 1, trees: vec![leaf_tree(1.0), leaf_tree(0.0)] };
        let m = matrix(&[vec![(0, 1.0)]], 1);
        let model = TrainedModel::new(
            &"fixture",
            FeaturesRef::Sparse(&m).repr_fingerprint(),
            TrainingHistory::default(),
            Predictor::Forest(params),
        );
        let preds = model.predict(&FeaturesRef::Sparse(&m)).unwrap();
        assert_eq!(preds[0], (Label::Fake, 0.5));
    }

    #[test]
    fn leaf_fraction_at_half_votes_positive() {
        let params = ForestParams { n_features: 1, trees: vec![leaf_tree(0.5)] };
        let m = matrix(&[vec![(0, 1.0)]], 1);
        assert_eq!(params.scores(&m).unwrap(), vec![1.0]);
    }

    #[test]
    fn bagging_is_deterministic_per_seed() {
        let rows: Vec<Vec<(u32, f64)>> =
            (0..30).map(|i| vec![(0, (i % 7) as f64), (1, ((i * 3) % 5) as f64)]).collect();
        let y: Vec<Label> =
            (0..30).map(|i| if (i * 3 + i) % 7 < 3 { Label::Fake } else { Label::True }).collect();
        let m = matrix(&rows, 2);
        let cfg = ForestConfig { n_trees: 20, max_features: Some(1), ..ForestConfig::default() };
        let a = train_random_forest(&m, &y, &cfg).unwrap();
        let b = train_random_forest(&m, &y, &cfg).unwrap();
        assert_eq!(a.params_fingerprint(), b.params_fingerprint());
        let c = train_random_forest(&m, &y, &ForestConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.params_fingerprint(), c.params_fingerprint());
    }

    #[test]
    fn oversized_max_features_is_rejected() {
        let m = matrix(&[vec![(0, 1.0)], vec![(1, 1.0)]], 2);
        let y = [Label::Fake, Label::True];
        let cfg = ForestConfig { max_features: Some(3), ..ForestConfig::default() };
        assert!(matches!(train_random_forest(&m, &y, &cfg), Err(Error::InvalidConfig(_))));
    }
}
