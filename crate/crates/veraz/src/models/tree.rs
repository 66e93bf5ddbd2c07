//! CART regression/classification trees over sparse columns, shared by the
//! forest and boosting trainers.
//!
//! Split search scans CSC columns and accounts for the implicit-zero block in
//! aggregate, so cost scales with stored entries rather than the dense shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::splitmix64;
use crate::vectorize::CscView;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SplitCriterion {
    /// Binary Gini impurity; leaf value = weighted positive fraction.
    Gini,
    /// Squared error; leaf value = weighted mean target.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

/// Binary tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Evaluates one sparse row; absent features read as 0.
    pub fn predict_sparse(&self, cols: &[u32], vals: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    let x = match cols.binary_search(feature) {
                        Ok(k) => vals[k],
                        Err(_) => 0.0,
                    };
                    at = if x <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub(crate) fn leaf_value_mut(&mut self, slot: usize) -> Option<&mut f64> {
        match &mut self.nodes[slot] {
            TreeNode::Leaf { value } => Some(value),
            TreeNode::Split { .. } => None,
        }
    }
}

/// Binary Gini impurity of a node with total weight `w` and positive weight `wy`.
pub(crate) fn gini_impurity(w: f64, wy: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = wy / w;
    2.0 * p * (1.0 - p)
}

fn sse(w: f64, wy: f64, wyy: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    (wyy - wy * wy / w).max(0.0)
}

pub(crate) struct TreeBuilder<'a> {
    pub csc: &'a CscView,
    /// Per-row regression target: 0/1 class indicators for Gini, residuals for Mse.
    pub targets: &'a [f64],
    pub criterion: SplitCriterion,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features sampled (without replacement) per split.
    pub max_features: usize,
    pub seed: u64,
}

pub(crate) struct BuiltTree {
    pub tree: Tree,
    /// Leaf slot reached by each training row; u32::MAX for zero-weight rows.
    pub leaf_of_row: Vec<u32>,
}

/// Aggregates of one distinct feature value within a node.
#[derive(Clone, Copy)]
struct ValueGroup {
    v: f64,
    w: f64,
    wy: f64,
    wyy: f64,
    rows: usize,
}

struct NodeTask {
    slot: usize,
    rows: Vec<u32>,
    depth: usize,
}

struct BestSplit {
    feature: u32,
    threshold: f64,
    cost: f64,
}

impl TreeBuilder<'_> {
    /// Grows one tree. `weights` are per-row multiplicities (bootstrap counts);
    /// zero-weight rows take no part in training.
    pub(crate) fn build(&self, weights: &[f64]) -> BuiltTree {
        let n_rows = self.csc.n_rows;
        assert_eq!(weights.len(), n_rows);
        assert_eq!(self.targets.len(), n_rows);
        let n_cols = self.csc.n_cols;

        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut leaf_of_row = vec![u32::MAX; n_rows];
        // Node currently owning each row, used to filter CSC column scans.
        let mut node_of = vec![u32::MAX; n_rows];
        let root_rows: Vec<u32> =
            (0..n_rows as u32).filter(|&r| weights[r as usize] > 0.0).collect();
        for &r in &root_rows {
            node_of[r as usize] = 0;
        }
        nodes.push(TreeNode::Leaf { value: 0.0 });

        // Scratch reused across nodes: feature pool for sampling and stamped
        // per-row value cache for partitioning.
        let mut pool: Vec<u32> = (0..n_cols as u32).collect();
        let mut swaps: Vec<(usize, usize)> = Vec::new();
        let mut row_value = vec![0.0f64; n_rows];
        let mut row_stamp = vec![0u32; n_rows];
        let mut stamp = 0u32;

        let mut stack = vec![NodeTask { slot: 0, rows: root_rows, depth: 0 }];
        let mut node_counter = 0u64;

        while let Some(task) = stack.pop() {
            let node_seed = splitmix64(self.seed, node_counter);
            node_counter += 1;

            let (mut w, mut wy, mut wyy) = (0.0, 0.0, 0.0);
            for &r in &task.rows {
                let wr = weights[r as usize];
                let y = self.targets[r as usize];
                w += wr;
                wy += wr * y;
                wyy += wr * y * y;
            }
            let leaf_value = wy / w;

            let depth_capped = self.max_depth.is_some_and(|d| task.depth >= d);
            let too_small = task.rows.len() < 2 * self.min_samples_leaf.max(1);
            let pure = match self.criterion {
                SplitCriterion::Gini => wy <= 0.0 || wy >= w,
                SplitCriterion::Mse => sse(w, wy, wyy) <= 1e-12,
            };

            let best = if depth_capped || too_small || pure {
                None
            } else {
                self.best_split(&task, &node_of, weights, w, wy, wyy, node_seed, &mut pool, &mut swaps)
            };

            let Some(split) = best else {
                nodes[task.slot] = TreeNode::Leaf { value: leaf_value };
                for &r in &task.rows {
                    leaf_of_row[r as usize] = task.slot as u32;
                }
                continue;
            };

            // Re-scan the winning column to read members' values, then route.
            stamp += 1;
            let (col_rows, col_vals) = self.csc.col(split.feature as usize);
            for (&r, &v) in col_rows.iter().zip(col_vals) {
                if node_of[r as usize] == task.slot as u32 {
                    row_value[r as usize] = v;
                    row_stamp[r as usize] = stamp;
                }
            }
            let mut left_rows = Vec::new();
            let mut right_rows = Vec::new();
            for &r in &task.rows {
                let v = if row_stamp[r as usize] == stamp { row_value[r as usize] } else { 0.0 };
                if v <= split.threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

            let left_slot = nodes.len();
            nodes.push(TreeNode::Leaf { value: 0.0 });
            let right_slot = nodes.len();
            nodes.push(TreeNode::Leaf { value: 0.0 });
            for &r in &left_rows {
                node_of[r as usize] = left_slot as u32;
            }
            for &r in &right_rows {
                node_of[r as usize] = right_slot as u32;
            }
            nodes[task.slot] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: left_slot as u32,
                right: right_slot as u32,
            };
            stack.push(NodeTask { slot: right_slot, rows: right_rows, depth: task.depth + 1 });
            stack.push(NodeTask { slot: left_slot, rows: left_rows, depth: task.depth + 1 });
        }

        BuiltTree { tree: Tree { nodes }, leaf_of_row }
    }

    #[allow(clippy::too_many_arguments)]
    fn best_split(
        &self,
        task: &NodeTask,
        node_of: &[u32],
        weights: &[f64],
        w_total: f64,
        wy_total: f64,
        wyy_total: f64,
        node_seed: u64,
        pool: &mut [u32],
        swaps: &mut Vec<(usize, usize)>,
    ) -> Option<BestSplit> {
        let n_cols = self.csc.n_cols;
        let k = self.max_features.min(n_cols).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
        let mut candidates: Vec<u32> = Vec::with_capacity(k);
        for i in 0..k {
            let j = rng.gen_range(i..n_cols);
            pool.swap(i, j);
            swaps.push((i, j));
            candidates.push(pool[i]);
        }
        for (i, j) in swaps.drain(..).rev() {
            pool.swap(i, j);
        }
        // Ascending feature order makes the strict-< cost comparison resolve
        // ties toward the lowest feature id and threshold.
        candidates.sort_unstable();

        let n_members = task.rows.len();
        let mut best: Option<BestSplit> = None;
        let mut groups: Vec<ValueGroup> = Vec::new();

        for &feature in &candidates {
            groups.clear();
            let (col_rows, col_vals) = self.csc.col(feature as usize);
            let mut entries: Vec<(f64, u32)> = Vec::new();
            for (&r, &v) in col_rows.iter().zip(col_vals) {
                if node_of[r as usize] == task.slot as u32 {
                    entries.push((v, r));
                }
            }
            if entries.is_empty() {
                continue;
            }
            entries.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (mut w_nz, mut wy_nz, mut wyy_nz) = (0.0, 0.0, 0.0);
            for &(v, r) in &entries {
                let wr = weights[r as usize];
                let y = self.targets[r as usize];
                w_nz += wr;
                wy_nz += wr * y;
                wyy_nz += wr * y * y;
                match groups.last_mut() {
                    Some(g) if g.v == v => {
                        g.w += wr;
                        g.wy += wr * y;
                        g.wyy += wr * y * y;
                        g.rows += 1;
                    }
                    _ => groups.push(ValueGroup { v, w: wr, wy: wr * y, wyy: wr * y * y, rows: 1 }),
                }
            }
            let zero_rows = n_members - entries.len();
            if zero_rows > 0 {
                let zero = ValueGroup {
                    v: 0.0,
                    w: w_total - w_nz,
                    wy: wy_total - wy_nz,
                    wyy: wyy_total - wyy_nz,
                    rows: zero_rows,
                };
                let at = groups.partition_point(|g| g.v < 0.0);
                groups.insert(at, zero);
            }
            if groups.len() < 2 {
                continue;
            }

            let (mut wl, mut wyl, mut wyyl, mut rows_l) = (0.0, 0.0, 0.0, 0usize);
            for gi in 0..groups.len() - 1 {
                let g = groups[gi];
                wl += g.w;
                wyl += g.wy;
                wyyl += g.wyy;
                rows_l += g.rows;
                let rows_r = n_members - rows_l;
                if rows_l < self.min_samples_leaf || rows_r < self.min_samples_leaf {
                    continue;
                }
                let (wr, wyr, wyyr) = (w_total - wl, wy_total - wyl, wyy_total - wyyl);
                let cost = match self.criterion {
                    SplitCriterion::Gini => wl * gini_impurity(wl, wyl) + wr * gini_impurity(wr, wyr),
                    SplitCriterion::Mse => sse(wl, wyl, wyyl) + sse(wr, wyr, wyyr),
                };
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    let lo = g.v;
                    let hi = groups[gi + 1].v;
                    let mut threshold = lo + (hi - lo) / 2.0;
                    // Midpoint may round up to the right value; pin it left so
                    // the routing rule x <= threshold matches these counts.
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit { feature, threshold, cost });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::{FeatureMatrix, WeightKind};

    fn csc(rows: &[Vec<(u32, f64)>], n_cols: usize) -> CscView {
        let m = FeatureMatrix::from_rows(rows, n_cols, WeightKind::Counts, "t".into()).unwrap();
        CscView::from_csr(&m)
    }

    fn build(
        view: &CscView,
        targets: &[f64],
        criterion: SplitCriterion,
        max_depth: Option<usize>,
    ) -> BuiltTree {
        TreeBuilder {
            csc: view,
            targets,
            criterion,
            max_depth,
            min_samples_leaf: 1,
            max_features: view.n_cols,
            seed: 0,
        }
        .build(&vec![1.0; targets.len()])
    }

    #[test]
    fn gini_formula_examples() {
        assert_eq!(gini_impurity(10.0, 0.0), 0.0);
        assert_eq!(gini_impurity(10.0, 10.0), 0.0);
        assert!((gini_impurity(10.0, 5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_feature_threshold_separates_classes() {
        let rows = vec![
            vec![(0, -2.0)],
            vec![(0, -1.0)],
            vec![(0, 1.0)],
            vec![(0, 2.0)],
        ];
        let view = csc(&rows, 1);
        let built = build(&view, &[0.0, 0.0, 1.0, 1.0], SplitCriterion::Gini, None);
        assert_eq!(built.tree.predict_sparse(&[0], &[-2.0]), 0.0);
        assert_eq!(built.tree.predict_sparse(&[0], &[-1.0]), 0.0);
        assert_eq!(built.tree.predict_sparse(&[0], &[1.0]), 1.0);
        assert_eq!(built.tree.predict_sparse(&[0], &[2.0]), 1.0);
        // One split suffices; threshold sits between -1 and 1.
        assert_eq!(built.tree.nodes.len(), 3);
        let TreeNode::Split { threshold, .. } = built.tree.nodes[0] else { panic!() };
        assert!(threshold > -1.0 && threshold < 1.0);
    }

    #[test]
    fn implicit_zeros_route_with_the_zero_block() {
        // Rows 0 and 1 lack feature 0 entirely; their value is 0.
        let rows = vec![vec![], vec![], vec![(0, 1.0)], vec![(0, 2.0)]];
        let view = csc(&rows, 1);
        let built = build(&view, &[0.0, 0.0, 1.0, 1.0], SplitCriterion::Gini, None);
        assert_eq!(built.tree.predict_sparse(&[], &[]), 0.0);
        assert_eq!(built.tree.predict_sparse(&[0], &[1.5]), 1.0);
        assert_eq!(built.tree.nodes.len(), 3);
    }

    #[test]
    fn memorizes_distinct_rows() {
        let rows = vec![
            vec![(0, 1.0)],
            vec![(1, 1.0)],
            vec![(0, 1.0), (1, 1.0)],
            vec![(2, 5.0)],
            vec![],
        ];
        let targets = [1.0, 0.0, 1.0, 0.0, 1.0];
        let view = csc(&rows, 3);
        let built = build(&view, &targets, SplitCriterion::Gini, None);
        let m = FeatureMatrix::from_rows(&rows, 3, WeightKind::Counts, "t".into()).unwrap();
        for (i, want) in targets.iter().enumerate() {
            let (c, v) = m.row(i);
            assert_eq!(built.tree.predict_sparse(c, v), *want, "row {i}");
        }
    }

    #[test]
    fn max_depth_limits_growth() {
        let rows: Vec<Vec<(u32, f64)>> = (0..8).map(|i| vec![(0, i as f64)]).collect();
        let targets = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let view = csc(&rows, 1);
        let built = build(&view, &targets, SplitCriterion::Gini, Some(1));
        // Depth 1: one root split, two leaves.
        assert_eq!(built.tree.nodes.len(), 3);
    }

    #[test]
    fn mse_tree_fits_group_means() {
        let rows = vec![vec![(0, 0.0); 0], vec![], vec![(0, 3.0)], vec![(0, 4.0)]];
        let targets = [1.0, 3.0, 10.0, 12.0];
        let view = csc(&rows, 1);
        let built = build(&view, &targets, SplitCriterion::Mse, Some(1));
        // Root split separates zeros from nonzeros: means 2.0 and 11.0.
        assert_eq!(built.tree.predict_sparse(&[], &[]), 2.0);
        assert_eq!(built.tree.predict_sparse(&[0], &[3.5]), 11.0);
    }

    #[test]
    fn leaf_assignment_matches_routing() {
        let rows = vec![vec![(0, 1.0)], vec![(1, 2.0)], vec![], vec![(0, 2.0), (1, 1.0)]];
        let targets = [1.0, 0.0, 1.0, 0.0];
        let view = csc(&rows, 2);
        let built = build(&view, &targets, SplitCriterion::Gini, None);
        let m = FeatureMatrix::from_rows(&rows, 2, WeightKind::Counts, "t".into()).unwrap();
        for i in 0..4 {
            let (c, v) = m.row(i);
            let mut at = 0usize;
            loop {
                match &built.tree.nodes[at] {
                    TreeNode::Leaf { .. } => break,
                    TreeNode::Split { feature, threshold, left, right } => {
                        let x = match c.binary_search(feature) {
                            Ok(k) => v[k],
                            Err(_) => 0.0,
                        };
                        at = if x <= *threshold { *left as usize } else { *right as usize };
                    }
                }
            }
            assert_eq!(built.leaf_of_row[i], at as u32);
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let rows = vec![vec![(0, -1.0)], vec![(0, 1.0)], vec![(0, 5.0)]];
        // Row 2 would flip the majority at its side if counted.
        let view = csc(&rows, 1);
        let built = TreeBuilder {
            csc: &view,
            targets: &[0.0, 1.0, 0.0],
            criterion: SplitCriterion::Gini,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: 1,
            seed: 0,
        }
        .build(&[1.0, 1.0, 0.0]);
        assert_eq!(built.tree.predict_sparse(&[0], &[5.0]), 1.0);
        assert_eq!(built.leaf_of_row[2], u32::MAX);
    }

    #[test]
    fn pure_nodes_stop_immediately() {
        let rows = vec![vec![(0, 1.0)], vec![(0, 2.0)], vec![(0, 3.0)]];
        let view = csc(&rows, 1);
        let built = build(&view, &[1.0, 1.0, 1.0], SplitCriterion::Gini, None);
        assert_eq!(built.tree.nodes.len(), 1);
        assert_eq!(built.tree.predict_sparse(&[], &[]), 1.0);
    }

    #[test]
    fn feature_sampling_is_seeded() {
        let rows: Vec<Vec<(u32, f64)>> = (0..20)
            .map(|i| (0..6).map(|j| (j as u32, ((i * 7 + j * 3) % 5) as f64)).collect())
            .collect();
        let targets: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let view = csc(&rows, 6);
        let mk = |seed| {
            TreeBuilder {
                csc: &view,
                targets: &targets,
                criterion: SplitCriterion::Gini,
                max_depth: Some(3),
                min_samples_leaf: 1,
                max_features: 2,
                seed,
            }
            .build(&[1.0; 20])
            .tree
        };
        assert_eq!(mk(5), mk(5));
        assert_ne!(mk(5), mk(6));
    }
}
