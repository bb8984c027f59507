//! Greedy CART classification tree with weighted Gini impurity.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{check_xy, LearnError, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: [f64; 2],
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        counts: [f64; 2],
        /// `w·gini(node) − w_l·gini(left) − w_r·gini(right)`, weights unnormalized.
        weighted_decrease: f64,
    },
}

impl Node {
    pub fn counts(&self) -> [f64; 2] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

pub fn gini(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p = counts[0] / total;
    let q = counts[1] / total;
    1.0 - p * p - q * q
}

fn weighted_impurity(counts: [f64; 2]) -> f64 {
    (counts[0] + counts[1]) * gini(counts)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    params: &'a TreeParams,
    n_features: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [f64; 2] {
        let mut c = [0.0; 2];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn best_split(&self, idx: &mut [usize], features: &[usize], parent: [f64; 2]) -> Option<Candidate> {
        let parent_imp = weighted_impurity(parent);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<Candidate> = None;
        for &f in features {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = [0.0; 2];
            for pos in 0..idx.len() - 1 {
                let i = idx[pos];
                left[self.y[i]] += self.w[i];
                let (lo, hi) = (self.x[i][f], self.x[idx[pos + 1]][f]);
                if lo == hi {
                    continue;
                }
                let n_left = pos + 1;
                if n_left < min_leaf || idx.len() - n_left < min_leaf {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let decrease = parent_imp - weighted_impurity(left) - weighted_impurity(right);
                if best.is_none_or(|b| decrease > b.decrease) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Candidate { feature: f, threshold, decrease });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Option<&mut StreamRng>) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });

        let pure = counts[0] <= 0.0 || counts[1] <= 0.0;
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || idx.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let features: Vec<usize> = match (self.params.max_features, rng.as_deref_mut()) {
            (Some(m), Some(r)) if m < self.n_features => {
                let mut v = index::sample(r, self.n_features, m.max(1)).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..self.n_features).collect(),
        };
        let Some(split) = self.best_split(idx, &features, counts) else {
            return id;
        };
        let (mut left_idx, mut right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(&mut left_idx, depth + 1, rng);
        let right = self.grow(&mut right_idx, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            counts,
            weighted_decrease: split.decrease,
        };
        id
    }
}

impl DecisionTree {
    /// Fits on all rows with unit weights and every feature at every node.
    pub fn fit(x: &[Vec<f64>], y: &[usize], params: &TreeParams) -> Result<Self> {
        let w = vec![1.0; x.len()];
        Self::fit_weighted(x, y, &w, params, None)
    }

    /// Rows with zero weight are ignored; `rng` drives per-node feature
    /// subsampling when `max_features` is below the feature count.
    pub fn fit_weighted(
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        params: &TreeParams,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<Self> {
        let d = check_xy(x, y)?;
        if w.len() != x.len() {
            return Err(LearnError::InvalidParameter("weight count differs from row count".into()));
        }
        let mut idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        if idx.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        let mut b = Builder { x, y, w, params, n_features: d, nodes: Vec::new() };
        b.grow(&mut idx, 0, &mut rng);
        Ok(DecisionTree { nodes: b.nodes, n_features: d })
    }

    pub fn leaf_for(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split { feature, threshold, left, right, .. } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Class frequencies of the leaf reached by `row`.
    pub fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        let c = self.nodes[self.leaf_for(row)].counts();
        let t = c[0] + c[1];
        [c[0] / t, c[1] / t]
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let p = self.predict_proba(row);
        usize::from(p[1] > p[0])
    }

    /// Unnormalized impurity decrease per feature, divided by the root weight.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        let root = self.nodes[0].counts();
        let total = root[0] + root[1];
        for n in &self.nodes {
            if let Node::Split { feature, weighted_decrease, .. } = n {
                imp[*feature] += weighted_decrease / total;
            }
        }
        imp
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = DecisionTree::fit(&x, &[1, 1, 1], &TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[10.0]), 1);
    }

    #[test]
    fn one_dimensional_threshold_between_classes() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let t = DecisionTree::fit(&x, &[0, 0, 1, 1], &TreeParams::default()).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 2.0 && *threshold <= 3.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn xor_depth_two_fits_training_data() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let params = TreeParams { max_depth: Some(2), ..TreeParams::default() };
        let t = DecisionTree::fit(&x, &y, &params).unwrap();
        for (r, &c) in x.iter().zip(&y) {
            assert_eq!(t.predict(r), c);
        }
        assert!(t.depth() <= 2);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = DecisionTree::fit_weighted(&x, &[0, 1, 1], &[0.0, 1.0, 2.0], &TreeParams::default(), None).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].counts(), [0.0, 3.0]);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i)]).collect();
        let params = TreeParams { min_samples_leaf: 3, ..TreeParams::default() };
        let t = DecisionTree::fit(&x, &[0, 1, 0, 1, 1, 1], &params).unwrap();
        for n in &t.nodes {
            if let Node::Leaf { counts } = n {
                assert!(counts[0] + counts[1] >= 3.0);
            }
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(DecisionTree::fit(&[], &[], &TreeParams::default()), Err(LearnError::EmptyDataset));
    }
}
