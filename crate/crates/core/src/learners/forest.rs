use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{check_xy, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `max(1, floor(sqrt(d)))`
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(n) => n.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 50, max_features: MaxFeatures::Sqrt, bootstrap: true, tree: TreeParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

impl RandomForest {
    /// Tree `i` draws its bootstrap sample and feature subsets from stream
    /// `rf/i` of `seed`, so the result is independent of thread count.
    pub fn fit(x: &[Vec<f64>], y: &[usize], params: &ForestParams, seed: u64) -> Result<Self> {
        let d = check_xy(x, y)?;
        let n = x.len();
        let tree_params = TreeParams { max_features: Some(params.max_features.resolve(d)), ..params.tree.clone() };
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, &format!("rf/{i}"));
                let w = if params.bootstrap {
                    let mut w = vec![0.0; n];
                    for _ in 0..n {
                        w[r.random_range(0..n)] += 1.0;
                    }
                    w
                } else {
                    vec![1.0; n]
                };
                DecisionTree::fit_weighted(x, y, &w, &tree_params, Some(&mut r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomForest { trees, n_features: d })
    }

    /// Mean of per-tree leaf class frequencies.
    pub fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for t in &self.trees {
            let p = t.predict_proba(row);
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let n = self.trees.len() as f64;
        let p1 = acc[1] / n;
        [1.0 - p1, p1]
    }

    /// Mean decrease in impurity per feature: each tree's decreases are
    /// normalized to sum 1, then averaged over trees and renormalized.
    ///
    /// Trees that never split contribute nothing; if no tree splits, all
    /// features get `1/d`.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            let raw = t.raw_importances();
            let s: f64 = raw.iter().sum();
            if s > 0.0 {
                for (a, r) in acc.iter_mut().zip(&raw) {
                    *a += r / s;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total <= 0.0 {
            return vec![1.0 / self.n_features as f64; self.n_features];
        }
        acc.iter().map(|a| a / total).collect()
    }
}
