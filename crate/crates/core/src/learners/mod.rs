//! Classifiers written from scratch plus the cross-validation harness.
//!
//! All models are binary: class 0 is `Expert`, class 1 is `Inexpert`.
//! Every trained model exposes the same `predict_proba` / `predict` contract
//! through [`TrainedModel`].

pub mod adaboost;
pub mod cv;
pub mod forest;
pub mod metrics;
pub mod svc;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::{ExpertiseLabel, FeatureMatrix};
use crate::rng;

pub use adaboost::{AdaBoost, AdaBoostParams, Stump};
pub use cv::{stratified_kfold, Fold};
pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use metrics::{ClassMetrics, ConfusionMatrix, EvalReport};
pub use svc::{Gamma, Kernel, Svc, SvcParams};
pub use tree::{DecisionTree, Node, TreeParams};

/// Version tag written into serialized model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset has no features")]
    NoFeatures,
    #[error("training data needs both classes, found only {0}")]
    SingleClass(ExpertiseLabel),
    #[error("weak learner no better than chance (weighted error {error:.4}) at round {round}")]
    DegenerateWeakLearner { round: usize, error: f64 },
    #[error("SMO stopped after {iterations} iterations with KKT violation {violation:.3e}")]
    NonConvergence { iterations: usize, violation: f64 },
    #[error("class {class} has {count} samples, too few for {k} folds of {n} samples")]
    ClassTooSmall { class: ExpertiseLabel, count: usize, k: usize, n: usize },
    #[error("model is not trained")]
    UntrainedModel,
    #[error("matrix has no labels")]
    UnlabeledMatrix,
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, LearnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    SvcLinear,
    SvcPoly,
    SvcRbf,
    SvcSigmoid,
    RandomForest,
    #[serde(rename = "adaboost", alias = "ada_boost")]
    AdaBoost,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::SvcLinear,
        ModelFamily::SvcPoly,
        ModelFamily::SvcRbf,
        ModelFamily::SvcSigmoid,
        ModelFamily::RandomForest,
        ModelFamily::AdaBoost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::SvcLinear => "svc_linear",
            ModelFamily::SvcPoly => "svc_poly",
            ModelFamily::SvcRbf => "svc_rbf",
            ModelFamily::SvcSigmoid => "svc_sigmoid",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::AdaBoost => "adaboost",
        }
    }

    fn kernel(self) -> Option<Kernel> {
        match self {
            ModelFamily::SvcLinear => Some(Kernel::Linear),
            ModelFamily::SvcPoly => Some(Kernel::Poly),
            ModelFamily::SvcRbf => Some(Kernel::Rbf),
            ModelFamily::SvcSigmoid => Some(Kernel::Sigmoid),
            _ => None,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "svc_linear" | "linear" | "svc" => ModelFamily::SvcLinear,
            "svc_poly" | "poly" | "polynomial" | "svc_polynomial" => ModelFamily::SvcPoly,
            "svc_rbf" | "rbf" => ModelFamily::SvcRbf,
            "svc_sigmoid" | "sigmoid" => ModelFamily::SvcSigmoid,
            "random_forest" | "rf" | "forest" => ModelFamily::RandomForest,
            "adaboost" | "ab" | "ada" => ModelFamily::AdaBoost,
            other => return Err(format!("unknown model family {other:?}")),
        })
    }
}

/// Hyperparameters for every family; each family reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub n_rounds: usize,
    pub c: f64,
    pub gamma: Gamma,
    pub degree: u32,
    pub coef0: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            n_rounds: 50,
            c: 1.0,
            gamma: Gamma::Scale,
            degree: 3,
            coef0: 0.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, seed: u64) -> Self {
        Self { family, hyperparams: Hyperparams::default(), seed }
    }

    pub fn forest_params(&self) -> ForestParams {
        let h = &self.hyperparams;
        ForestParams {
            n_trees: h.n_trees,
            max_features: h.max_features,
            bootstrap: h.bootstrap,
            tree: TreeParams { max_depth: h.max_depth, min_samples_leaf: h.min_samples_leaf, ..TreeParams::default() },
        }
    }

    pub fn svc_params(&self) -> Option<SvcParams> {
        let h = &self.hyperparams;
        self.family.kernel().map(|kernel| SvcParams {
            kernel,
            c: h.c,
            gamma: h.gamma,
            degree: h.degree,
            coef0: h.coef0,
            tol: h.tol,
            max_iter: h.max_iter,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyperparams;
        if h.n_trees == 0 || h.n_rounds == 0 {
            return Err(LearnError::InvalidParameter("n_trees and n_rounds must be positive".into()));
        }
        if h.c.is_nan() || h.c <= 0.0 || h.tol.is_nan() || h.tol <= 0.0 {
            return Err(LearnError::InvalidParameter("C and tol must be positive".into()));
        }
        if h.min_samples_leaf == 0 {
            return Err(LearnError::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        if let Gamma::Value(g) = h.gamma {
            if g.is_nan() || g <= 0.0 {
                return Err(LearnError::InvalidParameter("gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Learned state of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    RandomForest(RandomForest),
    AdaBoost(AdaBoost),
    Svc(Svc),
}

/// A fitted classifier with the feature names it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub state: ModelState,
}

impl TrainedModel {
    /// `[P(Expert), P(Inexpert)]` for one row.
    pub fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        match &self.state {
            ModelState::RandomForest(m) => m.predict_proba(row),
            ModelState::AdaBoost(m) => m.predict_proba(row),
            ModelState::Svc(m) => m.predict_proba(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> ExpertiseLabel {
        argmax_label(self.predict_proba(row))
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Reorders a named feature map into this model's column order.
    pub fn row_from_named(&self, named: &std::collections::HashMap<String, f64>) -> Result<Vec<f64>> {
        self.feature_names
            .iter()
            .map(|n| named.get(n).copied().ok_or_else(|| LearnError::UnknownColumn(n.clone())))
            .collect()
    }

    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(LearnError::FeatureCount { expected: self.n_features(), got: row.len() });
        }
        Ok(())
    }

    pub fn forest(&self) -> Option<&RandomForest> {
        match &self.state {
            ModelState::RandomForest(f) => Some(f),
            _ => None,
        }
    }
}

/// Ties go to `Expert`.
pub fn argmax_label(p: [f64; 2]) -> ExpertiseLabel {
    if p[1] > p[0] {
        ExpertiseLabel::Inexpert
    } else {
        ExpertiseLabel::Expert
    }
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(LearnError::InvalidParameter(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(LearnError::NoFeatures);
    }
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(LearnError::FeatureCount { expected: d, got: r.len() });
    }
    Ok(d)
}

pub(crate) fn require_both_classes(y: &[usize]) -> Result<()> {
    let ones = y.iter().filter(|&&c| c == 1).count();
    if ones == 0 {
        return Err(LearnError::SingleClass(ExpertiseLabel::Expert));
    }
    if ones == y.len() {
        return Err(LearnError::SingleClass(ExpertiseLabel::Inexpert));
    }
    Ok(())
}

/// Fits `spec` on raw rows and class indices.
pub fn fit(spec: &ModelSpec, feature_names: &[String], x: &[Vec<f64>], y: &[usize]) -> Result<TrainedModel> {
    spec.validate()?;
    check_xy(x, y)?;
    let state = match spec.family {
        ModelFamily::RandomForest => {
            ModelState::RandomForest(RandomForest::fit(x, y, &spec.forest_params(), spec.seed)?)
        }
        ModelFamily::AdaBoost => {
            ModelState::AdaBoost(AdaBoost::fit(x, y, &AdaBoostParams { n_rounds: spec.hyperparams.n_rounds })?)
        }
        _ => {
            let params = spec.svc_params().expect("svc family");
            ModelState::Svc(Svc::fit(x, y, &params)?)
        }
    };
    Ok(TrainedModel { version: MODEL_FORMAT_VERSION, spec: spec.clone(), feature_names: feature_names.to_vec(), state })
}

/// Fits `spec` on a labeled matrix.
pub fn train(spec: &ModelSpec, matrix: &FeatureMatrix) -> Result<TrainedModel> {
    let y = matrix.class_indices().ok_or(LearnError::UnlabeledMatrix)?;
    fit(spec, &matrix.column_names, &matrix.rows, &y)
}

/// Stratified k-fold evaluation with metrics computed from the pooled
/// confusion matrix of all test folds.
pub fn evaluate(spec: &ModelSpec, matrix: &FeatureMatrix, k: usize) -> Result<EvalReport> {
    let y = matrix.class_indices().ok_or(LearnError::UnlabeledMatrix)?;
    let folds = stratified_kfold(&y, k, rng::derive_seed(spec.seed, "cv"))?;
    let started = Instant::now();
    let mut cm = ConfusionMatrix::default();
    for fold in &folds {
        let x_train: Vec<Vec<f64>> = fold.train.iter().map(|&i| matrix.rows[i].clone()).collect();
        let y_train: Vec<usize> = fold.train.iter().map(|&i| y[i]).collect();
        let model = fit(spec, &matrix.column_names, &x_train, &y_train)?;
        for &i in &fold.test {
            cm.record(y[i], model.predict(&matrix.rows[i]).class_index());
        }
    }
    Ok(EvalReport::from_confusion(cm, started.elapsed().as_secs_f64()))
}
