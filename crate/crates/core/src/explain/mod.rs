//! Local surrogate explanations.
//!
//! An instance is explained in three steps: sample a neighbourhood from the
//! training distribution, score it with the black-box model, and fit a
//! proximity-weighted ridge regression of `P(Inexpert)` on standardized
//! features. Coefficients become signed relevances; each reported feature
//! is described by the training-quartile bin that holds its value.

pub mod catalog;
pub mod report;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::quantile_sorted;
use crate::learners::{LearnError, TrainedModel};
use crate::model::{ExpertiseLabel, FeatureMatrix};
use crate::rng;

pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_TOP_K: usize = 6;
pub const MIN_SAMPLES: usize = 50;
pub const DEFAULT_KERNEL_FACTOR: f64 = 0.75;
pub const RIDGE_LAMBDA: f64 = 1e-3;
pub const MAX_RIDGE_LAMBDA: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("training statistics cover {stats} features, instance has {instance}")]
    FeatureCount { stats: usize, instance: usize },
    #[error("training statistics do not match the model's features")]
    FeatureMismatch,
    #[error("surrogate system singular up to ridge {0}")]
    SingularSystem(f64),
    #[error("empty training matrix")]
    EmptyTraining,
    #[error(transparent)]
    Learn(#[from] LearnError),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// Mean, population standard deviation and quartiles of one training column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub features: Vec<String>,
    pub stats: Vec<FeatureStats>,
}

impl TrainingStats {
    pub fn from_matrix(matrix: &FeatureMatrix) -> Result<Self> {
        if matrix.n_rows() == 0 {
            return Err(ExplainError::EmptyTraining);
        }
        let stats = (0..matrix.n_cols())
            .map(|j| {
                let mut col = matrix.column(j);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                col.sort_by(f64::total_cmp);
                FeatureStats {
                    mean,
                    std,
                    q1: quantile_sorted(&col, 0.25),
                    q2: quantile_sorted(&col, 0.5),
                    q3: quantile_sorted(&col, 0.75),
                }
            })
            .collect();
        Ok(Self { features: matrix.column_names.clone(), stats })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    fn scale(&self, j: usize) -> f64 {
        let s = self.stats[j].std;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub n_samples: usize,
    pub top_k: usize,
    /// Kernel width is `kernel_factor · √d`.
    pub kernel_factor: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { n_samples: DEFAULT_SAMPLES, top_k: DEFAULT_TOP_K, kernel_factor: DEFAULT_KERNEL_FACTOR }
    }
}

/// Neighbourhood samples and their proximity weights. Row 0 is the instance.
pub fn perturb(
    instance: &[f64],
    stats: &TrainingStats,
    n_samples: usize,
    kernel_factor: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if n_samples < MIN_SAMPLES {
        return Err(ExplainError::TooFewSamples(n_samples));
    }
    let d = instance.len();
    if d != stats.len() {
        return Err(ExplainError::FeatureCount { stats: stats.len(), instance: d });
    }
    let mut r = rng::stream(seed, "perturb");
    let mut samples = Vec::with_capacity(n_samples);
    samples.push(instance.to_vec());
    for _ in 1..n_samples {
        samples.push(
            stats
                .stats
                .iter()
                .map(|s| {
                    let z: f64 = r.sample(StandardNormal);
                    s.mean + s.std * z
                })
                .collect(),
        );
    }
    let sigma = kernel_factor * (d as f64).sqrt();
    let weights = samples
        .iter()
        .map(|s| {
            let d2: f64 = (0..d).map(|j| ((s[j] - instance[j]) / stats.scale(j)).powi(2)).sum();
            (-d2 / (sigma * sigma)).exp()
        })
        .collect();
    Ok((samples, weights))
}

/// Weighted linear fit on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    /// One coefficient per feature, in standardized units.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted coefficient of determination, clamped to `[0, 1]`.
    pub r2: f64,
    pub lambda: f64,
}

/// Ridge regression of `targets` on `samples`, standardized column-wise by
/// the samples' own mean and deviation. The intercept is not penalized.
pub fn fit_surrogate(samples: &[Vec<f64>], weights: &[f64], targets: &[f64]) -> Result<Surrogate> {
    let n = samples.len();
    let d = samples.first().map_or(0, Vec::len);
    let wsum: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|v| v / wsum).collect();

    let mut z = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            z[(i, j)] = if sd > 0.0 { (samples[i][j] - mean) / sd } else { 0.0 };
        }
    }
    let zbar: Vec<f64> = (0..d).map(|j| (0..n).map(|i| w[i] * z[(i, j)]).sum()).collect();
    let ybar: f64 = (0..n).map(|i| w[i] * targets[i]).sum();
    let mut zc = z;
    for i in 0..n {
        for j in 0..d {
            zc[(i, j)] -= zbar[j];
        }
    }
    let yc = DVector::from_iterator(n, targets.iter().map(|t| t - ybar));
    let wv = DVector::from_vec(w.clone());
    let gram = zc.transpose() * DMatrix::from_diagonal(&wv) * &zc;
    let rhs = zc.transpose() * yc.component_mul(&wv);

    let mut lambda = RIDGE_LAMBDA;
    let beta = loop {
        let a = &gram + DMatrix::identity(d, d) * lambda;
        if let Some(ch) = a.cholesky() {
            break ch.solve(&rhs);
        }
        lambda *= 10.0;
        if lambda > MAX_RIDGE_LAMBDA * (1.0 + 1e-9) {
            return Err(ExplainError::SingularSystem(MAX_RIDGE_LAMBDA));
        }
    };

    let fitted = &zc * &beta;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        ss_res += w[i] * (yc[i] - fitted[i]).powi(2);
        ss_tot += w[i] * yc[i].powi(2);
    }
    let r2 = if ss_tot <= 1e-18 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let intercept = ybar - beta.iter().zip(&zbar).map(|(b, m)| b * m).sum::<f64>();
    Ok(Surrogate { coefficients: beta.iter().copied().collect(), intercept, r2, lambda })
}

/// Upper-inclusive bin from the training quartiles: `lower < value ≤ upper`,
/// with `None` standing for an unbounded side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bin {
    pub fn of(value: f64, s: &FeatureStats) -> Self {
        if value <= s.q1 {
            Bin { lower: None, upper: Some(s.q1) }
        } else if value <= s.q2 {
            Bin { lower: Some(s.q1), upper: Some(s.q2) }
        } else if value <= s.q3 {
            Bin { lower: Some(s.q2), upper: Some(s.q3) }
        } else {
            Bin { lower: Some(s.q3), upper: None }
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower.is_none_or(|l| l < value) && self.upper.is_none_or(|u| value <= u)
    }

    /// `"26.00 < f03 ≤ 34.00"`, `"f03 ≤ 26.00"` or `"f03 > 34.00"`.
    pub fn statement(&self, subject: &str, unit: &str) -> String {
        let fmt = |v: f64| if unit.is_empty() { format!("{v:.2}") } else { format!("{v:.2} {unit}") };
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{} < {subject} ≤ {}", fmt(l), fmt(u)),
            (None, Some(u)) => format!("{subject} ≤ {}", fmt(u)),
            (Some(l), None) => format!("{subject} > {}", fmt(l)),
            (None, None) => subject.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub feature: String,
    pub value: f64,
    pub bin: Bin,
    pub bin_statement: String,
    pub signed_weight: f64,
    /// Instance value in training standard deviations from the mean.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    pub predicted: ExpertiseLabel,
    pub confidence: f64,
    /// Sorted by `|signed_weight|`, largest first.
    pub terms: Vec<Term>,
    pub surrogate_r2: f64,
}

fn check_stats(model: &TrainedModel, stats: &TrainingStats) -> Result<()> {
    if model.feature_names != stats.features {
        return Err(ExplainError::FeatureMismatch);
    }
    Ok(())
}

/// Fitted surrogate for one instance, before term selection.
pub fn local_surrogate(
    model: &TrainedModel,
    instance: &[f64],
    stats: &TrainingStats,
    config: &ExplainConfig,
    seed: u64,
) -> Result<Surrogate> {
    check_stats(model, stats)?;
    model.check_row(instance)?;
    let (samples, weights) = perturb(instance, stats, config.n_samples, config.kernel_factor, seed)?;
    let probs: Vec<f64> = samples.iter().map(|s| model.predict_proba(s)[1]).collect();
    fit_surrogate(&samples, &weights, &probs)
}

pub fn explain_instance(
    model: &TrainedModel,
    instance_id: &str,
    instance: &[f64],
    stats: &TrainingStats,
    config: &ExplainConfig,
    seed: u64,
) -> Result<Explanation> {
    let surrogate = local_surrogate(model, instance, stats, config, seed)?;
    let proba = model.predict_proba(instance);
    let predicted = crate::learners::argmax_label(proba);
    let mut order: Vec<usize> = (0..instance.len()).collect();
    order.sort_by(|&a, &b| surrogate.coefficients[b].abs().total_cmp(&surrogate.coefficients[a].abs()));
    let terms = order
        .into_iter()
        .take(config.top_k)
        .map(|j| {
            let s = &stats.stats[j];
            let bin = Bin::of(instance[j], s);
            Term {
                feature: stats.features[j].clone(),
                value: instance[j],
                bin,
                bin_statement: bin.statement(&stats.features[j], ""),
                signed_weight: surrogate.coefficients[j],
                z_score: (instance[j] - s.mean) / stats.scale(j),
            }
        })
        .collect();
    Ok(Explanation {
        instance_id: instance_id.to_string(),
        predicted,
        confidence: proba[predicted.class_index()],
        terms,
        surrogate_r2: surrogate.r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mean_abs_weight: f64,
}

/// Features by mean absolute surrogate weight over a dataset, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRanking {
    pub features: Vec<RankedFeature>,
}

impl RelevanceRanking {
    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.feature.as_str()).collect()
    }
}

/// Explains every row of `matrix` (which must carry the model's columns)
/// and averages the absolute weights.
pub fn rank_features(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    stats: &TrainingStats,
    config: &ExplainConfig,
    seed: u64,
) -> Result<RelevanceRanking> {
    check_stats(model, stats)?;
    if matrix.column_names != model.feature_names {
        return Err(ExplainError::FeatureMismatch);
    }
    let d = model.n_features();
    let per_row: Vec<Vec<f64>> = matrix
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            local_surrogate(model, row, stats, config, rng::derive_seed(seed, &format!("rank/{i}")))
                .map(|s| s.coefficients)
        })
        .collect::<Result<_>>()?;
    let n = per_row.len().max(1) as f64;
    let mut features: Vec<RankedFeature> = (0..d)
        .map(|j| RankedFeature {
            feature: model.feature_names[j].clone(),
            mean_abs_weight: per_row.iter().map(|c| c[j].abs()).sum::<f64>() / n,
        })
        .collect();
    features.sort_by(|a, b| b.mean_abs_weight.total_cmp(&a.mean_abs_weight));
    Ok(RelevanceRanking { features })
}
