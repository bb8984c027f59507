//! Two-filter feature selection: Pearson correlation with the target and
//! mean decrease in impurity over a random forest. A feature survives only
//! if both filters keep it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::learners::{ForestParams, LearnError, RandomForest};
use crate::model::FeatureMatrix;

pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_SELECTION_TREES: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("constant vector: correlation undefined")]
    DegenerateInput,
    #[error("matrix has no labels")]
    UnlabeledMatrix,
    #[error("delta must lie in [0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("need at least two rows per class")]
    TooFewRows,
    #[error("forest has no trees")]
    UntrainedModel,
    #[error("{0} importances for {1} columns")]
    ImportanceCount(usize, usize),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, SelectionError> {
    if x.len() != y.len() {
        return Err(SelectionError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(SelectionError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SelectionError::DegenerateInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_delta(delta: f64) -> Result<(), SelectionError> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(SelectionError::InvalidDelta(delta))
    }
}

/// Keeps columns with `|r| > delta`. Constant columns get `r = 0`.
pub fn pearson_filter(
    matrix: &FeatureMatrix,
    delta: f64,
) -> Result<(BTreeSet<String>, BTreeMap<String, f64>), SelectionError> {
    check_delta(delta)?;
    let target = matrix.encoded_target().ok_or(SelectionError::UnlabeledMatrix)?;
    let mut r = BTreeMap::new();
    let mut selected = BTreeSet::new();
    for (j, name) in matrix.column_names.iter().enumerate() {
        let value = match pearson(&matrix.column(j), &target) {
            Ok(v) => v,
            Err(SelectionError::DegenerateInput) => 0.0,
            Err(e) => return Err(e),
        };
        if value.abs() > delta {
            selected.insert(name.clone());
        }
        r.insert(name.clone(), value);
    }
    Ok((selected, r))
}

/// Normalized mean decrease in impurity keyed by column name.
pub fn mdi_importances(forest: &RandomForest, columns: &[String]) -> Result<BTreeMap<String, f64>, SelectionError> {
    if forest.trees.is_empty() {
        return Err(SelectionError::UntrainedModel);
    }
    let imp = forest.feature_importances();
    if imp.len() != columns.len() {
        return Err(SelectionError::ImportanceCount(imp.len(), columns.len()));
    }
    Ok(columns.iter().cloned().zip(imp).collect())
}

/// Keeps features whose importance is at least the mean importance.
pub fn mdi_filter(importances: &BTreeMap<String, f64>) -> BTreeSet<String> {
    if importances.is_empty() {
        return BTreeSet::new();
    }
    let mean = importances.values().sum::<f64>() / importances.len() as f64;
    // Relative slack so exact ties with the mean survive rounding.
    let floor = mean - mean.abs() * 1e-12;
    importances.iter().filter(|(_, &v)| v >= floor).map(|(k, _)| k.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub pearson: BTreeMap<String, f64>,
    pub pearson_selected: BTreeSet<String>,
    pub mdi: BTreeMap<String, f64>,
    pub mdi_selected: BTreeSet<String>,
    pub final_selected: BTreeSet<String>,
    pub delta: f64,
}

impl SelectionReport {
    /// Final columns in the matrix's column order.
    pub fn ordered_final(&self, matrix: &FeatureMatrix) -> Vec<String> {
        matrix.column_names.iter().filter(|c| self.final_selected.contains(*c)).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub delta: f64,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            forest: ForestParams { n_trees: DEFAULT_SELECTION_TREES, ..ForestParams::default() },
            seed: 0,
        }
    }
}

pub fn select(matrix: &FeatureMatrix, config: &SelectionConfig) -> Result<SelectionReport, SelectionError> {
    check_delta(config.delta)?;
    let y = matrix.class_indices().ok_or(SelectionError::UnlabeledMatrix)?;
    let ones = y.iter().filter(|&&c| c == 1).count();
    if ones < 2 || y.len() - ones < 2 {
        return Err(SelectionError::TooFewRows);
    }
    let (pearson_selected, pearson) = pearson_filter(matrix, config.delta)?;
    let forest = RandomForest::fit(&matrix.rows, &y, &config.forest, config.seed)?;
    let mdi = mdi_importances(&forest, &matrix.column_names)?;
    let mdi_selected = mdi_filter(&mdi);
    let final_selected = pearson_selected.intersection(&mdi_selected).cloned().collect();
    Ok(SelectionReport { pearson, pearson_selected, mdi, mdi_selected, final_selected, delta: config.delta })
}
