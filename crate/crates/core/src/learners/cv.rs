use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LearnError, Result};
use crate::model::ExpertiseLabel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split over class indices.
///
/// Each class is shuffled and dealt round-robin over the folds; the next
/// class continues from the fold where the previous one stopped, so fold
/// sizes stay within one of each other as well. Fails when there are fewer
/// samples than folds.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(LearnError::InvalidParameter("k must be at least 2".into()));
    }
    let n = labels.len();
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &c) in labels.iter().enumerate() {
        if c > 1 {
            return Err(LearnError::InvalidParameter(format!("class index {c} out of range")));
        }
        by_class[c].push(i);
    }
    if n < k {
        let (class, count) =
            if !by_class[1].is_empty() && by_class[1].len() < by_class[0].len() || by_class[0].is_empty() {
                (ExpertiseLabel::Inexpert, by_class[1].len())
            } else {
                (ExpertiseLabel::Expert, by_class[0].len())
            };
        return Err(LearnError::ClassTooSmall { class, count, k, n });
    }

    let mut r = rng::stream(seed, "kfold");
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut slot = 0;
    for members in &mut by_class {
        members.shuffle(&mut r);
        for &i in members.iter() {
            tests[slot % k].push(i);
            slot += 1;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}
