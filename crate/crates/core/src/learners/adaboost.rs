//! Discrete two-class AdaBoost (SAMME with two classes) over decision stumps.

use serde::{Deserialize, Serialize};

use super::{check_xy, logistic, require_both_classes, LearnError, Result};

/// Stage weight used when a stump makes no weighted error.
pub const ALPHA_CAP: f64 = 23.025_850_929_940_457; // ln(1e10)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { n_rounds: 50 }
    }
}

/// One-split classifier: `x[feature] <= threshold` predicts `left_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left_class: usize,
}

impl Stump {
    pub fn predict(&self, row: &[f64]) -> usize {
        if row[self.feature] <= self.threshold {
            self.left_class
        } else {
            1 - self.left_class
        }
    }

    /// Minimum weighted-error stump over all features, thresholds and
    /// polarities. Returns the stump and its error relative to the total weight.
    #[allow(clippy::needless_range_loop)]
    pub fn fit(x: &[Vec<f64>], y: &[usize], w: &[f64]) -> (Stump, f64) {
        let d = x[0].len();
        let total: f64 = w.iter().sum();
        let mut best = (Stump { feature: 0, threshold: f64::MIN, left_class: 0 }, f64::INFINITY);
        let mut order: Vec<usize> = (0..x.len()).collect();
        for f in 0..d {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            // Error of "left predicts 0, right predicts 1" with nothing on the left.
            let mut err_left0: f64 = order.iter().filter(|&&i| y[i] == 0).map(|&i| w[i]).sum();
            let lowest = x[order[0]][f];
            let consider = |thr: f64, e0: f64, best: &mut (Stump, f64)| {
                for (left_class, e) in [(0usize, e0), (1usize, total - e0)] {
                    if e < best.1 {
                        *best = (Stump { feature: f, threshold: thr, left_class }, e);
                    }
                }
            };
            consider(lowest - 1.0, err_left0, &mut best);
            for pos in 0..order.len() {
                let i = order[pos];
                // Moving row i to the left flips its prediction to class 0.
                err_left0 += if y[i] == 1 { w[i] } else { -w[i] };
                let lo = x[i][f];
                let Some(&next) = order.get(pos + 1) else {
                    break;
                };
                let hi = x[next][f];
                if lo == hi {
                    continue;
                }
                let mut thr = lo + (hi - lo) / 2.0;
                if thr >= hi {
                    thr = lo;
                }
                consider(thr, err_left0, &mut best);
            }
        }
        let (stump, err) = best;
        (stump, (err / total).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stumps: Vec<Stump>,
    /// Stage weights, all strictly positive.
    pub alphas: Vec<f64>,
    /// Weighted error of each accepted stump at its round.
    pub errors: Vec<f64>,
}

impl AdaBoost {
    pub fn fit(x: &[Vec<f64>], y: &[usize], params: &AdaBoostParams) -> Result<Self> {
        check_xy(x, y)?;
        require_both_classes(y)?;
        let n = x.len();
        let mut w = vec![1.0 / n as f64; n];
        let mut model = AdaBoost { stumps: Vec::new(), alphas: Vec::new(), errors: Vec::new() };
        for round in 0..params.n_rounds.max(1) {
            let (stump, eps) = Stump::fit(x, y, &w);
            if eps >= 0.5 - 1e-12 {
                if round == 0 {
                    return Err(LearnError::DegenerateWeakLearner { round: 1, error: eps });
                }
                break;
            }
            if eps <= 1e-12 {
                model.stumps.push(stump);
                model.alphas.push(ALPHA_CAP);
                model.errors.push(0.0);
                break;
            }
            let alpha = ((1.0 - eps) / eps).ln();
            let boost = alpha.exp();
            for i in 0..n {
                if stump.predict(&x[i]) != y[i] {
                    w[i] *= boost;
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            model.stumps.push(stump);
            model.alphas.push(alpha);
            model.errors.push(eps);
        }
        Ok(model)
    }

    /// `Σ α_t h_t(x)` with `h = +1` for Inexpert and `−1` for Expert.
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.stumps.iter().zip(&self.alphas).map(|(s, a)| if s.predict(row) == 1 { *a } else { -*a }).sum()
    }

    pub fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        let p = logistic(self.margin(row));
        [1.0 - p, p]
    }

    /// Training error of the ensemble truncated after each round.
    pub fn staged_errors(&self, x: &[Vec<f64>], y: &[usize]) -> Vec<f64> {
        let mut margins = vec![0.0; x.len()];
        let mut out = Vec::with_capacity(self.stumps.len());
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            for (m, row) in margins.iter_mut().zip(x) {
                *m += if s.predict(row) == 1 { *a } else { -*a };
            }
            let wrong = margins.iter().zip(y).filter(|(m, &c)| usize::from(**m > 0.0) != c).count();
            out.push(wrong as f64 / x.len() as f64);
        }
        out
    }
}
