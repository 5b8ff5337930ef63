//! Comparison ensembles: the direct ensemble and discrete AdaBoost over
//! decision stumps.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::MechanismKind;
use crate::trainer::{run_training, TrainConfig, TrainReport};

const MIN_ERROR: f64 = 1e-10;

/// A one-split classifier voting `polarity` above the threshold and
/// `-polarity` at or below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    /// Prediction in `{-1, +1}`.
    pub fn vote(&self, x: ArrayView1<'_, f64>) -> i8 {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub stumps: Vec<Stump>,
    pub budget: usize,
    /// One pass over the training set per stump.
    pub cost_examples: u64,
    /// Weighted training error of each round's stump.
    pub round_errors: Vec<f64>,
    /// Sum of the example weights after each round's renormalization.
    pub weight_sums: Vec<f64>,
}

fn signed(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// The stump with the lowest weighted error over every feature, midpoint
/// between consecutive distinct values, and polarity. Returns the stump
/// (with `alpha = 0`) and its weighted error.
pub fn best_stump(x: ArrayView2<'_, f64>, y: &[u8], weights: &[f64]) -> Result<(Stump, f64)> {
    let (m, d) = x.dim();
    if m == 0 || d == 0 {
        return Err(Error::Empty("stump training data"));
    }
    if y.len() != m || weights.len() != m {
        return Err(Error::invalid("feature, label and weight counts differ"));
    }
    let total: f64 = weights.iter().sum();
    // weighted mass of positives; a threshold below every value predicts all +polarity
    let pos_total: f64 = weights.iter().zip(y).filter(|(_, &c)| c == 1).map(|(w, _)| w).sum();

    (0..d)
        .into_par_iter()
        .map(|f| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
            let first = x[[order[0], f]];
            // error of polarity +1 with threshold below every value
            let mut err_pos = total - pos_total;
            let mut best = (first - 1.0, err_pos.min(total - err_pos), if err_pos <= total - err_pos { 1 } else { -1 });
            let mut k = 0;
            while k < m {
                let v = x[[order[k], f]];
                while k < m && x[[order[k], f]] == v {
                    let i = order[k];
                    // example i moves to the `-polarity` side
                    err_pos += if y[i] == 1 { weights[i] } else { -weights[i] };
                    k += 1;
                }
                if k == m {
                    break;
                }
                let threshold = 0.5 * (v + x[[order[k], f]]);
                let err_neg = total - err_pos;
                if err_pos < best.1 {
                    best = (threshold, err_pos, 1);
                }
                if err_neg < best.1 {
                    best = (threshold, err_neg, -1);
                }
            }
            (
                Stump {
                    feature: f,
                    threshold: best.0,
                    polarity: best.2,
                    alpha: 0.0,
                },
                best.1.max(0.0),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .ok_or(Error::Empty("stump training data"))
}

/// Discrete AdaBoost with up to `budget` stumps.
pub fn train_adaboost(x: ArrayView2<'_, f64>, y: &[u8], budget: usize) -> Result<BoostedEnsemble> {
    if budget == 0 {
        return Err(Error::invalid("estimator budget must be at least 1"));
    }
    let m = x.nrows();
    if y.len() != m {
        return Err(Error::invalid("feature and label counts differ"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("boosting needs examples of both classes"));
    }
    let mut weights = vec![1.0 / m as f64; m];
    let mut ensemble = BoostedEnsemble {
        stumps: Vec::new(),
        budget,
        cost_examples: 0,
        round_errors: Vec::new(),
        weight_sums: Vec::new(),
    };
    for _ in 0..budget {
        let (mut stump, err) = best_stump(x, y, &weights)?;
        if err >= 0.5 {
            break;
        }
        let eps = err.max(MIN_ERROR);
        stump.alpha = 0.5 * ((1.0 - eps) / eps).ln();
        for (i, w) in weights.iter_mut().enumerate() {
            *w *= (-stump.alpha * signed(y[i]) * stump.vote(x.row(i)) as f64).exp();
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        ensemble.stumps.push(stump);
        ensemble.cost_examples += m as u64;
        ensemble.round_errors.push(err);
        ensemble.weight_sums.push(weights.iter().sum());
        if err == 0.0 {
            break;
        }
    }
    if ensemble.stumps.is_empty() {
        return Err(Error::invalid("no stump beats chance on this data"));
    }
    Ok(ensemble)
}

impl BoostedEnsemble {
    pub fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(x) as f64).sum()
    }

    /// Class 1 when the weighted vote is positive.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<u8> {
        predict_boosted(self, x)
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        x.rows().into_iter().map(|row| predict_boosted(self, row)).collect()
    }

    pub fn accuracy_on(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let p = self.predict_batch(x)?;
        Ok(p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
    }
}

pub fn predict_boosted(ensemble: &BoostedEnsemble, x: ArrayView1<'_, f64>) -> Result<u8> {
    if ensemble.stumps.is_empty() {
        return Err(Error::Empty("boosted ensemble"));
    }
    if let Some(s) = ensemble.stumps.iter().find(|s| s.feature >= x.len()) {
        return Err(Error::DimensionMismatch {
            expected: s.feature + 1,
            found: x.len(),
        });
    }
    Ok(u8::from(ensemble.score(x) > 0.0))
}

/// The trainer with delegation off and a final full fit for every voter.
pub fn run_direct_baseline(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<TrainReport> {
    let cfg = TrainConfig {
        mechanism: MechanismKind::Direct,
        final_full_fit: true,
        ..config.clone()
    };
    run_training(&cfg, train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn brute_force_error(x: ArrayView2<'_, f64>, y: &[u8], w: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = x.column(f).to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let mut thresholds = vec![vals[0] - 1.0];
            thresholds.extend(vals.windows(2).map(|p| 0.5 * (p[0] + p[1])));
            for t in thresholds {
                for polarity in [1i8, -1] {
                    let s = Stump { feature: f, threshold: t, polarity, alpha: 1.0 };
                    let err: f64 = (0..y.len())
                        .filter(|&i| (s.vote(x.row(i)) == 1) != (y[i] == 1))
                        .map(|i| w[i])
                        .sum();
                    best = best.min(err);
                }
            }
        }
        best
    }

    #[test]
    fn separable_one_round() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0]];
        let y = [0, 0, 1, 1];
        let e = train_adaboost(x.view(), &y, 1).unwrap();
        assert_eq!(e.stumps.len(), 1);
        assert_eq!(e.round_errors, vec![0.0]);
        assert_eq!(e.accuracy_on(x.view(), &y).unwrap(), 1.0);
        let e = train_adaboost(x.view(), &y, 10).unwrap();
        assert_eq!(e.stumps.len(), 1);
    }

    #[test]
    fn stump_search_is_exhaustive() {
        let mut state = 17u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let x = Array2::from_shape_fn((15, 3), |_| (next() * 6.0).round());
            let y: Vec<u8> = (0..15).map(|_| u8::from(next() < 0.5)).collect();
            let raw: Vec<f64> = (0..15).map(|_| next() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let (stump, err) = best_stump(x.view(), &y, &w).unwrap();
            assert!((err - brute_force_error(x.view(), &y, &w)).abs() < 1e-12);
            let recomputed: f64 = (0..15)
                .filter(|&i| (stump.vote(x.row(i)) == 1) != (y[i] == 1))
                .map(|i| w[i])
                .sum();
            assert!((recomputed - err).abs() < 1e-12);
        }
    }

    #[test]
    fn boosting_beats_one_stump_on_interval() {
        // positives inside (-1, 1): no single threshold separates them
        let xs: Vec<f64> = (0..40).map(|i| -2.0 + i as f64 * 0.1).collect();
        let x = Array2::from_shape_vec((40, 1), xs.clone()).unwrap();
        let y: Vec<u8> = xs.iter().map(|&v| u8::from(v.abs() < 1.0)).collect();
        let uniform = vec![1.0 / 40.0; 40];
        let (single, err) = best_stump(x.view(), &y, &uniform).unwrap();
        let e = train_adaboost(x.view(), &y, 10).unwrap();
        assert!(e.accuracy_on(x.view(), &y).unwrap() > 1.0 - err);
        assert!(err > 0.0 && single.feature == 0);
        for s in &e.weight_sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(e.cost_examples, 40 * e.stumps.len() as u64);
    }

    #[test]
    fn weighted_sign_vote() {
        let e = BoostedEnsemble {
            stumps: vec![
                Stump { feature: 0, threshold: 0.0, polarity: 1, alpha: 1.0 },
                Stump { feature: 0, threshold: 0.0, polarity: -1, alpha: 2.0 },
            ],
            budget: 2,
            cost_examples: 0,
            round_errors: vec![],
            weight_sums: vec![],
        };
        assert_eq!(e.predict(array![1.0].view()).unwrap(), 0);
        let tie = BoostedEnsemble {
            stumps: vec![
                Stump { feature: 0, threshold: 0.0, polarity: 1, alpha: 1.0 },
                Stump { feature: 0, threshold: 0.0, polarity: -1, alpha: 1.0 },
            ],
            ..e.clone()
        };
        assert_eq!(tie.predict(array![1.0].view()).unwrap(), 0);
        let empty = BoostedEnsemble { stumps: vec![], ..e };
        assert!(empty.predict(array![1.0].view()).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(train_adaboost(x.view(), &[1, 1], 3).is_err());
    }
}
