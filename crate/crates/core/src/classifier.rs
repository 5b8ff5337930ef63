//! Linear hinge-loss classifier trained by stochastic gradient descent.
//!
//! Each model carries an epoch counter (`epochs_seen`) and an examples
//! counter (`examples_seen`); the trainer's cost ledger is checked against
//! them.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdHyperparams {
    /// L2 penalty strength.
    pub lambda: f64,
    /// Base learning rate.
    pub eta0: f64,
    pub max_epochs_full_fit: usize,
    /// Minimum improvement of the epoch-average loss that resets patience.
    pub tol: f64,
    pub patience: usize,
}

impl Default for SgdHyperparams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            eta0: 0.01,
            max_epochs_full_fit: 1000,
            tol: 1e-3,
            patience: 5,
        }
    }
}

impl SgdHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and non-negative"));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::invalid("eta0 must be positive"));
        }
        if self.max_epochs_full_fit == 0 {
            return Err(Error::invalid("max_epochs_full_fit must be at least 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        Ok(())
    }

    /// `eta0 / (1 + eta0 · lambda · t)`
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.eta0 / (1.0 + self.eta0 * self.lambda * t as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    w: Array1<f64>,
    b: f64,
    epochs_seen: u64,
    examples_seen: u64,
    updates: u64,
    seed: u64,
    hyper: SgdHyperparams,
}

impl LinearModel {
    /// Weights drawn i.i.d. from `U[-0.01, 0.01]`, zero bias.
    pub fn init(dim: usize, seed: u64) -> Result<Self> {
        Self::with_hyperparams(dim, seed, SgdHyperparams::default())
    }

    pub fn with_hyperparams(dim: usize, seed: u64, hyper: SgdHyperparams) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be at least 1"));
        }
        hyper.validate()?;
        let mut rng = seed::rng(seed::derive_seed(seed, u64::MAX));
        let w = (0..dim).map(|_| rng.random_range(-0.01..=0.01)).collect();
        Ok(Self {
            w,
            b: 0.0,
            epochs_seen: 0,
            examples_seen: 0,
            updates: 0,
            seed,
            hyper,
        })
    }

    /// A model with fixed parameters, mostly useful for fixtures.
    pub fn from_parameters(w: Vec<f64>, b: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("model dimension must be at least 1"));
        }
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(Self {
            w: Array1::from(w),
            b,
            epochs_seen: 0,
            examples_seen: 0,
            updates: 0,
            seed: 0,
            hyper: SgdHyperparams::default(),
        })
    }

    pub fn set_hyperparams(&mut self, hyper: SgdHyperparams) -> Result<()> {
        hyper.validate()?;
        self.hyper = hyper;
        Ok(())
    }

    pub fn hyperparams(&self) -> &SgdHyperparams {
        &self.hyper
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.w.view()
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn epochs_seen(&self) -> u64 {
        self.epochs_seen
    }

    pub fn examples_seen(&self) -> u64 {
        self.examples_seen
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found,
            });
        }
        Ok(())
    }

    fn check_batch(&self, x: &ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::Empty("training batch"));
        }
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        self.check_dim(x.ncols())
    }

    /// One shuffled pass; returns the epoch-average hinge loss.
    fn epoch(&mut self, x: &ArrayView2<'_, f64>, y: &[u8]) -> f64 {
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive_seed(self.seed, self.epochs_seen)));

        let mut loss = 0.0;
        for &i in &order {
            let row = x.row(i);
            let target = if y[i] == 1 { 1.0 } else { -1.0 };
            let margin = target * (self.w.dot(&row) + self.b);
            let eta = self.hyper.learning_rate(self.updates);
            if self.hyper.lambda != 0.0 {
                self.w *= 1.0 - eta * self.hyper.lambda;
            }
            if margin < 1.0 {
                loss += 1.0 - margin;
                self.w.scaled_add(eta * target, &row);
                self.b += eta * target;
            }
            self.updates += 1;
        }
        self.epochs_seen += 1;
        self.examples_seen += y.len() as u64;
        loss / y.len() as f64
    }

    /// Exactly one epoch over the batch. Returns the epoch-average hinge loss.
    pub fn partial_fit(&mut self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<f64> {
        self.check_batch(&x, y)?;
        Ok(self.epoch(&x, y))
    }

    /// Repeats epochs (continuing from the current parameters) until the
    /// epoch-average loss fails to improve by `tol` for `patience`
    /// consecutive epochs, or `max_epochs_full_fit` is reached. Returns the
    /// number of epochs run.
    pub fn full_fit(&mut self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<usize> {
        self.check_batch(&x, y)?;
        let hyper = self.hyper;
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut epochs = 0;
        while epochs < hyper.max_epochs_full_fit {
            let loss = self.epoch(&x, y);
            epochs += 1;
            if loss < best - hyper.tol {
                stale = 0;
            } else {
                stale += 1;
            }
            best = best.min(loss);
            if stale >= hyper.patience {
                break;
            }
        }
        Ok(epochs)
    }

    pub fn decision(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.w.dot(&x) + self.b)
    }

    /// Class 1 when the score is strictly positive, otherwise class 0.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<u8> {
        Ok(u8::from(self.decision(x)? > 0.0))
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        self.check_dim(x.ncols())?;
        Ok(x.dot(&self.w).iter().map(|s| u8::from(s + self.b > 0.0)).collect())
    }

    pub fn accuracy_on(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let predictions = self.predict_batch(x)?;
        if predictions.len() != y.len() {
            return Err(Error::invalid("row and label counts differ"));
        }
        let correct = predictions.iter().zip(y).filter(|(p, t)| p == t).count();
        Ok(correct as f64 / y.len() as f64)
    }

    /// Mean hinge loss over a data set, without updating anything.
    pub fn hinge_loss(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<f64> {
        self.check_batch(&x, y)?;
        let scores = x.dot(&self.w);
        let total: f64 = scores
            .iter()
            .zip(y)
            .map(|(s, &c)| {
                let t = if c == 1 { 1.0 } else { -1.0 };
                (1.0 - t * (s + self.b)).max(0.0)
            })
            .sum();
        Ok(total / y.len() as f64)
    }

    /// Plain-text dump: a version header followed by `b`, `epochs_seen` and
    /// one weight per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "linear-model v1\nb {:e}\nepochs_seen {}\ndim {}\n",
            self.b,
            self.epochs_seen,
            self.w.len()
        );
        for v in &self.w {
            out.push_str(&format!("{v:e}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn no_reg() -> SgdHyperparams {
        SgdHyperparams {
            lambda: 0.0,
            ..SgdHyperparams::default()
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = LinearModel::init(3, 11).unwrap();
        let b = LinearModel::init(3, 11).unwrap();
        let c = LinearModel::init(3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights(), c.weights());
        assert_eq!(a.dim(), 3);
        assert!(a.weights().iter().all(|w| (-0.01..=0.01).contains(w)));
        assert_eq!(a.bias(), 0.0);
        assert_eq!(a.epochs_seen(), 0);
        assert!(LinearModel::init(0, 1).is_err());
    }

    #[test]
    fn single_violation_update() {
        let mut m = LinearModel::from_parameters(vec![0.0, 0.0], 0.0).unwrap();
        m.set_hyperparams(no_reg()).unwrap();
        m.partial_fit(arr2(&[[1.0, 0.0]]).view(), &[1]).unwrap();
        assert_eq!(m.weights(), arr1(&[0.01, 0.0]));
        assert_eq!(m.bias(), 0.01);
        assert_eq!(m.epochs_seen(), 1);
    }

    #[test]
    fn satisfied_margin_leaves_weights() {
        let mut m = LinearModel::from_parameters(vec![2.0], 0.0).unwrap();
        m.set_hyperparams(no_reg()).unwrap();
        m.partial_fit(arr2(&[[1.0]]).view(), &[1]).unwrap();
        assert_eq!(m.weights(), arr1(&[2.0]));
        assert_eq!(m.bias(), 0.0);
    }

    #[test]
    fn counters() {
        let mut m = LinearModel::init(1, 3).unwrap();
        let x = arr2(&[[1.0], [-1.0], [0.5]]);
        for k in 0..4 {
            assert_eq!(m.epochs_seen(), k);
            m.partial_fit(x.view(), &[1, 0, 1]).unwrap();
        }
        assert_eq!(m.examples_seen(), 12);
    }

    #[test]
    fn partial_fit_errors() {
        let mut m = LinearModel::init(2, 3).unwrap();
        assert!(matches!(
            m.partial_fit(arr2(&[[1.0]]).view(), &[1]),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(matches!(m.partial_fit(empty.view(), &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn full_fit_separates_two_points() {
        let x = arr2(&[[1.0], [-1.0]]);
        let y = [1, 0];
        let mut m = LinearModel::init(1, 5).unwrap();
        m.full_fit(x.view(), &y).unwrap();
        assert_eq!(m.accuracy_on(x.view(), &y).unwrap(), 1.0);
    }

    #[test]
    fn full_fit_caps() {
        let x = arr2(&[[1.0], [-1.0]]);
        let mut m = LinearModel::init(1, 5).unwrap();
        m.set_hyperparams(SgdHyperparams {
            max_epochs_full_fit: 1,
            ..SgdHyperparams::default()
        })
        .unwrap();
        assert_eq!(m.full_fit(x.view(), &[1, 0]).unwrap(), 1);
        assert_eq!(m.epochs_seen(), 1);

        let mut m = LinearModel::init(1, 5).unwrap();
        m.set_hyperparams(SgdHyperparams {
            tol: f64::INFINITY,
            patience: 3,
            ..SgdHyperparams::default()
        })
        .unwrap();
        assert_eq!(m.full_fit(x.view(), &[1, 0]).unwrap(), 3);
        assert_eq!(m.epochs_seen(), 3);
    }

    #[test]
    fn prediction_sign_and_tie() {
        let m = LinearModel::from_parameters(vec![1.0], 0.0).unwrap();
        assert_eq!(m.predict(arr1(&[2.0]).view()).unwrap(), 1);
        assert_eq!(m.predict(arr1(&[0.0]).view()).unwrap(), 0);
        let m = LinearModel::from_parameters(vec![-1.0, 2.0], 0.5).unwrap();
        assert_eq!(m.decision(arr1(&[1.0, 0.0]).view()).unwrap(), -0.5);
        assert_eq!(m.predict(arr1(&[1.0, 0.0]).view()).unwrap(), 0);
        assert!(m.predict(arr1(&[1.0]).view()).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let constant_zero = LinearModel::from_parameters(vec![0.0], -1.0).unwrap();
        let x = arr2(&[[1.0], [2.0], [3.0], [4.0]]);
        assert_eq!(constant_zero.accuracy_on(x.view(), &[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(constant_zero
            .accuracy_on(ndarray::Array2::zeros((0, 1)).view(), &[])
            .is_err());
    }

    #[test]
    fn text_dump_has_header() {
        let m = LinearModel::from_parameters(vec![1.5, -2.0], 0.25).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("linear-model v1\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
