//! The voter population.
//!
//! Every voter either votes directly (it delegates to itself and holds a
//! positive weight) or has delegated, in which case its weight is zero and
//! its vote is cast by its representative: the voter reached by following
//! delegation links until a self-delegation. Total weight always equals the
//! number of voters.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Voter {
    pub(crate) model: LinearModel,
    pub(crate) weight: u32,
    pub(crate) delegate_to: usize,
    pub(crate) acc_history: Vec<f64>,
    pub(crate) q: f64,
}

impl Voter {
    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn delegate_to(&self) -> usize {
        self.delegate_to
    }

    pub fn accuracy_history(&self) -> &[f64] {
        &self.acc_history
    }

    /// Mean per-increment training accuracy; 1 before any increment.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_active(&self) -> bool {
        self.weight > 0
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    voters: Vec<Voter>,
    total_weight: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

impl Metrics {
    /// Accuracy and F1 for class 1. F1 is 0 when precision + recall is 0.
    pub fn from_predictions(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        if predicted.len() != truth.len() {
            return Err(Error::invalid("prediction and label counts differ"));
        }
        let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => {}
            }
            if p == t {
                correct += 1;
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(Metrics {
            accuracy: correct as f64 / truth.len() as f64,
            f1,
        })
    }
}

impl EnsembleState {
    /// Every voter starts as its own representative with weight 1.
    pub fn new(models: Vec<LinearModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let dim = models[0].dim();
        if let Some(m) = models.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
        let voters = models
            .into_iter()
            .enumerate()
            .map(|(i, model)| Voter {
                model,
                weight: 1,
                delegate_to: i,
                acc_history: Vec::new(),
                q: 1.0,
            })
            .collect::<Vec<_>>();
        let total_weight = voters.len() as u32;
        Ok(Self {
            voters,
            total_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.voters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voters.is_empty()
    }

    pub fn total_weight(&self) -> u32 {
        self.total_weight
    }

    pub fn voters(&self) -> &[Voter] {
        &self.voters
    }

    pub fn voter(&self, i: usize) -> &Voter {
        &self.voters[i]
    }

    pub fn weights(&self) -> Vec<u32> {
        self.voters.iter().map(|v| v.weight).collect()
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.voters.iter().map(|v| v.q).collect()
    }

    /// Indices of self-delegating voters, ascending.
    pub fn representatives(&self) -> Vec<usize> {
        (0..self.voters.len())
            .filter(|&i| self.voters[i].delegate_to == i)
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.voters.iter().filter(|v| v.weight > 0).count()
    }

    /// One epoch of every active voter on the increment, followed by its
    /// accuracy on that same increment.
    pub(crate) fn train_increment(&mut self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
        self.voters
            .par_iter_mut()
            .with_min_len(8)
            .filter(|v| v.weight > 0)
            .try_for_each(|v| {
                v.model.partial_fit(x, y)?;
                let a = v.model.accuracy_on(x, y)?;
                v.acc_history.push(a);
                v.q = v.acc_history.iter().sum::<f64>() / v.acc_history.len() as f64;
                Ok(())
            })
    }

    /// Full fit of every active voter; returns `(voter, epochs)` pairs.
    pub(crate) fn full_fit_active(&mut self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<Vec<(usize, usize)>> {
        self.voters
            .par_iter_mut()
            .enumerate()
            .filter(|(_, v)| v.weight > 0)
            .map(|(i, v)| v.model.full_fit(x, y).map(|e| (i, e)))
            .collect()
    }

    /// Follows delegation links from `i` to its representative.
    pub fn representative_of(&self, i: usize) -> Result<usize> {
        if i >= self.voters.len() {
            return Err(Error::invalid(format!("voter index {i} out of range")));
        }
        let mut current = i;
        for _ in 0..=self.voters.len() {
            let next = self.voters[current].delegate_to;
            if next == current {
                return Ok(current);
            }
            current = next;
        }
        Err(Error::Cycle(i))
    }

    /// Appends an accuracy observation for voter `i` and refreshes its mean.
    /// Ignored for voters that no longer vote directly.
    pub fn record_accuracy(&mut self, i: usize, accuracy: f64) {
        let voter = &mut self.voters[i];
        if voter.weight == 0 {
            return;
        }
        voter.acc_history.push(accuracy);
        voter.q = voter.acc_history.iter().sum::<f64>() / voter.acc_history.len() as f64;
    }

    /// Scores every active voter on one increment and records the accuracies.
    pub fn record_increment_accuracy(&mut self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
        let scores = self
            .voters
            .iter()
            .map(|v| {
                if v.weight > 0 {
                    v.model.accuracy_on(x, y).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, score) in scores.into_iter().enumerate() {
            if let Some(a) = score {
                self.record_accuracy(i, a);
            }
        }
        Ok(())
    }

    /// Weighted majority over representatives; ties go to class 0.
    pub fn weighted_vote(&self, x: ArrayView1<'_, f64>) -> Result<u8> {
        if self.active_count() == 0 {
            return Err(Error::Empty("active voters"));
        }
        let mut ones = 0u64;
        let mut zeros = 0u64;
        for v in self.voters.iter().filter(|v| v.weight > 0) {
            if v.model.predict(x)? == 1 {
                ones += v.weight as u64;
            } else {
                zeros += v.weight as u64;
            }
        }
        Ok(u8::from(ones > zeros))
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        if self.active_count() == 0 {
            return Err(Error::Empty("active voters"));
        }
        let mut ones = vec![0u64; x.nrows()];
        for v in self.voters.iter().filter(|v| v.weight > 0) {
            for (acc, p) in ones.iter_mut().zip(v.model.predict_batch(x)?) {
                if p == 1 {
                    *acc += v.weight as u64;
                }
            }
        }
        let total = self.total_weight as u64;
        Ok(ones.into_iter().map(|o| u8::from(2 * o > total)).collect())
    }

    pub fn evaluate_metrics(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<Metrics> {
        if y.is_empty() {
            return Err(Error::Empty("test set"));
        }
        Metrics::from_predictions(&self.predict_batch(x)?, y)
    }

    /// Smallest number of representatives whose combined weight exceeds half
    /// the total weight.
    pub fn min_majority_size(&self) -> Result<usize> {
        let mut weights: Vec<u32> = self
            .voters
            .iter()
            .filter(|v| v.weight > 0)
            .map(|v| v.weight)
            .collect();
        if weights.is_empty() {
            return Err(Error::Empty("active voters"));
        }
        weights.sort_unstable_by(|a, b| b.cmp(a));
        let total = self.total_weight as u64;
        let mut sum = 0u64;
        for (k, w) in weights.iter().enumerate() {
            sum += *w as u64;
            if 2 * sum > total {
                return Ok(k + 1);
            }
        }
        Err(Error::Invariant("weights do not reach a majority".into()))
    }

    /// Moves voter `i`'s weight to the representative of `j` and points
    /// `i` at `j`. Preconditions are checked by the caller.
    pub(crate) fn transfer(&mut self, i: usize, j: usize, rep: usize) -> u32 {
        let moved = self.voters[i].weight;
        self.voters[rep].weight += moved;
        self.voters[i].weight = 0;
        self.voters[i].delegate_to = j;
        moved
    }

    /// Checks weight conservation, the weight/self-delegation correspondence,
    /// acyclicity, and that every weight equals the number of voters it
    /// represents.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.voters.len();
        let sum: u64 = self.voters.iter().map(|v| v.weight as u64).sum();
        if sum != n as u64 || self.total_weight as usize != n {
            return Err(Error::Invariant(format!(
                "weights sum to {sum} (total {}) for {n} voters",
                self.total_weight
            )));
        }
        let mut represented = vec![0u32; n];
        for i in 0..n {
            let rep = self.representative_of(i)?;
            represented[rep] += 1;
        }
        for (i, v) in self.voters.iter().enumerate() {
            if (v.weight > 0) != (v.delegate_to == i) {
                return Err(Error::Invariant(format!(
                    "voter {i} has weight {} but delegates to {}",
                    v.weight, v.delegate_to
                )));
            }
            if v.weight != represented[i] {
                return Err(Error::Invariant(format!(
                    "voter {i} holds weight {} but represents {}",
                    v.weight, represented[i]
                )));
            }
        }
        Ok(())
    }
}
