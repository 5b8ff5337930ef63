//! Incremental training with delegation-based pruning.
//!
//! Each increment, every representative trains one epoch on the next slice of
//! training data and scores itself on it. The selection rule then picks the
//! representatives that stop training, and each hands its weight to another
//! voter. Once the data is used up or no further delegation is allowed, the
//! surviving representatives optionally train to convergence on the whole
//! training set.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{LinearModel, SgdHyperparams};
use crate::data::{shuffle_split, Dataset, IncrementPartition};
use crate::ensemble::{EnsembleState, Metrics};
use crate::error::{Error, Result};
use crate::mechanisms::{
    apply_delegation, delegation_distribution, select_delegators, DelegationEvent, MechanismKind,
    MechanismSpec,
};
use crate::seed::{derive_seed, rng};

const MECHANISM_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n: usize,
    pub n_final: usize,
    /// Fraction of representatives retained after each increment.
    pub retention: f64,
    pub increment_size: usize,
    pub mechanism: MechanismKind,
    pub final_full_fit: bool,
    pub seed: u64,
    pub hyper: SgdHyperparams,
    /// Evaluate the whole test set after every increment.
    pub trace_test_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 350,
            n_final: 10,
            retention: 0.95,
            increment_size: 65,
            mechanism: MechanismKind::PropWeighted,
            final_full_fit: true,
            seed: 0,
            hyper: SgdHyperparams::default(),
            trace_test_accuracy: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.n_final == 0 || self.n_final > self.n {
            return Err(Error::invalid(format!(
                "n_final must lie in [1, n = {}], got {}",
                self.n, self.n_final
            )));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::invalid("n does not fit a 32-bit weight"));
        }
        if self.increment_size == 0 {
            return Err(Error::invalid("increment size must be at least 1"));
        }
        self.mechanism_spec().validate()?;
        self.hyper.validate()
    }

    pub fn mechanism_spec(&self) -> MechanismSpec {
        MechanismSpec {
            kind: self.mechanism,
            retention: self.retention,
            seed: derive_seed(self.seed, MECHANISM_STREAM),
        }
    }

    /// The same configuration with delegation switched off.
    pub fn direct(&self) -> Self {
        Self {
            mechanism: MechanismKind::Direct,
            ..self.clone()
        }
    }
}

/// Training cost in examples seen, counted per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub per_voter_epochs: Vec<u64>,
    pub per_voter_examples: Vec<u64>,
    pub incremental_cost: u64,
    pub full_fit_cost: u64,
    pub total_cost: u64,
    pub direct_reference_cost: Option<u64>,
}

impl CostLedger {
    pub fn relative_cost(&self) -> Option<f64> {
        match self.direct_reference_cost {
            Some(r) if r > 0 => Some(self.total_cost as f64 / r as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub active: usize,
    pub test_accuracy: Option<f64>,
    pub min_majority: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub increments_available: usize,
    pub trace: Vec<TraceRow>,
    pub events: Vec<DelegationEvent>,
    pub final_metrics: Option<Metrics>,
    pub ledger: CostLedger,
    pub final_weights: Vec<u32>,
    pub final_active: usize,
    pub final_min_majority: usize,
    /// Whether pruning reached `n_final` before the data ran out.
    pub fully_delegated: bool,
}

impl TrainReport {
    pub fn increments_executed(&self) -> usize {
        self.trace.len()
    }
}

fn check_dims(train: &Dataset, test: Option<&Dataset>) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if let Some(test) = test {
        if test.n_features() != train.n_features() {
            return Err(Error::DimensionMismatch {
                expected: train.n_features(),
                found: test.n_features(),
            });
        }
    }
    Ok(())
}

fn evaluate(state: &EnsembleState, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<Metrics> {
    state.evaluate_metrics(x, y)
}

/// Runs the full training and pruning loop. `test`, when given, is used for
/// the final metrics and, if enabled, the per-increment trace.
pub fn run_training(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<TrainReport> {
    run_training_observed(config, train, test, |_, _| Ok(()))
}

/// [`run_training`], calling `observe` after every increment's training step
/// and after every delegation.
pub fn run_training_observed<F>(
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    mut observe: F,
) -> Result<TrainReport>
where
    F: FnMut(&EnsembleState, Option<&DelegationEvent>) -> Result<()>,
{
    config.validate()?;
    check_dims(train, test)?;
    let partition = IncrementPartition::new(train.len(), config.increment_size)?;
    let dim = train.n_features();
    let models = (0..config.n)
        .map(|i| LinearModel::with_hyperparams(dim, derive_seed(config.seed, i as u64), config.hyper))
        .collect::<Result<Vec<_>>>()?;
    let mut state = EnsembleState::new(models)?;
    let spec = config.mechanism_spec();
    let mut mech_rng = rng(spec.seed);

    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut incremental_cost = 0u64;

    let row = |state: &EnsembleState, t: usize| -> Result<TraceRow> {
        let test_accuracy = match test {
            Some(test) if config.trace_test_accuracy => Some(evaluate(state, test.x(), test.y())?.accuracy),
            _ => None,
        };
        Ok(TraceRow {
            t,
            active: state.active_count(),
            test_accuracy,
            min_majority: state.min_majority_size()?,
        })
    };

    for (t, range) in partition.slices.iter().enumerate() {
        let (x, y) = train.slice(range.clone());
        incremental_cost += (y.len() * state.active_count()) as u64;
        state.train_increment(x, y)?;
        observe(&state, None)?;

        let selected = select_delegators(&state, &spec, config.n_final, &mut mech_rng);
        if selected.is_empty() && spec.kind != MechanismKind::Direct {
            trace.push(row(&state, t)?);
            break;
        }

        let plans = selected
            .iter()
            .map(|&i| delegation_distribution(&state, i, spec.kind).map(|d| (i, d)))
            .collect::<Result<Vec<_>>>()?;
        for (i, dist) in plans {
            if state.active_count() <= config.n_final {
                break;
            }
            let Some(dist) = dist else { continue };
            let Some(dist) = dist.restrict(|j| matches!(state.representative_of(j), Ok(r) if r != i)) else {
                continue;
            };
            let j = dist.sample(&mut mech_rng);
            let event = apply_delegation(&mut state, i, j, t)?;
            observe(&state, Some(&event))?;
            events.push(event);
        }
        trace.push(row(&state, t)?);
    }

    let mut full_fit_cost = 0u64;
    if config.final_full_fit {
        for (_, epochs) in state.full_fit_active(train.x(), train.y())? {
            full_fit_cost += (epochs * train.len()) as u64;
        }
    }

    let per_voter_epochs: Vec<u64> = state.voters().iter().map(|v| v.model().epochs_seen()).collect();
    let per_voter_examples: Vec<u64> = state.voters().iter().map(|v| v.model().examples_seen()).collect();
    let total_cost = incremental_cost + full_fit_cost;
    let counted: u64 = per_voter_examples.iter().sum();
    if counted != total_cost {
        return Err(Error::Invariant(format!(
            "cost ledger {total_cost} disagrees with model counters {counted}"
        )));
    }

    let final_metrics = test.map(|t| evaluate(&state, t.x(), t.y())).transpose()?;
    let final_active = state.active_count();
    Ok(TrainReport {
        config: config.clone(),
        increments_available: partition.count(),
        trace,
        events,
        final_metrics,
        ledger: CostLedger {
            per_voter_epochs,
            per_voter_examples,
            incremental_cost,
            full_fit_cost,
            total_cost,
            direct_reference_cost: None,
        },
        final_weights: state.weights(),
        final_active,
        final_min_majority: state.min_majority_size()?,
        fully_delegated: final_active == config.n_final,
    })
}

/// Ratio of the two runs' total training cost.
pub fn measure_relative_cost(report: &TrainReport, direct_report: &TrainReport) -> Result<f64> {
    let reference = direct_report.ledger.total_cost;
    if reference == 0 {
        return Err(Error::invalid("reference run has zero training cost"));
    }
    Ok(report.ledger.total_cost as f64 / reference as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub report: TrainReport,
    /// The paired run without delegation, absent when the run itself is
    /// direct or pairing was skipped.
    pub reference: Option<Metrics>,
    pub relative_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTraceRow {
    pub t: usize,
    /// Trials that were still training at increment `t`.
    pub trials: usize,
    pub active: f64,
    pub test_accuracy: Option<f64>,
    pub min_majority: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub config: TrainConfig,
    pub test_fraction: f64,
    pub master_seed: u64,
    pub records: Vec<TrialRecord>,
    pub accuracy: Stat,
    pub f1: Stat,
    pub relative_cost: Stat,
    pub reference_accuracy: Stat,
    pub final_min_majority: Stat,
    pub trace: Vec<AveragedTraceRow>,
}

/// Train/test split of trial `trial`, shared by every method compared on it.
pub fn trial_split(
    dataset: &Dataset,
    test_fraction: f64,
    master_seed: u64,
    trial: usize,
) -> Result<(Dataset, Dataset)> {
    let trial_seed = derive_seed(master_seed, trial as u64);
    shuffle_split(dataset, test_fraction, derive_seed(trial_seed, 0))
}

/// Runs one trial: a fresh split, fresh model seeds, the configured run and,
/// if `paired` and the mechanism delegates, the direct run on the same split
/// that serves as the cost reference.
pub fn run_trial(
    config: &TrainConfig,
    dataset: &Dataset,
    test_fraction: f64,
    master_seed: u64,
    trial: usize,
    paired: bool,
) -> Result<TrialRecord> {
    let trial_seed = derive_seed(master_seed, trial as u64);
    let (train, test) = trial_split(dataset, test_fraction, master_seed, trial)?;
    let cfg = TrainConfig {
        seed: derive_seed(trial_seed, 1),
        ..config.clone()
    };
    let mut report = run_training(&cfg, &train, Some(&test))?;
    let (reference, reference_cost) = if cfg.mechanism == MechanismKind::Direct {
        (None, Some(report.ledger.total_cost))
    } else if !paired {
        (None, None)
    } else {
        let direct = run_training(
            &TrainConfig {
                trace_test_accuracy: false,
                ..cfg.direct()
            },
            &train,
            Some(&test),
        )?;
        (direct.final_metrics, Some(direct.ledger.total_cost))
    };
    report.ledger.direct_reference_cost = reference_cost;
    let relative_cost = report.ledger.relative_cost();
    if reference_cost.is_some() && relative_cost.is_none() {
        return Err(Error::invalid("reference run has zero training cost"));
    }
    Ok(TrialRecord {
        trial,
        seed: trial_seed,
        report,
        reference,
        relative_cost,
    })
}

/// Aggregates already computed trials.
pub fn summarize(
    config: &TrainConfig,
    test_fraction: f64,
    master_seed: u64,
    records: Vec<TrialRecord>,
) -> TrialSummary {
    let metric = |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Stat {
        Stat::of(&records.iter().filter_map(f).collect::<Vec<_>>())
    };
    let accuracy = metric(&|r| r.report.final_metrics.map(|m| m.accuracy));
    let f1 = metric(&|r| r.report.final_metrics.map(|m| m.f1));
    let relative_cost = metric(&|r| r.relative_cost);
    let reference_accuracy = metric(&|r| {
        r.reference
            .or(r.report.final_metrics)
            .map(|m| m.accuracy)
    });
    let final_min_majority = metric(&|r| Some(r.report.final_min_majority as f64));

    let longest = records.iter().map(|r| r.report.trace.len()).max().unwrap_or(0);
    let trace = (0..longest)
        .map(|t| {
            let rows: Vec<&TraceRow> = records.iter().filter_map(|r| r.report.trace.get(t)).collect();
            let k = rows.len() as f64;
            let accs: Vec<f64> = rows.iter().filter_map(|r| r.test_accuracy).collect();
            AveragedTraceRow {
                t,
                trials: rows.len(),
                active: rows.iter().map(|r| r.active as f64).sum::<f64>() / k,
                test_accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
                min_majority: rows.iter().map(|r| r.min_majority as f64).sum::<f64>() / k,
            }
        })
        .collect();

    TrialSummary {
        config: config.clone(),
        test_fraction,
        master_seed,
        records,
        accuracy,
        f1,
        relative_cost,
        reference_accuracy,
        final_min_majority,
        trace,
    }
}

/// Runs `trials` independent paired trials in parallel. Results do not
/// depend on the thread count.
pub fn run_trials(
    config: &TrainConfig,
    dataset: &Dataset,
    trials: usize,
    test_fraction: f64,
    master_seed: u64,
) -> Result<TrialSummary> {
    run_trials_with(config, dataset, trials, test_fraction, master_seed, true)
}

/// [`run_trials`] with the direct reference runs optional.
pub fn run_trials_with(
    config: &TrainConfig,
    dataset: &Dataset,
    trials: usize,
    test_fraction: f64,
    master_seed: u64,
    paired: bool,
) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    config.validate()?;
    let records = (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(config, dataset, test_fraction, master_seed, trial, paired))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config, test_fraction, master_seed, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::two_gaussians;

    fn config(mechanism: MechanismKind) -> TrainConfig {
        TrainConfig {
            n: 20,
            n_final: 3,
            retention: 0.7,
            increment_size: 20,
            mechanism,
            final_full_fit: false,
            seed: 9,
            hyper: SgdHyperparams::default(),
            trace_test_accuracy: true,
        }
    }

    #[test]
    fn direct_cost_arithmetic() {
        let data = two_gaussians(100, 3, 2.0, 1);
        let cfg = TrainConfig {
            n: 5,
            n_final: 1,
            increment_size: 25,
            mechanism: MechanismKind::Direct,
            ..config(MechanismKind::Direct)
        };
        let report = run_training(&cfg, &data, None).unwrap();
        assert_eq!(report.increments_executed(), 4);
        assert_eq!(report.ledger.incremental_cost, 500);
        assert_eq!(report.ledger.total_cost, 500);
        assert!(report.events.is_empty());
        assert!(report.ledger.per_voter_epochs.iter().all(|&e| e == 4));
        assert_eq!(report.final_weights, vec![1; 5]);
    }

    #[test]
    fn pruning_respects_floor_and_ledger() {
        let data = two_gaussians(400, 4, 2.0, 2);
        for kind in MechanismKind::ALL {
            let report = run_training(&config(kind), &data, Some(&data)).unwrap();
            let mut last = usize::MAX;
            for row in &report.trace {
                assert!(row.active <= last && row.active >= 3);
                last = row.active;
            }
            assert_eq!(report.final_weights.iter().sum::<u32>(), 20);
            let counted: u64 = report.ledger.per_voter_examples.iter().sum();
            assert_eq!(counted, report.ledger.total_cost);
            if kind != MechanismKind::Direct {
                assert!(report.fully_delegated, "{kind}");
            }
        }
    }

    #[test]
    fn full_fit_cost_is_epochs_times_rows() {
        let data = two_gaussians(200, 2, 3.0, 4);
        let cfg = TrainConfig {
            final_full_fit: true,
            ..config(MechanismKind::PropWeighted)
        };
        let r = run_training(&cfg, &data, None).unwrap();
        assert_eq!(r.ledger.full_fit_cost % 200, 0);
        assert!(r.ledger.full_fit_cost > 0);
        assert_eq!(r.ledger.incremental_cost + r.ledger.full_fit_cost, r.ledger.total_cost);
    }

    #[test]
    fn deterministic_reports() {
        let data = two_gaussians(300, 3, 1.5, 5);
        let a = run_training(&config(MechanismKind::PropBetter), &data, Some(&data)).unwrap();
        let b = run_training(&config(MechanismKind::PropBetter), &data, Some(&data)).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn relative_cost_ratio() {
        let data = two_gaussians(200, 2, 2.0, 6);
        let r = run_training(&config(MechanismKind::Max), &data, None).unwrap();
        assert_eq!(measure_relative_cost(&r, &r).unwrap(), 1.0);
        let mut a = r.clone();
        let mut b = r.clone();
        a.ledger.total_cost = 800;
        b.ledger.total_cost = 10_000;
        assert!((measure_relative_cost(&a, &b).unwrap() - 0.08).abs() < 1e-15);
        b.ledger.total_cost = 0;
        assert!(measure_relative_cost(&a, &b).is_err());
    }

    #[test]
    fn trial_aggregation() {
        let data = two_gaussians(300, 3, 2.0, 7);
        let cfg = config(MechanismKind::RandomBetter);
        let one = run_trials(&cfg, &data, 1, 0.25, 3).unwrap();
        let m = one.records[0].report.final_metrics.unwrap();
        assert_eq!(one.accuracy.mean, m.accuracy);
        assert_eq!(one.accuracy.std, 0.0);

        let s = run_trials(&cfg, &data, 4, 0.25, 3).unwrap();
        let again = run_trials(&cfg, &data, 4, 0.25, 3).unwrap();
        let accs: Vec<f64> = s.records.iter().map(|r| r.report.final_metrics.unwrap().accuracy).collect();
        assert_eq!(s.accuracy.mean, accs.iter().sum::<f64>() / 4.0);
        assert_eq!(s.accuracy, again.accuracy);
        assert_eq!(s.relative_cost, again.relative_cost);
        assert!(s.relative_cost.mean < 1.0);
        assert!(run_trials(&cfg, &data, 0, 0.25, 3).is_err());
    }

    #[test]
    fn invalid_configs() {
        let data = two_gaussians(50, 2, 2.0, 8);
        let bad = [
            TrainConfig { n_final: 0, ..config(MechanismKind::Max) },
            TrainConfig { n_final: 21, ..config(MechanismKind::Max) },
            TrainConfig { retention: 0.0, ..config(MechanismKind::Max) },
            TrainConfig { increment_size: 0, ..config(MechanismKind::Max) },
            TrainConfig { increment_size: 51, ..config(MechanismKind::Max) },
        ];
        for cfg in bad {
            assert!(run_training(&cfg, &data, None).is_err());
        }
    }
}
