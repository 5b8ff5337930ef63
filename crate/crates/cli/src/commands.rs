//! Subcommand implementations. Each returns `Ok` on success; the binary maps
//! errors to exit codes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use liquid_ensemble::analysis::{cost_curve_point, pivotal_fraction};
use liquid_ensemble::baselines::train_adaboost;
use liquid_ensemble::data::schema_path;
use liquid_ensemble::seed::derive_seed;
use liquid_ensemble::trainer::{run_trials_with, trial_split, Stat, TrialRecord, TrialSummary};
use liquid_ensemble::{ColumnKind, ColumnSchema, MechanismKind, Metrics, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::output::{append_csv, csv_string, ensure_dir, write_csv, write_json};
use crate::{load, resolve_dataset, CliError};

/// Settings shared by every run command.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
}

struct Prepared {
    file: ConfigFile,
    train: TrainConfig,
    master_seed: u64,
    test_fraction: f64,
}

impl RunOptions {
    fn prepare(&self) -> Result<Prepared, CliError> {
        let file = ConfigFile::read(&self.config)?;
        let train = file.train_config()?;
        let master_seed = self.seed.unwrap_or(train.seed);
        let test_fraction = file.test_fraction()?;
        Ok(Prepared {
            file,
            train,
            master_seed,
            test_fraction,
        })
    }

    fn trials(&self, file: &ConfigFile, default: usize) -> Result<usize, CliError> {
        match self.trials {
            Some(0) => Err(CliError::Config("--trials must be at least 1".into())),
            Some(t) => Ok(t),
            None => file.trials(default),
        }
    }

    fn dataset(&self, file: &ConfigFile) -> Result<(String, PathBuf), CliError> {
        let reference = file
            .get("dataset")
            .ok_or_else(|| CliError::Config("config has no `dataset` key".into()))?;
        let path = resolve_dataset(reference, &self.data_dir, file.base_dir())?;
        Ok((dataset_name(&path), path))
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct RunSummary {
    trial: usize,
    seed: u64,
    accuracy: Option<f64>,
    f1: Option<f64>,
    direct_accuracy: Option<f64>,
    increments_available: usize,
    increments_executed: usize,
    delegations: usize,
    final_active: usize,
    final_min_majority: usize,
    fully_delegated: bool,
    incremental_cost: u64,
    full_fit_cost: u64,
    total_cost: u64,
    direct_reference_cost: Option<u64>,
    relative_cost: Option<f64>,
}

impl From<&TrialRecord> for RunSummary {
    fn from(r: &TrialRecord) -> Self {
        let rep = &r.report;
        Self {
            trial: r.trial,
            seed: r.seed,
            accuracy: rep.final_metrics.map(|m| m.accuracy),
            f1: rep.final_metrics.map(|m| m.f1),
            direct_accuracy: r.reference.map(|m| m.accuracy),
            increments_available: rep.increments_available,
            increments_executed: rep.increments_executed(),
            delegations: rep.events.len(),
            final_active: rep.final_active,
            final_min_majority: rep.final_min_majority,
            fully_delegated: rep.fully_delegated,
            incremental_cost: rep.ledger.incremental_cost,
            full_fit_cost: rep.ledger.full_fit_cost,
            total_cost: rep.ledger.total_cost,
            direct_reference_cost: rep.ledger.direct_reference_cost,
            relative_cost: r.relative_cost,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    dataset: &'a str,
    rows: usize,
    dropped_rows: usize,
    config: &'a TrainConfig,
    trials: usize,
    test_fraction: f64,
    master_seed: u64,
    accuracy: Stat,
    f1: Stat,
    relative_cost: Stat,
    direct_accuracy: Stat,
    final_min_majority: Stat,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
struct TraceCsvRow {
    t: usize,
    trials: usize,
    active: f64,
    test_accuracy: Option<f64>,
    min_majority: f64,
}

#[derive(Debug, Serialize)]
struct MechanismTraceRow {
    mechanism: MechanismKind,
    t: usize,
    trials: usize,
    active: f64,
    test_accuracy: Option<f64>,
    min_majority: f64,
}

#[derive(Debug, Serialize)]
struct EventRow {
    trial: usize,
    t: usize,
    delegator: usize,
    delegatee: usize,
    representative: usize,
    transferred_weight: u32,
}

/// `train`: trials of one configuration; writes `summary.json`, `trace.csv`
/// and `events.csv` to the output directory.
pub fn cmd_train(opts: &RunOptions) -> Result<(), CliError> {
    let p = opts.prepare()?;
    let trials = opts.trials(&p.file, 1)?;
    let (name, path) = opts.dataset(&p.file)?;
    let dataset = load(&path)?;
    let config = TrainConfig {
        trace_test_accuracy: true,
        ..p.train.clone()
    };
    let summary = run_trials_with(&config, &dataset, trials, p.test_fraction, p.master_seed, true)?;

    ensure_dir(&opts.out_dir)?;
    write_json(
        &opts.out_dir.join("summary.json"),
        &Summary {
            dataset: &name,
            rows: dataset.len(),
            dropped_rows: dataset.dropped_rows(),
            config: &summary.config,
            trials,
            test_fraction: summary.test_fraction,
            master_seed: summary.master_seed,
            accuracy: summary.accuracy,
            f1: summary.f1,
            relative_cost: summary.relative_cost,
            direct_accuracy: summary.reference_accuracy,
            final_min_majority: summary.final_min_majority,
            runs: summary.records.iter().map(RunSummary::from).collect(),
        },
    )?;
    write_csv(&opts.out_dir.join("trace.csv"), &trace_rows(&summary))?;
    let events: Vec<EventRow> = summary
        .records
        .iter()
        .flat_map(|r| {
            r.report.events.iter().map(move |e| EventRow {
                trial: r.trial,
                t: e.t,
                delegator: e.delegator,
                delegatee: e.delegatee,
                representative: e.representative,
                transferred_weight: e.transferred_weight,
            })
        })
        .collect();
    write_csv(&opts.out_dir.join("events.csv"), &events)?;
    Ok(())
}

fn trace_rows(summary: &TrialSummary) -> Vec<TraceCsvRow> {
    summary
        .trace
        .iter()
        .map(|r| TraceCsvRow {
            t: r.t,
            trials: r.trials,
            active: r.active,
            test_accuracy: r.test_accuracy,
            min_majority: r.min_majority,
        })
        .collect()
}

/// `trace`: per-increment test accuracy and minimum majority size averaged
/// over trials, for each mechanism in `mechanisms` (default: all six).
pub fn cmd_trace(opts: &RunOptions) -> Result<(), CliError> {
    let p = opts.prepare()?;
    let trials = opts.trials(&p.file, 500)?;
    let (_, path) = opts.dataset(&p.file)?;
    let dataset = load(&path)?;
    let mechanisms = p
        .file
        .list::<MechanismKind>("mechanisms")?
        .unwrap_or_else(|| MechanismKind::ALL.to_vec());
    let mut rows = Vec::new();
    for mechanism in mechanisms {
        let config = TrainConfig {
            mechanism,
            trace_test_accuracy: true,
            ..p.train.clone()
        };
        let summary = run_trials_with(&config, &dataset, trials, p.test_fraction, p.master_seed, false)?;
        rows.extend(trace_rows(&summary).into_iter().map(|r| MechanismTraceRow {
            mechanism,
            t: r.t,
            trials: r.trials,
            active: r.active,
            test_accuracy: r.test_accuracy,
            min_majority: r.min_majority,
        }));
    }
    ensure_dir(&opts.out_dir)?;
    write_csv(&opts.out_dir.join("trace.csv"), &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub mechanism: MechanismKind,
    pub increment_size: usize,
    pub delegation_rate: f64,
    pub n: usize,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub relative_cost_mean: f64,
    pub relative_cost_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTrialRow {
    pub mechanism: MechanismKind,
    pub increment_size: usize,
    pub delegation_rate: f64,
    pub n: usize,
    pub trial: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub relative_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    mechanism: MechanismKind,
    increment_size: usize,
    delegation_rate: f64,
    n: usize,
}

impl Cell {
    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.mechanism, self.increment_size, self.delegation_rate, self.n
        )
    }
}

fn existing_cells(path: &Path) -> Result<HashSet<String>, CliError> {
    if !path.is_file() {
        return Ok(HashSet::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut keys = HashSet::new();
    for row in reader.deserialize::<SweepRow>() {
        let row = row.map_err(|e| CliError::Runtime(format!("cannot resume from {}: {e}", path.display())))?;
        keys.insert(
            Cell {
                mechanism: row.mechanism,
                increment_size: row.increment_size,
                delegation_rate: row.delegation_rate,
                n: row.n,
            }
            .key(),
        );
    }
    Ok(keys)
}

/// `sweep`: mean accuracy over trials for every grid cell. Cells already
/// present in `sweep.csv` are skipped, so an interrupted sweep resumes.
pub fn cmd_sweep(opts: &RunOptions) -> Result<(), CliError> {
    let p = opts.prepare()?;
    let trials = opts.trials(&p.file, 50)?;
    let (_, path) = opts.dataset(&p.file)?;
    let increment_sizes = p.file.list::<usize>("increment_sizes")?.unwrap_or(vec![25, 45, 65, 85]);
    let rates = p.file.list::<f64>("delegation_rates")?.unwrap_or(vec![0.05, 0.2, 0.5, 0.85]);
    let sizes = p.file.list::<usize>("ensemble_sizes")?.unwrap_or(vec![50, 200, 350]);
    let mechanisms = p.file.list::<MechanismKind>("mechanisms")?.unwrap_or(vec![
        MechanismKind::Max,
        MechanismKind::RandomBetter,
        MechanismKind::PropBetter,
        MechanismKind::PropWeighted,
    ]);
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(CliError::Config(format!("delegation rate {r} outside (0, 1)")));
    }

    let mut cells = Vec::new();
    for &mechanism in &mechanisms {
        for &increment_size in &increment_sizes {
            for &delegation_rate in &rates {
                for &n in &sizes {
                    cells.push(Cell {
                        mechanism,
                        increment_size,
                        delegation_rate,
                        n,
                    });
                }
            }
        }
    }
    let configs = cells
        .iter()
        .map(|c| {
            let cfg = TrainConfig {
                mechanism: c.mechanism,
                increment_size: c.increment_size,
                retention: 1.0 - c.delegation_rate,
                n: c.n,
                n_final: p.train.n_final.min(c.n),
                ..p.train.clone()
            };
            cfg.validate().map(|_| cfg).map_err(|e| CliError::Config(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let dataset = load(&path)?;
    ensure_dir(&opts.out_dir)?;
    let sweep_path = opts.out_dir.join("sweep.csv");
    let log_path = opts.out_dir.join("sweep_trials.csv");
    let done = existing_cells(&sweep_path)?;

    for (index, (cell, config)) in cells.iter().zip(&configs).enumerate() {
        if done.contains(&cell.key()) {
            continue;
        }
        let cell_seed = derive_seed(p.master_seed, index as u64);
        let s = run_trials_with(config, &dataset, trials, p.test_fraction, cell_seed, true)?;
        let log: Vec<SweepTrialRow> = s
            .records
            .iter()
            .map(|r| SweepTrialRow {
                mechanism: cell.mechanism,
                increment_size: cell.increment_size,
                delegation_rate: cell.delegation_rate,
                n: cell.n,
                trial: r.trial,
                accuracy: r.report.final_metrics.map_or(f64::NAN, |m| m.accuracy),
                f1: r.report.final_metrics.map_or(f64::NAN, |m| m.f1),
                relative_cost: r.relative_cost.unwrap_or(f64::NAN),
            })
            .collect();
        append_csv(&log_path, &log)?;
        append_csv(
            &sweep_path,
            &[SweepRow {
                mechanism: cell.mechanism,
                increment_size: cell.increment_size,
                delegation_rate: cell.delegation_rate,
                n: cell.n,
                trials,
                accuracy_mean: s.accuracy.mean,
                accuracy_std: s.accuracy.std,
                f1_mean: s.f1.mean,
                f1_std: s.f1.std,
                relative_cost_mean: s.relative_cost.mean,
                relative_cost_std: s.relative_cost.std,
            }],
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub method: String,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub relative_cost_mean: f64,
}

fn comparison_row(dataset: &str, method: &str, metrics: &[Metrics], costs: &[f64]) -> ComparisonRow {
    let acc = Stat::of(&metrics.iter().map(|m| m.accuracy).collect::<Vec<_>>());
    let f1 = Stat::of(&metrics.iter().map(|m| m.f1).collect::<Vec<_>>());
    ComparisonRow {
        dataset: dataset.to_string(),
        method: method.to_string(),
        trials: metrics.len(),
        accuracy_mean: acc.mean,
        accuracy_std: acc.std,
        f1_mean: f1.mean,
        f1_std: f1.std,
        relative_cost_mean: Stat::of(costs).mean,
    }
}

/// `compare`: the delegating ensemble at its accuracy and cost settings
/// against the direct ensemble and two AdaBoost stump ensembles, for every
/// dataset in `datasets` (or `dataset`).
pub fn cmd_compare(opts: &RunOptions) -> Result<(), CliError> {
    let p = opts.prepare()?;
    let trials = opts.trials(&p.file, 50)?;
    let references: Vec<String> = match p.file.list::<String>("datasets")? {
        Some(list) => list,
        None => vec![p
            .file
            .get("dataset")
            .ok_or_else(|| CliError::Config("config has neither `datasets` nor `dataset`".into()))?
            .to_string()],
    };
    let paths = references
        .iter()
        .map(|r| resolve_dataset(r, &opts.data_dir, p.file.base_dir()))
        .collect::<Result<Vec<_>, _>>()?;

    let accuracy_cfg = TrainConfig {
        increment_size: 65,
        retention: 0.95,
        mechanism: MechanismKind::PropWeighted,
        final_full_fit: true,
        ..p.train.clone()
    };
    let cost_cfg = TrainConfig {
        increment_size: 25,
        retention: 0.15,
        ..accuracy_cfg.clone()
    };
    let full_budget = p.train.n;

    let mut rows = Vec::new();
    for path in &paths {
        let name = dataset_name(path);
        let dataset = load(path)?;
        let acc = run_trials_with(&accuracy_cfg, &dataset, trials, p.test_fraction, p.master_seed, true)?;
        let cost = run_trials_with(&cost_cfg, &dataset, trials, p.test_fraction, p.master_seed, true)?;

        let final_metrics = |s: &TrialSummary| -> Vec<Metrics> {
            s.records.iter().filter_map(|r| r.report.final_metrics).collect()
        };
        let rel = |s: &TrialSummary| -> Vec<f64> { s.records.iter().filter_map(|r| r.relative_cost).collect() };
        rows.push(comparison_row(&name, "prop-weighted-acc", &final_metrics(&acc), &rel(&acc)));
        rows.push(comparison_row(&name, "prop-weighted-cost", &final_metrics(&cost), &rel(&cost)));
        let direct: Vec<Metrics> = acc.records.iter().filter_map(|r| r.reference).collect();
        rows.push(comparison_row(&name, "direct", &direct, &vec![1.0; direct.len()]));

        let direct_costs: Vec<u64> = acc
            .records
            .iter()
            .map(|r| r.report.ledger.direct_reference_cost.unwrap_or(0))
            .collect();
        for (method, budget) in [("adaboost-stump-full", full_budget), ("adaboost-stump-small", 10)] {
            let results = (0..trials)
                .into_par_iter()
                .map(|trial| -> Result<(Metrics, f64), CliError> {
                    let (train, test) = trial_split(&dataset, p.test_fraction, p.master_seed, trial)?;
                    let model = train_adaboost(train.x(), train.y(), budget)?;
                    let predicted = model.predict_batch(test.x())?;
                    let metrics = Metrics::from_predictions(&predicted, test.y())?;
                    let reference = direct_costs[trial].max(1) as f64;
                    Ok((metrics, model.cost_examples as f64 / reference))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (metrics, costs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            rows.push(comparison_row(&name, method, &metrics, &costs));
        }
    }
    ensure_dir(&opts.out_dir)?;
    write_csv(&opts.out_dir.join("comparison.csv"), &rows)
}

#[derive(Debug, Serialize)]
struct CostBoundRow {
    n: usize,
    n_final: usize,
    r: f64,
    z: f64,
    bound: f64,
}

/// `cost-bound`: CSV of the analytic incremental cost bound.
pub fn cmd_cost_bound(ns: &[usize], n_finals: &[usize], delegation_rates: &[f64]) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &n_final in n_finals {
            for &rate in delegation_rates {
                let p = cost_curve_point(n, n_final, 1.0 - rate)?;
                rows.push(CostBoundRow {
                    n: p.n,
                    n_final: p.n_final,
                    r: p.r,
                    z: p.z,
                    bound: p.bound,
                });
            }
        }
    }
    csv_string(&rows)
}

#[derive(Debug, Serialize)]
struct PivotalRow {
    n: usize,
    m: usize,
    numerator_digits: usize,
    approx: String,
}

/// `pivotal-bound`: CSV of the harmful-state fraction bound.
pub fn cmd_pivotal_bound(ns: &[usize], ms: &[usize]) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &m in ms {
            let (ratio, approx) = pivotal_fraction(n, m)?;
            rows.push(PivotalRow {
                n,
                m,
                numerator_digits: ratio.numerator().to_string().len(),
                approx: format!("{approx:.6e}"),
            });
        }
    }
    csv_string(&rows)
}

#[derive(Debug, Serialize)]
struct DatasetRow {
    name: String,
    rows: usize,
    dropped_rows: usize,
    features: usize,
    numerical: usize,
    categorical: usize,
    positive_label: String,
}

/// `datasets list`: every `<name>.csv` with a schema sidecar in `data_dir`.
pub fn cmd_datasets_list(data_dir: &Path) -> Result<String, CliError> {
    let entries = std::fs::read_dir(data_dir)
        .map_err(|e| CliError::Config(format!("cannot read dataset directory {}: {e}", data_dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && schema_path(p).is_file())
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for path in paths {
        let schema = ColumnSchema::from_file(schema_path(&path))?;
        let data = load(&path)?;
        rows.push(DatasetRow {
            name: dataset_name(&path),
            rows: data.len(),
            dropped_rows: data.dropped_rows(),
            features: data.n_features(),
            numerical: schema.count(ColumnKind::Numerical),
            categorical: schema.count(ColumnKind::Categorical),
            positive_label: schema.positive_label().to_string(),
        });
    }
    csv_string(&rows)
}
