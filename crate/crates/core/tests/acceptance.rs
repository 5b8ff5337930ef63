//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use liquid_ensemble::analysis::{
    binomial, brute_force_pivotal_count, check_unpivotal_delegation_safe,
    delegation_cost_bound, pivotal_fraction, simulate_incremental_cost,
};
use liquid_ensemble::baselines::{best_stump, train_adaboost};
use liquid_ensemble::data::{load_dataset, two_gaussians};
use liquid_ensemble::mechanisms::{
    apply_delegation, delegation_distribution, select_delegators, MechanismKind, MechanismSpec,
};
use liquid_ensemble::seed::rng;
use liquid_ensemble::trainer::{run_trial, summarize, TrialRecord};
use liquid_ensemble::{
    run_training_observed, Dataset, EnsembleState, Error, LinearModel, TrainConfig,
};
use ndarray::Array2;
use num_bigint::BigUint;
use rayon::prelude::*;

type Outcome = Result<String, String>;

const TABLE_M: [usize; 5] = [11, 21, 31, 41, 51];
const TABLE: [(usize, [&str; 5]); 5] = [
    (11, ["7.7e-08", "2.6e-14", "8.9e-21", "3.0e-27", "1.0e-33"]),
    (21, ["3.0e-09", "5.5e-17", "9.9e-25", "1.8e-32", "3.2e-40"]),
    (31, ["4.0e-10", "1.1e-18", "3.3e-27", "9.6e-36", "2.7e-44"]),
    (41, ["9.2e-11", "6.9e-20", "5.2e-29", "3.9e-38", "2.9e-47"]),
    (51, ["2.8e-11", "7.5e-21", "1.9e-30", "5.2e-40", "1.3e-49"]),
];

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

/// Mantissa and exponent of `x` in scientific notation.
fn sci(x: f64) -> (f64, i32) {
    let e = x.log10().floor() as i32;
    (x / 10f64.powi(e), e)
}

/// First `k` significant decimal digits of `num / den`, from integer
/// arithmetic alone.
fn leading_digits(num: &BigUint, den: &BigUint, k: usize) -> String {
    let ten = BigUint::from(10u32);
    let mut n = num.clone();
    while &n < den {
        n *= &ten;
    }
    let q = n * ten.pow(k as u32 - 1) / den;
    q.to_string()
}

fn pivotal_table() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (n, row) in TABLE {
        for (m, cell) in TABLE_M.iter().zip(row) {
            let (ratio, approx) = pivotal_fraction(n, *m).map_err(|e| e.to_string())?;
            let expected: f64 = cell.parse().unwrap();
            let (ma, ea) = sci(approx);
            let (mt, et) = sci(expected);
            let gap = (ma - mt).abs();
            if ea != et || gap > 0.1 + 1e-9 {
                return Err(format!("n={n}, m={m}: computed {approx:.3e}, table {cell}"));
            }
            worst = worst.max(gap);
            let exact = leading_digits(ratio.numerator(), ratio.denominator(), 15);
            let float = format!("{:.14e}", approx).replace('.', "");
            if float[..15] != exact[..15] && float[..14] != exact[..14] {
                return Err(format!("n={n}, m={m}: float {float} vs exact digits {exact}"));
            }
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("25 cells, largest mantissa gap {worst:.3}"))
}

fn brute_force_equivalence() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for n in [3usize, 5] {
        for mp in 1..=3usize {
            if n * mp > 15 {
                continue;
            }
            let count = brute_force_pivotal_count(n, mp).map_err(|e| e.to_string())?;
            let formula = binomial(n as u64, n.div_ceil(2) as u64).pow(mp as u32);
            if BigUint::from(count) != formula {
                return Err(format!("n={n}, m_p={mp}: enumerated {count}, formula {formula}"));
            }
            checked += 1;
        }
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("{checked} instances"))
}

fn cost_bound_consistency() -> Outcome {
    let start = Instant::now();
    for n in [100usize, 350] {
        for n_final in [10usize, 25] {
            for r in [0.5, 0.8, 0.95] {
                let bound = delegation_cost_bound(n, n_final, r).map_err(|e| e.to_string())?;
                let sim = simulate_incremental_cost(n, n_final, r).map_err(|e| e.to_string())?;
                if bound > sim as f64 + 1e-9 {
                    return Err(format!("n={n}, n_final={n_final}, r={r}: bound {bound} > simulated {sim}"));
                }
            }
        }
    }
    let b = delegation_cost_bound(100, 25, 0.5).map_err(|e| e.to_string())?;
    if (b - 175.0).abs() > 1e-9 {
        return Err(format!("n=100, n_final=25, r=0.5 gives {b}"));
    }
    within(Duration::from_secs(1), start)?;
    Ok("12 grid cells, corner = 175".into())
}

fn weight_conservation() -> Outcome {
    let start = Instant::now();
    let kinds = [
        MechanismKind::Random,
        MechanismKind::Max,
        MechanismKind::RandomBetter,
        MechanismKind::PropBetter,
        MechanismKind::PropWeighted,
    ];
    let steps: Vec<usize> = (0..100u64)
        .into_par_iter()
        .map(|run| {
            let data = two_gaussians(600, 4, 1.5, 1000 + run);
            let config = TrainConfig {
                n: 50,
                n_final: 5,
                retention: 0.8,
                increment_size: 20,
                mechanism: kinds[run as usize % kinds.len()],
                final_full_fit: false,
                seed: run,
                ..TrainConfig::default()
            };
            let mut steps = 0;
            run_training_observed(&config, &data, None, |state, _| {
                steps += 1;
                if state.total_weight() != 50 {
                    return Err(Error::Invariant("total weight changed".into()));
                }
                let n = state.len();
                let mut recount = vec![0u32; n];
                for i in 0..n {
                    recount[state.representative_of(i)?] += 1;
                }
                if recount != state.weights() {
                    return Err(Error::Invariant("weights differ from recount".into()));
                }
                state.check_invariants()
            })
            .map(|_| steps)
            .map_err(|e| format!("run {run}: {e}"))
        })
        .collect::<Result<_, String>>()?;
    within(Duration::from_secs(60), start)?;
    Ok(format!("100 runs, {} audited steps", steps.iter().sum::<usize>()))
}

/// Six voters: q = [0.70, 0.55, 0.60, 0.80, 0.65, 0.90]; voter 4 has
/// delegated to voter 3.
fn fixture() -> EnsembleState {
    let qs = [0.70, 0.55, 0.60, 0.80, 0.65, 0.90];
    let models = qs
        .iter()
        .map(|_| LinearModel::from_parameters(vec![0.0], 0.0).unwrap())
        .collect();
    let mut s = EnsembleState::new(models).unwrap();
    for (i, q) in qs.iter().enumerate() {
        s.record_accuracy(i, *q);
    }
    apply_delegation(&mut s, 4, 3, 0).unwrap();
    s
}

/// Hand-derived delegation probabilities for voter 1 (q = 0.55).
fn analytic(kind: MechanismKind) -> Vec<(usize, f64)> {
    // candidates with higher accuracy: 0 (0.70), 2 (0.60), 3 (0.80, weight 2), 4 (0.65, routed to 3), 5 (0.90)
    let gaps = [(0, 0.15), (2, 0.05), (3, 0.25), (4, 0.10), (5, 0.35)];
    let norm = |v: Vec<(usize, f64)>| {
        let s: f64 = v.iter().map(|p| p.1).sum();
        v.into_iter().map(|(j, p)| (j, p / s)).collect::<Vec<_>>()
    };
    match kind {
        MechanismKind::Direct => vec![],
        MechanismKind::Random | MechanismKind::RandomBetter => {
            [0, 2, 3, 4, 5].iter().map(|&j| (j, 0.2)).collect()
        }
        MechanismKind::PropBetter => norm(gaps.to_vec()),
        MechanismKind::PropWeighted => norm(
            gaps.iter()
                .map(|&(j, g)| (j, if j == 3 || j == 4 { g / 2.0 } else { g }))
                .collect(),
        ),
        // the zero-weight voter 4 is the unique lightest candidate
        MechanismKind::Max => vec![(4, 1.0)],
    }
}

fn mechanism_sampling() -> Outcome {
    let state = fixture();
    let draws = 10_000usize;
    let mut r = rng(2024);
    for kind in MechanismKind::ALL {
        let expected = analytic(kind);
        let dist = delegation_distribution(&state, 1, kind).map_err(|e| e.to_string())?;
        if kind == MechanismKind::Direct {
            let spec = MechanismSpec::new(kind, 0.5, 0).unwrap();
            if dist.is_some() || !select_delegators(&state, &spec, 1, &mut r).is_empty() {
                return Err("direct mechanism delegated".into());
            }
            continue;
        }
        let dist = dist.ok_or(format!("{kind}: no distribution"))?;
        let total: f64 = dist.entries().iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("{kind}: mass {total}"));
        }
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[dist.sample(&mut r)] += 1;
        }
        for (j, &count) in counts.iter().enumerate() {
            let p = expected.iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
            if (dist.prob(j) - p).abs() > 1e-12 {
                return Err(format!("{kind}: P({j}) = {}, expected {p}", dist.prob(j)));
            }
            let mean = draws as f64 * p;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            if (count as f64 - mean).abs() > 3.0 * sigma {
                return Err(format!("{kind}: target {j} drawn {count} times, expected {mean:.0}"));
            }
        }
        let better = matches!(
            kind,
            MechanismKind::RandomBetter | MechanismKind::PropBetter | MechanismKind::PropWeighted
        );
        if better && dist.support().any(|j| state.voter(j).q() <= 0.55) {
            return Err(format!("{kind}: mass on a less accurate voter"));
        }
    }
    Ok(format!("6 mechanisms, {draws} draws each"))
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

struct Spambase {
    data: Dataset,
}

impl Spambase {
    fn load() -> Result<Self, String> {
        load_dataset(data_dir().join("spambase.csv"))
            .map(|data| Self { data })
            .map_err(|e| format!("spambase unavailable: {e}"))
    }

    fn trials(&self, config: &TrainConfig, trials: usize) -> Result<Vec<TrialRecord>, String> {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(config, &self.data, 0.2, 7, t, true))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())
    }
}

fn spambase_config(increment_size: usize, delegation_rate: f64, mechanism: MechanismKind) -> TrainConfig {
    TrainConfig {
        n: 350,
        n_final: 10,
        retention: 1.0 - delegation_rate,
        increment_size,
        mechanism,
        final_full_fit: true,
        ..TrainConfig::default()
    }
}

struct SpambaseResults {
    cost: Vec<TrialRecord>,
    accuracy: Vec<TrialRecord>,
    trace_weighted: Vec<TrialRecord>,
    trace_max: Vec<TrialRecord>,
    elapsed: Duration,
}

fn run_spambase() -> Result<SpambaseResults, String> {
    let start = Instant::now();
    let s = Spambase::load()?;
    let cost = s.trials(&spambase_config(25, 0.85, MechanismKind::PropWeighted), 10)?;
    let accuracy = s.trials(&spambase_config(65, 0.05, MechanismKind::PropWeighted), 10)?;
    let trace_weighted = s.trials(&spambase_config(25, 0.2, MechanismKind::PropWeighted), 10)?;
    let trace_max = s.trials(&spambase_config(25, 0.2, MechanismKind::Max), 10)?;
    Ok(SpambaseResults {
        cost,
        accuracy,
        trace_weighted,
        trace_max,
        elapsed: start.elapsed(),
    })
}

fn cost_reduction(r: &SpambaseResults) -> Outcome {
    let cfg = &r.cost[0].report.config;
    let cost = summarize(cfg, 0.2, 7, r.cost.clone()).relative_cost.mean;
    let acc = summarize(&r.accuracy[0].report.config, 0.2, 7, r.accuracy.clone())
        .relative_cost
        .mean;
    if r.elapsed > Duration::from_secs(30 * 60) {
        return Err(format!("spambase runs took {:.0?}", r.elapsed));
    }
    let line = format!("relative cost {cost:.4} (cost parameters), {acc:.4} (accuracy parameters)");
    if cost <= 0.10 && acc <= 0.40 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn accuracy_non_degradation(r: &SpambaseResults) -> Outcome {
    let s = summarize(&r.accuracy[0].report.config, 0.2, 7, r.accuracy.clone());
    let line = format!(
        "delegating {:.4} vs direct {:.4} over {} paired trials",
        s.accuracy.mean,
        s.reference_accuracy.mean,
        r.accuracy.len()
    );
    if s.accuracy.mean >= s.reference_accuracy.mean - 0.01 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn centralization_ordering(r: &SpambaseResults) -> Outcome {
    let mean = |v: &[TrialRecord]| {
        v.iter().map(|t| t.report.final_min_majority as f64).sum::<f64>() / v.len() as f64
    };
    let weighted = mean(&r.trace_weighted);
    let max = mean(&r.trace_max);
    let line = format!("final minimum majority {weighted:.2} (prop-weighted) vs {max:.2} (max)");
    if weighted > max {
        Ok(line)
    } else {
        Err(line)
    }
}

fn unpivotal_delegation_check() -> Outcome {
    let mut cases = 0;
    for n in [3usize, 5] {
        for m in [2usize, 3] {
            if n * m > 15 {
                continue;
            }
            if !check_unpivotal_delegation_safe(n, m).map_err(|e| e.to_string())? {
                return Err(format!("counterexample found for n={n}, m={m}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} instances, no counterexample"))
}

fn adaboost_sanity() -> Outcome {
    // positives above the anti-diagonal inside a band; no axis-aligned split fits
    let mut r = rng(31);
    let m = 200;
    let mut x = Array2::zeros((m, 2));
    let mut y = Vec::with_capacity(m);
    use rand::Rng;
    for i in 0..m {
        let a: f64 = r.random_range(-1.0..1.0);
        let b: f64 = r.random_range(-1.0..1.0);
        x[[i, 0]] = a;
        x[[i, 1]] = b;
        y.push(u8::from(a + b > 0.0));
    }
    let uniform = vec![1.0 / m as f64; m];
    let (_, err) = best_stump(x.view(), &y, &uniform).map_err(|e| e.to_string())?;
    let ensemble = train_adaboost(x.view(), &y, 10).map_err(|e| e.to_string())?;
    if let Some(s) = ensemble.weight_sums.iter().find(|s| (**s - 1.0).abs() > 1e-12) {
        return Err(format!("example weights sum to {s}"));
    }
    let boosted = ensemble.accuracy_on(x.view(), &y).map_err(|e| e.to_string())?;
    let single = 1.0 - err;
    let line = format!("boosted {boosted:.3} vs best stump {single:.3}");
    if boosted > single {
        Ok(line)
    } else {
        Err(line)
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let spambase = run_spambase();
    let spam = |f: fn(&SpambaseResults) -> Outcome| -> Outcome {
        match &spambase {
            Ok(r) => f(r),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("pivotal bound table", pivotal_table()),
        ("brute-force pivotal counts", brute_force_equivalence()),
        ("cost bound consistency", cost_bound_consistency()),
        ("weight conservation and graph soundness", weight_conservation()),
        ("mechanism distributions", mechanism_sampling()),
        ("spambase cost reduction", spam(cost_reduction)),
        ("spambase accuracy non-degradation", spam(accuracy_non_degradation)),
        ("weight centralization ordering", spam(centralization_ordering)),
        ("unpivotal delegation exhaustive check", unpivotal_delegation_check()),
        ("adaboost baseline sanity", adaboost_sanity()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
