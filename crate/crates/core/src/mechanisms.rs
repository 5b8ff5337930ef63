//! Delegation mechanisms.
//!
//! A mechanism pairs a delegator selection rule (who stops voting this
//! increment) with a delegation probability function (to whom each of them
//! hands its weight).

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Direct,
    Random,
    Max,
    RandomBetter,
    PropBetter,
    PropWeighted,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::Direct,
        MechanismKind::Random,
        MechanismKind::Max,
        MechanismKind::RandomBetter,
        MechanismKind::PropBetter,
        MechanismKind::PropWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Direct => "direct",
            MechanismKind::Random => "random",
            MechanismKind::Max => "max",
            MechanismKind::RandomBetter => "random-better",
            MechanismKind::PropBetter => "prop-better",
            MechanismKind::PropWeighted => "prop-weighted",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "direct" => MechanismKind::Direct,
            "random" => MechanismKind::Random,
            "max" => MechanismKind::Max,
            "randombetter" => MechanismKind::RandomBetter,
            "propbetter" | "proportionalbetter" => MechanismKind::PropBetter,
            "propweighted" | "proportionalweighted" => MechanismKind::PropWeighted,
            _ => return Err(Error::invalid(format!("unknown mechanism `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Fraction of representatives that keep voting after an increment.
    pub retention: f64,
    pub seed: u64,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind, retention: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            retention,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return Err(Error::invalid(format!(
                "retention must lie in (0, 1], got {}",
                self.retention
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegationEvent {
    pub t: usize,
    pub delegator: usize,
    pub delegatee: usize,
    pub representative: usize,
    pub transferred_weight: u32,
}

/// Number of representatives removed when `active` remain.
///
/// At least one is removed while above `n_final`, and never so many that
/// fewer than `n_final` remain.
pub fn removal_count(active: usize, retention: f64, n_final: usize) -> usize {
    if active <= n_final {
        return 0;
    }
    // 10 * (1 - 0.8) evaluates to 1.9999999999999996
    let raw = (active as f64 * (1.0 - retention) + 1e-9).floor() as usize;
    raw.max(1).min(active - n_final)
}

/// Chooses the representatives that delegate this increment, ordered by
/// ascending `q` then index.
pub fn select_delegators<R: Rng + ?Sized>(
    state: &EnsembleState,
    spec: &MechanismSpec,
    n_final: usize,
    rng: &mut R,
) -> Vec<usize> {
    let reps = state.representatives();
    let k = removal_count(reps.len(), spec.retention, n_final);
    if k == 0 {
        return Vec::new();
    }
    let mut chosen: Vec<usize> = match spec.kind {
        MechanismKind::Direct => return Vec::new(),
        MechanismKind::Random => reps.choose_multiple(rng, k).copied().collect(),
        _ => {
            let mut keyed: Vec<(f64, u64, usize)> = reps
                .iter()
                .map(|&i| (state.voter(i).q(), rng.random::<u64>(), i))
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().take(k).map(|(_, _, i)| i).collect()
        }
    };
    chosen.sort_by(|&a, &b| {
        state
            .voter(a)
            .q()
            .total_cmp(&state.voter(b).q())
            .then(a.cmp(&b))
    });
    chosen
}

/// A finite distribution over voter indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    entries: Vec<(usize, f64)>,
}

impl Distribution {
    /// Normalizes non-negative masses. `None` when the total mass is zero.
    pub fn from_masses(masses: Vec<(usize, f64)>) -> Option<Self> {
        let entries: Vec<(usize, f64)> = masses.into_iter().filter(|&(_, m)| m > 0.0).collect();
        let total: f64 = entries.iter().map(|&(_, m)| m).sum();
        if entries.is_empty() || !total.is_finite() || total <= 0.0 {
            return None;
        }
        Some(Self {
            entries: entries.into_iter().map(|(j, m)| (j, m / total)).collect(),
        })
    }

    pub fn uniform(targets: &[usize]) -> Option<Self> {
        Self::from_masses(targets.iter().map(|&j| (j, 1.0)).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.entries
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(j, _)| j)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(j, p) in &self.entries {
            acc += p;
            if u < acc {
                return j;
            }
        }
        self.entries[self.entries.len() - 1].0
    }

    /// Keeps the targets accepted by `keep` and renormalizes.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Option<Self> {
        Self::from_masses(
            self.entries
                .iter()
                .copied()
                .filter(|&(j, _)| keep(j))
                .collect(),
        )
    }
}

/// Delegation distribution of representative `i`. `Ok(None)` when the
/// mechanism never delegates or no legal target exists.
pub fn delegation_distribution(
    state: &EnsembleState,
    i: usize,
    kind: MechanismKind,
) -> Result<Option<Distribution>> {
    if i >= state.len() {
        return Err(Error::invalid(format!("voter index {i} out of range")));
    }
    if !state.voter(i).is_active() {
        return Err(Error::invalid(format!("voter {i} is not a representative")));
    }
    if kind == MechanismKind::Direct {
        return Ok(None);
    }
    let qi = state.voter(i).q();
    let mut legal = Vec::with_capacity(state.len());
    for j in 0..state.len() {
        if j == i {
            continue;
        }
        let rep = state.representative_of(j)?;
        if rep != i {
            legal.push((j, rep));
        }
    }
    if kind == MechanismKind::Random {
        let targets: Vec<usize> = legal.iter().map(|&(j, _)| j).collect();
        return Ok(Distribution::uniform(&targets));
    }
    let pool: Vec<(usize, usize)> = legal
        .into_iter()
        .filter(|&(j, _)| state.voter(j).q() > qi)
        .collect();
    if pool.is_empty() {
        return Ok(None);
    }
    let q = |j: usize| state.voter(j).q();
    let dist = match kind {
        MechanismKind::RandomBetter => {
            Distribution::uniform(&pool.iter().map(|&(j, _)| j).collect::<Vec<_>>())
        }
        MechanismKind::PropBetter => {
            Distribution::from_masses(pool.iter().map(|&(j, _)| (j, q(j) - qi)).collect())
        }
        MechanismKind::PropWeighted => Distribution::from_masses(
            pool.iter()
                .map(|&(j, rep)| (j, (q(j) - qi) / state.voter(rep).weight() as f64))
                .collect(),
        ),
        MechanismKind::Max => {
            let min_w = pool.iter().map(|&(j, _)| state.voter(j).weight()).min();
            let h: Vec<usize> = pool
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| Some(state.voter(j).weight()) == min_w)
                .collect();
            let best = h.iter().map(|&j| q(j)).fold(f64::NEG_INFINITY, f64::max);
            let top: Vec<usize> = h.into_iter().filter(|&j| q(j) == best).collect();
            Distribution::uniform(&top)
        }
        MechanismKind::Direct | MechanismKind::Random => unreachable!(),
    };
    Ok(dist)
}

/// Voter `i` delegates to `j`; its weight moves to `j`'s representative.
pub fn apply_delegation(
    state: &mut EnsembleState,
    i: usize,
    j: usize,
    t: usize,
) -> Result<DelegationEvent> {
    let n = state.len();
    if i >= n || j >= n {
        return Err(Error::invalid("voter index out of range"));
    }
    if i == j {
        return Err(Error::IllegalDelegation {
            delegator: i,
            target: j,
            reason: "self-delegation",
        });
    }
    if !state.voter(i).is_active() {
        return Err(Error::IllegalDelegation {
            delegator: i,
            target: j,
            reason: "delegator is not a representative",
        });
    }
    let rep = state.representative_of(j)?;
    if rep == i {
        return Err(Error::IllegalDelegation {
            delegator: i,
            target: j,
            reason: "would create a cycle",
        });
    }
    let moved = state.transfer(i, j, rep);
    Ok(DelegationEvent {
        t,
        delegator: i,
        delegatee: j,
        representative: rep,
        transferred_weight: moved,
    })
}
