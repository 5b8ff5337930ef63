//! Closed-form cost analysis and the harmful-delegation bound.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::removal_count;

/// A non-negative rational held as exact big integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactRatio {
    numerator: BigUint,
    denominator: BigUint,
}

impl ExactRatio {
    pub fn new(numerator: BigUint, denominator: BigUint) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::invalid("zero denominator"));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    pub fn numerator(&self) -> &BigUint {
        &self.numerator
    }

    pub fn denominator(&self) -> &BigUint {
        &self.denominator
    }

    /// Nearest double, computed from a 64-bit quotient so that neither side
    /// has to fit a double on its own.
    pub fn to_f64(&self) -> f64 {
        if self.numerator.is_zero() {
            return 0.0;
        }
        let shift = 64 - (self.numerator.bits() as i64 - self.denominator.bits() as i64);
        let q = if shift >= 0 {
            (&self.numerator << shift as u64) / &self.denominator
        } else {
            &self.numerator / (&self.denominator << (-shift) as u64)
        };
        let mantissa = q.to_f64().unwrap_or(f64::INFINITY);
        scale_pow2(mantissa, -shift)
    }

    /// Cross-multiplied comparison.
    pub fn cmp_exact(&self, other: &ExactRatio) -> std::cmp::Ordering {
        (&self.numerator * &other.denominator).cmp(&(&other.numerator * &self.denominator))
    }
}

fn scale_pow2(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn check_rates(n: usize, n_final: usize, r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid(format!("retention must lie in (0, 1), got {r}")));
    }
    if n_final == 0 || n_final > n {
        return Err(Error::invalid(format!("n_final must lie in [1, {n}], got {n_final}")));
    }
    Ok(())
}

/// Increments needed for `n · r^z` to fall to `n_final`.
pub fn min_increments(n: usize, n_final: usize, r: f64) -> Result<f64> {
    check_rates(n, n_final, r)?;
    Ok(((n_final as f64 / n as f64).ln() / r.ln()).max(0.0))
}

/// Geometric-series lower bound on incremental training cost, in units of
/// one increment seen by one voter.
pub fn delegation_cost_bound(n: usize, n_final: usize, r: f64) -> Result<f64> {
    let z = min_increments(n, n_final, r)?;
    Ok(n as f64 * (1.0 - r.powf(z + 1.0)) / (1.0 - r))
}

/// Incremental cost of the integer removal loop the trainer uses, assuming
/// enough data: the sum of active voter counts over the increments trained.
pub fn simulate_incremental_cost(n: usize, n_final: usize, r: f64) -> Result<u64> {
    Ok(simulate_pruning(n, n_final, r)?.iter().map(|&g| g as u64).sum())
}

/// Active voter counts at each trained increment of the integer removal loop.
pub fn simulate_pruning(n: usize, n_final: usize, r: f64) -> Result<Vec<usize>> {
    check_rates(n, n_final, r)?;
    let mut g = n;
    let mut active = Vec::new();
    loop {
        active.push(g);
        let k = removal_count(g, r, n_final);
        if k == 0 {
            return Ok(active);
        }
        g -= k;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurvePoint {
    pub n: usize,
    pub n_final: usize,
    pub r: f64,
    pub z: f64,
    pub bound: f64,
}

pub fn cost_curve_point(n: usize, n_final: usize, r: f64) -> Result<CostCurvePoint> {
    Ok(CostCurvePoint {
        n,
        n_final,
        r,
        z: min_increments(n, n_final, r)?,
        bound: delegation_cost_bound(n, n_final, r)?,
    })
}

/// Upper bound on the fraction of states in which every single delegation
/// is harmful, as an exact ratio and its nearest double.
pub fn pivotal_fraction(n: usize, m: usize) -> Result<(ExactRatio, f64)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if m < 2 {
        return Err(Error::invalid(format!("m must be at least 2, got {m}")));
    }
    let column = binomial(n as u64, n.div_ceil(2) as u64);
    let mut pivotal = BigUint::zero();
    let mut total = BigUint::zero();
    let mut col_pow = &column * &column;
    for mp in 2..=m {
        pivotal += &col_pow;
        total += BigUint::one() << (n * mp) as u64;
        col_pow *= &column;
    }
    let ratio = ExactRatio::new(pivotal, total)?;
    let approx = ratio.to_f64();
    Ok((ratio, approx))
}

/// Counts `n × m_p` binary matrices whose every column holds exactly
/// `⌈n/2⌉` ones, by enumerating all of them.
pub fn brute_force_pivotal_count(n: usize, m_p: usize) -> Result<u64> {
    let bits = n * m_p;
    if n == 0 || bits > 24 {
        return Err(Error::TooLarge(format!("{n} x {m_p} matrices")));
    }
    let need = n.div_ceil(2) as u32;
    let col_mask = (1u32 << n) - 1;
    let count = (0u32..1 << bits)
        .filter(|&state| (0..m_p).all(|c| ((state >> (c * n)) & col_mask).count_ones() == need))
        .count();
    Ok(count as u64)
}

/// Checks every `n × m` correctness matrix with unit weights: whenever a
/// voter is pivotal on no example, each of its possible delegations must
/// leave the number of correctly classified examples no lower. Returns
/// whether no counterexample exists.
pub fn check_unpivotal_delegation_safe(n: usize, m: usize) -> Result<bool> {
    if n == 0 || m == 0 || n * m > 20 {
        return Err(Error::TooLarge(format!("{n} voters x {m} examples")));
    }
    if n == 1 {
        return Ok(true);
    }
    let need = n.div_ceil(2) as u32;
    let cell = |state: u32, voter: usize, example: usize| (state >> (example * n + voter)) & 1;
    for state in 0u32..1 << (n * m) {
        let sums: Vec<u32> = (0..m).map(|j| (0..n).map(|i| cell(state, i, j)).sum()).collect();
        let correct = sums.iter().filter(|&&s| s >= need).count();
        for i in 0..n {
            let pivotal = (0..m).any(|j| cell(state, i, j) == 1 && sums[j] == need);
            if pivotal {
                continue;
            }
            for k in (0..n).filter(|&k| k != i) {
                let after = (0..m)
                    .filter(|&j| sums[j] - cell(state, i, j) + cell(state, k, j) >= need)
                    .count();
                if after < correct {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
