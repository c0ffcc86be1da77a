//! Log-domain Sinkhorn balancing and the SinkPIT loss built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_doubly_stochastic, entropy, frobenius_inner, CostMatrix, LogPlan, SquareMatrix};

pub const DEFAULT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Inverse temperature.
    pub beta: f64,
    /// Number of column+row sweeps.
    pub iterations: usize,
    /// Stop early once the marginal deviation drops below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl SinkhornConfig {
    pub fn new(beta: f64, iterations: usize) -> Result<Self> {
        let cfg = Self {
            beta,
            iterations,
            tolerance: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if let Some(tol) = self.tolerance {
            if tol.is_nan() || tol <= 0.0 {
                return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
            }
        }
        Ok(())
    }
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            iterations: DEFAULT_ITERATIONS,
            tolerance: None,
        }
    }
}

/// Cooling schedule `beta = min(base^epoch, cap)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub base: f64,
    pub cap: f64,
}

impl AnnealSchedule {
    pub fn new(base: f64, cap: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) || !(cap >= 1.0 && cap.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "anneal schedule needs base > 1 and cap >= 1, got base {base}, cap {cap}"
            )));
        }
        Ok(Self { base, cap })
    }

    pub fn beta(&self, epoch: usize) -> f64 {
        anneal_beta(epoch, self)
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { base: 1.02, cap: 10.0 }
    }
}

pub fn anneal_beta(epoch: usize, sched: &AnnealSchedule) -> f64 {
    // powf rather than powi: powi is not correctly rounded for large exponents.
    sched.base.powf(epoch as f64).min(sched.cap)
}

/// Max-shifted `ln sum exp` over a strided view of `data`.
#[inline]
pub(crate) fn log_sum_exp_strided(data: &[f64], start: usize, stride: usize, count: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for t in 0..count {
        max = max.max(data[start + t * stride]);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut s = 0.0;
    for t in 0..count {
        s += (data[start + t * stride] - max).exp();
    }
    max + s.ln()
}

/// Subtracts each column's log-sum-exp (columns then sum to one in the exp domain).
pub(crate) fn normalize_columns(z: &mut SquareMatrix) {
    let n = z.n();
    let data = z.as_mut_slice();
    for j in 0..n {
        let lse = log_sum_exp_strided(data, j, n, n);
        for i in 0..n {
            data[i * n + j] -= lse;
        }
    }
}

pub(crate) fn normalize_rows(z: &mut SquareMatrix) {
    let n = z.n();
    let data = z.as_mut_slice();
    for i in 0..n {
        let lse = log_sum_exp_strided(data, i * n, 1, n);
        for x in &mut data[i * n..(i + 1) * n] {
            *x -= lse;
        }
    }
}

/// Runs the log-domain iteration from `Z = -beta C`, one column normalization
/// followed by one row normalization per sweep.
pub fn sinkhorn_iterate(c: &CostMatrix, cfg: &SinkhornConfig) -> Result<LogPlan> {
    cfg.validate()?;
    let mut z = c.matrix().map(|x| -cfg.beta * x);
    let mut done = 0;
    for it in 1..=cfg.iterations {
        normalize_columns(&mut z);
        normalize_rows(&mut z);
        done = it;
        if z.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::SinkhornDiverged { iteration: it });
        }
        if let Some(tol) = cfg.tolerance {
            if check_doubly_stochastic(&z.map(f64::exp)) < tol {
                break;
            }
        }
    }
    Ok(LogPlan {
        z,
        iterations_done: done,
    })
}

/// `<C, B> - H(B) / beta`.
pub fn entropic_objective(c: &CostMatrix, b: &SquareMatrix, beta: f64) -> Result<f64> {
    Ok(frobenius_inner(c.matrix(), b)? - entropy(b)? / beta)
}

/// `(1/N) <C + Z/beta, exp Z>` evaluated on an already computed log plan.
pub fn sinkpit_loss_from_log_plan(c: &CostMatrix, z: &LogPlan, beta: f64) -> Result<f64> {
    let zm = z.log_entries();
    if zm.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: c.n(),
            actual: zm.n(),
        });
    }
    let sum: f64 = c
        .matrix()
        .as_slice()
        .iter()
        .zip(zm.as_slice())
        .map(|(&cij, &zij)| (cij + zij / beta) * zij.exp())
        .sum();
    Ok(sum / c.n() as f64)
}

pub fn sinkpit_loss(c: &CostMatrix, cfg: &SinkhornConfig) -> Result<f64> {
    let z = sinkhorn_iterate(c, cfg)?;
    sinkpit_loss_from_log_plan(c, &z, cfg.beta)
}

/// Mean SinkPIT loss over a batch of equally sized cost matrices.
pub fn batch_sinkpit_loss(costs: &[CostMatrix], cfg: &SinkhornConfig) -> Result<f64> {
    check_batch(costs)?;
    let losses = costs.iter().map(|c| sinkpit_loss(c, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&losses) / losses.len() as f64)
}

pub(crate) fn check_batch(costs: &[CostMatrix]) -> Result<()> {
    let first = costs.first().ok_or(Error::EmptyBatch)?;
    for c in costs {
        if c.n() != first.n() {
            return Err(Error::DimensionMismatch {
                expected: first.n(),
                actual: c.n(),
            });
        }
    }
    Ok(())
}

/// Fixed-shape recursive halving sum, independent of evaluation order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let (a, b) = xs.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
