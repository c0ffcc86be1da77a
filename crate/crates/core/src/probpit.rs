//! ProbPIT: a log-semiring sum over every permutation's assignment cost.

use crate::assignment::BRUTE_FORCE_CAP;
use crate::error::{Error, Result};
use crate::matrix::{for_each_permutation, CostMatrix};

/// `-ln p(P)` for every permutation.
#[derive(Debug, Clone, PartialEq)]
pub enum PermutationPrior {
    /// `p(P) = 1/N!`.
    Flat,
    /// One entry per permutation, indexed by lexicographic rank.
    Explicit(Vec<f64>),
}

impl PermutationPrior {
    /// Validates that `sum exp(-lambda) = 1` within 1e-9.
    pub fn explicit(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::InvalidPrior("no weights".into()));
        }
        if log_weights.iter().any(|l| l.is_nan() || *l == f64::NEG_INFINITY) {
            return Err(Error::InvalidPrior("weights must be -ln p with p in [0, 1]".into()));
        }
        let total: f64 = log_weights.iter().map(|l| (-l).exp()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPrior(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self::Explicit(log_weights))
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `x (+)_gamma y = -gamma ln(e^{-x/gamma} + e^{-y/gamma})`, evaluated as
/// `min(x, y) - gamma ln(1 + e^{-|x - y|/gamma})`. `+inf` is the identity.
pub fn log_semiring_add(x: f64, y: f64, gamma: f64) -> f64 {
    if x == f64::INFINITY {
        return y;
    }
    if y == f64::INFINITY {
        return x;
    }
    x.min(y) - gamma * (-(x - y).abs() / gamma).exp().ln_1p()
}

/// `(+)_gamma over P of (lambda_P + <C, P>)`, folded in lexicographic order.
pub fn probpit_loss(c: &CostMatrix, gamma: f64, prior: &PermutationPrior) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    let n = c.n();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let flat = ln_factorial(n);
    if let PermutationPrior::Explicit(w) = prior {
        let count = (1..=n).product::<usize>();
        if w.len() != count {
            return Err(Error::DimensionMismatch {
                expected: count,
                actual: w.len(),
            });
        }
    }
    let m = c.matrix().as_slice();
    let mut acc = f64::INFINITY;
    let mut rank = 0;
    for_each_permutation(n, |p| {
        let lambda = match prior {
            PermutationPrior::Flat => flat,
            PermutationPrior::Explicit(w) => w[rank],
        };
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| m[i * n + j]).sum();
        acc = log_semiring_add(acc, lambda + cost, gamma);
        rank += 1;
    });
    Ok(acc)
}
