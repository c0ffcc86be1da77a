//! Reverse-mode gradient of the SinkPIT loss through the unrolled iteration.
//!
//! The forward pass keeps the state after every half-step. Each half-step
//! `Z' = Z - lse(Z)` (along columns or rows) has the adjoint
//!
//! ```text
//! dZ = dZ' - exp(Z') * sum(dZ')
//! ```
//!
//! where the sum runs over the same axis, because `exp(Z')` is exactly the
//! softmax of `Z` along that axis.

use crate::error::{Error, Result};
use crate::matrix::{CostMatrix, SquareMatrix};
use crate::sinkhorn::{check_batch, normalize_columns, normalize_rows, pairwise_sum, SinkhornConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Differentiate through the plan as well as the explicit `C` term.
    #[default]
    Full,
    /// Treat `Z` and `exp Z` as constants; the gradient is then `exp(Z) / N`.
    DetachedPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub value: f64,
    /// `dL/dC`.
    pub grad: SquareMatrix,
}

pub fn sinkpit_value_and_grad(c: &CostMatrix, cfg: &SinkhornConfig) -> Result<GradResult> {
    sinkpit_value_and_grad_with(c, cfg, GradientMode::Full)
}

pub fn sinkpit_value_and_grad_with(c: &CostMatrix, cfg: &SinkhornConfig, mode: GradientMode) -> Result<GradResult> {
    cfg.validate()?;
    let n = c.n();
    let nf = n as f64;
    let beta = cfg.beta;

    // tape[2t] is the state after the column step of sweep t, tape[2t + 1] after its row step.
    let mut tape: Vec<SquareMatrix> = Vec::with_capacity(2 * cfg.iterations);
    let mut z = c.matrix().map(|x| -beta * x);
    for it in 1..=cfg.iterations {
        normalize_columns(&mut z);
        tape.push(z.clone());
        normalize_rows(&mut z);
        if z.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::SinkhornDiverged { iteration: it });
        }
        tape.push(z.clone());
        if let Some(tol) = cfg.tolerance {
            if crate::matrix::check_doubly_stochastic(&z.map(f64::exp)) < tol {
                break;
            }
        }
    }

    let cs = c.matrix().as_slice();
    let zs = z.as_slice();
    let mut value = 0.0;
    let mut grad = vec![0.0; n * n];
    let mut adj = vec![0.0; n * n];
    for k in 0..n * n {
        let p = zs[k].exp();
        value += (cs[k] + zs[k] / beta) * p;
        grad[k] = p / nf;
        adj[k] = p * (cs[k] + zs[k] / beta + 1.0 / beta) / nf;
    }
    value /= nf;

    if mode == GradientMode::Full {
        for (step, state) in tape.iter().enumerate().rev() {
            let s = state.as_slice();
            if step % 2 == 1 {
                // Row step.
                for i in 0..n {
                    let row = i * n..(i + 1) * n;
                    let total: f64 = adj[row.clone()].iter().sum();
                    for k in row {
                        adj[k] -= s[k].exp() * total;
                    }
                }
            } else {
                for j in 0..n {
                    let total: f64 = (0..n).map(|i| adj[i * n + j]).sum();
                    for i in 0..n {
                        adj[i * n + j] -= s[i * n + j].exp() * total;
                    }
                }
            }
        }
        for k in 0..n * n {
            grad[k] -= beta * adj[k];
        }
    }

    Ok(GradResult {
        value,
        grad: SquareMatrix::from_row_major(n, grad)?,
    })
}

/// Mean loss and mean gradient over a batch.
pub fn batch_sinkpit_value_and_grad(costs: &[CostMatrix], cfg: &SinkhornConfig) -> Result<GradResult> {
    check_batch(costs)?;
    let items = costs
        .iter()
        .map(|c| sinkpit_value_and_grad(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let count = items.len() as f64;
    let n = costs[0].n();
    let values: Vec<f64> = items.iter().map(|r| r.value).collect();
    let mut grad = SquareMatrix::zeros(n);
    let mut column = vec![0.0; items.len()];
    for k in 0..n * n {
        for (slot, r) in column.iter_mut().zip(&items) {
            *slot = r.grad.as_slice()[k];
        }
        grad.as_mut_slice()[k] = pairwise_sum(&column) / count;
    }
    Ok(GradResult {
        value: pairwise_sum(&values) / count,
        grad,
    })
}

/// Central differences of an arbitrary scalar function of the cost matrix.
pub fn central_difference(
    c: &CostMatrix,
    h: f64,
    mut f: impl FnMut(&CostMatrix) -> Result<f64>,
) -> Result<SquareMatrix> {
    let n = c.n();
    let mut out = SquareMatrix::zeros(n);
    let mut probe = c.matrix().clone();
    for i in 0..n {
        for j in 0..n {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let plus = f(&CostMatrix::new(probe.clone())?)?;
            probe[(i, j)] = orig - h;
            let minus = f(&CostMatrix::new(probe.clone())?)?;
            probe[(i, j)] = orig;
            out[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Central-difference gradient of the SinkPIT loss (2 N^2 forward passes).
pub fn finite_diff_grad(c: &CostMatrix, cfg: &SinkhornConfig, h: f64) -> Result<SquareMatrix> {
    central_difference(c, h, |probe| crate::sinkhorn::sinkpit_loss(probe, cfg))
}

/// `max |a - b| / max |a|`, the error measure used for gradient checks.
pub fn relative_error(analytic: &SquareMatrix, numeric: &SquareMatrix) -> Result<f64> {
    let scale = analytic.max_abs().max(f64::MIN_POSITIVE);
    Ok(analytic.max_abs_diff(numeric)? / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::brute_force_pit;
    use crate::matrix::frobenius_inner;
    use crate::sinkhorn::{sinkhorn_iterate, sinkpit_loss};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(beta: f64, iterations: usize) -> SinkhornConfig {
        SinkhornConfig::new(beta, iterations).unwrap()
    }

    #[test]
    fn single_source_gradient_is_one() {
        let c = CostMatrix::from_rows(&[vec![2.5]]).unwrap();
        let r = sinkpit_value_and_grad(&c, &cfg(3.0, 10)).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!(r.grad.as_slice(), &[1.0]);
    }

    #[test]
    fn zero_cost_gradient_is_symmetric() {
        let c = CostMatrix::new(SquareMatrix::zeros(3)).unwrap();
        let r = sinkpit_value_and_grad(&c, &cfg(1.0, 50)).unwrap();
        let g0 = r.grad[(0, 0)];
        for &g in r.grad.as_slice() {
            assert!((g - g0).abs() < 1e-14);
        }
        let row_sums: Vec<f64> = r.grad.rows().map(|row| row.iter().sum()).collect();
        assert!(row_sums.iter().all(|s| (s - row_sums[0]).abs() < 1e-14));
    }

    #[test]
    fn value_matches_forward_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = CostMatrix::random_gaussian(6, 10.0, &mut rng);
        let config = cfg(2.0, 200);
        let r = sinkpit_value_and_grad(&c, &config).unwrap();
        assert!((r.value - sinkpit_loss(&c, &config).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn matches_finite_differences_5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = CostMatrix::random_gaussian(5, 1.0, &mut rng);
        let config = cfg(3.0, 100);
        let analytic = sinkpit_value_and_grad(&c, &config).unwrap().grad;
        let numeric = finite_diff_grad(&c, &config, 1e-5).unwrap();
        let err = relative_error(&analytic, &numeric).unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn matches_finite_differences_4x4_short_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = CostMatrix::random_gaussian(4, 1.0, &mut rng);
        let config = cfg(1.0, 20);
        let analytic = sinkpit_value_and_grad(&c, &config).unwrap().grad;
        let numeric = finite_diff_grad(&c, &config, 1e-5).unwrap();
        assert!(analytic.max_abs_diff(&numeric).unwrap() < 1e-6);
    }

    #[test]
    fn central_difference_is_exact_on_linear_functionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = CostMatrix::random_gaussian(4, 1.0, &mut rng);
        let b0 = CostMatrix::random_gaussian(4, 1.0, &mut rng).into_matrix();
        let g = central_difference(&c, 0.5, |probe| frobenius_inner(probe.matrix(), &b0)).unwrap();
        assert!(g.max_abs_diff(&b0).unwrap() < 1e-12);
    }

    #[test]
    fn finite_difference_error_shrinks_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = CostMatrix::random_gaussian(4, 1.0, &mut rng);
        let config = cfg(2.0, 30);
        let analytic = sinkpit_value_and_grad(&c, &config).unwrap().grad;
        let coarse = analytic
            .max_abs_diff(&finite_diff_grad(&c, &config, 1e-2).unwrap())
            .unwrap();
        let fine = analytic
            .max_abs_diff(&finite_diff_grad(&c, &config, 1e-3).unwrap())
            .unwrap();
        // Ten-fold smaller step, roughly hundred-fold smaller error.
        assert!(fine < coarse / 30.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn detached_gradient_is_scaled_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c = CostMatrix::random_gaussian(4, 1.0, &mut rng);
        let config = cfg(2.0, 40);
        let r = sinkpit_value_and_grad_with(&c, &config, GradientMode::DetachedPlan).unwrap();
        let plan = sinkhorn_iterate(&c, &config).unwrap().plan();
        let scaled = plan.matrix().map(|x| x / 4.0);
        assert!(r.grad.max_abs_diff(&scaled).unwrap() < 1e-15);
    }

    #[test]
    fn batch_gradient_is_mean_of_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let config = cfg(1.0, 30);
        let costs: Vec<_> = (0..5).map(|_| CostMatrix::random_gaussian(4, 3.0, &mut rng)).collect();
        let batch = batch_sinkpit_value_and_grad(&costs, &config).unwrap();
        let mut mean = SquareMatrix::zeros(4);
        for c in &costs {
            let g = sinkpit_value_and_grad(c, &config).unwrap().grad;
            for (m, x) in mean.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *m += x / 5.0;
            }
        }
        assert!(batch.grad.max_abs_diff(&mean).unwrap() < 1e-12);
        assert!(batch_sinkpit_value_and_grad(&[], &config).is_err());
    }

    #[test]
    fn cold_gradient_peaks_on_optimal_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = CostMatrix::random_gaussian(6, 10.0, &mut rng);
        let best = brute_force_pit(&c).unwrap().permutation;
        let g = sinkpit_value_and_grad(&c, &cfg(100.0, 2000)).unwrap().grad;
        for i in 0..6 {
            let star = g[(i, best.apply(i))];
            for j in 0..6 {
                if j != best.apply(i) {
                    assert!(star > g[(i, j)], "row {i}: {star} vs {}", g[(i, j)]);
                }
            }
        }
    }
}
