//! Exact permutation search (brute force and Kuhn-Munkres) and the
//! Birkhoff-von Neumann decomposition of doubly stochastic matrices.

use crate::error::{Error, Result};
use crate::matrix::{CostMatrix, Permutation, SquareMatrix, TransportPlan};

/// Largest N for which the N! enumeration is attempted.
pub const BRUTE_FORCE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub permutation: Permutation,
    /// `sum_i C[i][sigma(i)]`.
    pub total_cost: f64,
    /// `total_cost / N`, the PIT loss of one sample.
    pub mean_cost: f64,
}

impl AssignmentResult {
    fn new(c: &CostMatrix, permutation: Permutation) -> Self {
        let total_cost = c.assignment_cost(&permutation);
        Self {
            permutation,
            total_cost,
            mean_cost: total_cost / c.n() as f64,
        }
    }
}

/// Exhaustive search over all N! permutations in lexicographic order; the
/// first minimizer encountered wins ties.
pub fn brute_force_pit(c: &CostMatrix) -> Result<AssignmentResult> {
    let n = c.n();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let m = c.matrix().as_slice();
    let mut current: Vec<usize> = (0..n).collect();
    let mut best = current.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for (i, &j) in current.iter().enumerate() {
            total += m[i * n + j];
        }
        if total < best_cost {
            best_cost = total;
            best.copy_from_slice(&current);
        }
        if !Permutation::advance_lexicographic(&mut current) {
            break;
        }
    }
    Ok(AssignmentResult::new(c, Permutation::new(best)?))
}

/// O(N^3) Kuhn-Munkres with row/column potentials (shortest augmenting path
/// form). Costs may be negative.
pub fn hungarian(c: &CostMatrix) -> AssignmentResult {
    let perm = solve_assignment(c.matrix());
    AssignmentResult::new(c, perm)
}

/// Min-cost perfect matching on a finite square matrix.
fn solve_assignment(cost: &SquareMatrix) -> Permutation {
    let n = cost.n();
    // 1-based with a virtual column 0, following the classic potentials layout.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[col_owner[j] - 1] = j - 1;
    }
    Permutation::new(mapping).expect("augmenting paths yield a perfect matching")
}

/// Permutation maximizing `sum_i B[i][sigma(i)]`: the nearest vertex of the
/// Birkhoff polytope in the Frobenius sense.
pub fn round_plan(b: &TransportPlan) -> Permutation {
    solve_assignment(&b.matrix().map(|x| -x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffTerm {
    pub weight: f64,
    pub permutation: Permutation,
}

/// Entries at or below this are treated as structural zeros of the residual.
const SUPPORT_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Greedy Birkhoff-von Neumann decomposition `B ~ sum mu_P P`.
///
/// Each step picks a permutation on the positive support of the residual
/// (the one maximizing the product of its entries), removes the smallest entry
/// along it, and stops once every residual row and column sum is below `tol`.
/// Decompositions are not unique.
pub fn birkhoff_decompose(b: &TransportPlan, tol: f64) -> Result<Vec<BirkhoffTerm>> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let deviation = b.marginal_deviation();
    if deviation > tol {
        return Err(Error::NotDoublyStochastic { deviation, tol });
    }
    let n = b.n();
    let mut residual = b.matrix().clone();
    let mut terms = Vec::new();
    // A face of the polytope loses at least one dimension per exact step.
    let max_terms = (n - 1) * (n - 1) + 1;

    loop {
        let mass = residual_mass(&residual);
        if mass < tol {
            break;
        }
        if terms.len() >= max_terms {
            return Err(Error::NoPositiveSupport { residual: mass });
        }
        // Zero entries get a cost that no positive-support matching can reach.
        let forbidden = 1e6;
        let cost = residual.map(|x| if x > SUPPORT_FLOOR { -x.ln() } else { forbidden });
        let perm = solve_assignment(&cost);
        let mut weight = f64::INFINITY;
        let mut argmin = 0;
        for (i, &j) in perm.as_slice().iter().enumerate() {
            let x = residual[(i, j)];
            if x < weight {
                weight = x;
                argmin = i;
            }
        }
        if weight <= SUPPORT_FLOOR {
            return Err(Error::NoPositiveSupport { residual: mass });
        }
        for (i, &j) in perm.as_slice().iter().enumerate() {
            residual[(i, j)] = if i == argmin {
                0.0
            } else {
                (residual[(i, j)] - weight).max(0.0)
            };
        }
        terms.push(BirkhoffTerm {
            weight,
            permutation: perm,
        });
    }
    Ok(terms)
}

/// Largest row or column sum of a non-negative residual.
fn residual_mass(r: &SquareMatrix) -> f64 {
    let n = r.n();
    let mut cols = vec![0.0; n];
    let mut mass: f64 = 0.0;
    for row in r.rows() {
        let mut s = 0.0;
        for (j, &x) in row.iter().enumerate() {
            s += x;
            cols[j] += x;
        }
        mass = mass.max(s);
    }
    cols.into_iter().fold(mass, f64::max)
}

/// `sum mu_P P`.
pub fn reconstruct(n: usize, terms: &[BirkhoffTerm]) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(n);
    for t in terms {
        for (i, &j) in t.permutation.as_slice().iter().enumerate() {
            m[(i, j)] += t.weight;
        }
    }
    m
}
