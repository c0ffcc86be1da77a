//! Dense square matrices and the primitive quantities shared by every solver.
//!
//! Storage is row-major `f64`. Sizes are small (N up to a few dozen), so no
//! blocking or sparse layout is attempted.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Sizes above this are accepted but outside the intended regime.
pub const SOFT_SIZE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds from row-major data; `data.len()` must be a non-zero perfect square.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::NotSquare {
                rows: n,
                len: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::NotSquare { rows: 0, len: 0 });
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_same_size(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.n,
                col: k % self.n,
            }),
            None => Ok(()),
        }
    }

    /// Parses `n` lines of `n` comma-separated floats. Blank lines are skipped;
    /// ragged rows are rejected.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| Error::Csv {
                        line: line_no + 1,
                        message: format!("{field:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Csv {
                        line: line_no + 1,
                        message: format!("ragged row: {} fields, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                line: 0,
                message: "no rows".into(),
            });
        }
        if rows[0].len() != rows.len() {
            return Err(Error::Csv {
                line: rows.len(),
                message: format!("{} rows of {} fields is not square", rows.len(), rows[0].len()),
            });
        }
        Self::from_rows(&rows)
    }

    /// Shortest round-trip decimal representation, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{x:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

fn check_same_size(a: &SquareMatrix, b: &SquareMatrix) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            actual: b.n,
        });
    }
    Ok(())
}

/// Pairwise losses `C[i][j]` between ground truth `i` and estimate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(SquareMatrix);

impl CostMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        m.check_finite()?;
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(SquareMatrix::from_csv(text)?)
    }

    /// Entries drawn i.i.d. from `N(0, std_dev^2)`.
    pub fn random_gaussian(n: usize, std_dev: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std_dev).expect("std_dev must be finite and non-negative");
        Self(SquareMatrix::from_fn(n, |_, _| normal.sample(rng)))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.0
    }

    /// `C[i][j] + row[i] + col[j]`.
    pub fn shifted(&self, row: &[f64], col: &[f64]) -> Result<Self> {
        let n = self.n();
        if row.len() != n || col.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if row.len() != n { row.len() } else { col.len() },
            });
        }
        Self::new(SquareMatrix::from_fn(n, |i, j| self[(i, j)] + row[i] + col[j]))
    }

    /// `sum_i C[i][sigma(i)]`.
    pub fn assignment_cost(&self, p: &Permutation) -> f64 {
        p.as_slice().iter().enumerate().map(|(i, &j)| self[(i, j)]).sum()
    }
}

impl Index<(usize, usize)> for CostMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl AsRef<SquareMatrix> for CostMatrix {
    fn as_ref(&self) -> &SquareMatrix {
        &self.0
    }
}

/// A non-negative matrix that is (approximately) doubly stochastic.
///
/// The marginal deviation is recorded, not enforced: a Sinkhorn plan at a
/// finite iteration count is only approximately balanced.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: SquareMatrix,
    deviation: f64,
}

impl TransportPlan {
    pub fn new(matrix: SquareMatrix) -> Result<Self> {
        for (k, &x) in matrix.as_slice().iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    row: k / matrix.n,
                    col: k % matrix.n,
                });
            }
            if x < 0.0 {
                return Err(Error::NegativeEntry {
                    row: k / matrix.n,
                    col: k % matrix.n,
                    value: x,
                });
            }
        }
        let deviation = check_doubly_stochastic(&matrix);
        Ok(Self { matrix, deviation })
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(SquareMatrix::filled(n, 1.0 / n as f64)).unwrap()
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    /// Max over all row and column sums of `|sum - 1|`, measured at construction.
    pub fn marginal_deviation(&self) -> f64 {
        self.deviation
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.matrix).expect("plan entries are non-negative")
    }
}

impl Index<(usize, usize)> for TransportPlan {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.matrix[idx]
    }
}

impl AsRef<SquareMatrix> for TransportPlan {
    fn as_ref(&self) -> &SquareMatrix {
        &self.matrix
    }
}

/// Log-domain Sinkhorn state `Z` after `iterations_done` column+row sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPlan {
    pub(crate) z: SquareMatrix,
    pub(crate) iterations_done: usize,
}

impl LogPlan {
    pub fn log_entries(&self) -> &SquareMatrix {
        &self.z
    }

    pub fn iterations_done(&self) -> usize {
        self.iterations_done
    }

    pub fn n(&self) -> usize {
        self.z.n
    }

    /// Element-wise `exp Z`.
    pub fn plan(&self) -> TransportPlan {
        TransportPlan::new(self.z.map(f64::exp)).expect("exp of finite values is non-negative")
    }
}

/// A bijection on `0..n`, stored as `mapping[i] = sigma(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &j in &mapping {
            if j >= n || seen[j] {
                return Err(Error::InvalidPermutation { n, mapping });
            }
            seen[j] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut v: Vec<usize> = (0..n).collect();
        v.shuffle(rng);
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Self(inv)
    }

    /// 1-based rendering, e.g. `(2 1 3)`.
    pub fn one_based(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|j| (j + 1).to_string()).collect();
        format!("({})", parts.join(" "))
    }

    /// Rearranges into the lexicographic successor; returns false (leaving the
    /// slice untouched) when already at the last permutation.
    pub fn advance_lexicographic(mapping: &mut [usize]) -> bool {
        let n = mapping.len();
        if n < 2 {
            return false;
        }
        let mut i = n - 1;
        while i > 0 && mapping[i - 1] >= mapping[i] {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        let mut j = n - 1;
        while mapping[j] <= mapping[i - 1] {
            j -= 1;
        }
        mapping.swap(i - 1, j);
        mapping[i..].reverse();
        true
    }
}

/// Visits every permutation of `0..n` in lexicographic order, without recursion.
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut mapping: Vec<usize> = (0..n).collect();
    loop {
        visit(&mapping);
        if !Permutation::advance_lexicographic(&mut mapping) {
            break;
        }
    }
}

/// `sum_ij X_ij Y_ij`.
pub fn frobenius_inner(x: &SquareMatrix, y: &SquareMatrix) -> Result<f64> {
    check_same_size(x, y)?;
    Ok(x.data.iter().zip(&y.data).map(|(a, b)| a * b).sum())
}

/// `-sum_ij B_ij ln B_ij`, with `0 ln 0 = 0`.
pub fn entropy(b: &SquareMatrix) -> Result<f64> {
    let mut h = 0.0;
    for (k, &x) in b.data.iter().enumerate() {
        if x < 0.0 {
            return Err(Error::NegativeEntry {
                row: k / b.n,
                col: k % b.n,
                value: x,
            });
        }
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    Ok(h)
}

pub fn permutation_to_matrix(p: &Permutation) -> TransportPlan {
    let n = p.len();
    let mut m = SquareMatrix::zeros(n);
    for (i, &j) in p.as_slice().iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    TransportPlan {
        matrix: m,
        deviation: 0.0,
    }
}

/// Inverse of [`permutation_to_matrix`]; `None` unless the input is exactly a
/// 0/1 permutation matrix.
pub fn matrix_to_permutation(m: &SquareMatrix) -> Option<Permutation> {
    let mut mapping = Vec::with_capacity(m.n);
    for row in m.rows() {
        let mut col = None;
        for (j, &x) in row.iter().enumerate() {
            if x == 1.0 {
                if col.is_some() {
                    return None;
                }
                col = Some(j);
            } else if x != 0.0 {
                return None;
            }
        }
        mapping.push(col?);
    }
    Permutation::new(mapping).ok()
}

/// Max over every row and column sum of `|sum - 1|`.
pub fn check_doubly_stochastic(b: &SquareMatrix) -> f64 {
    let n = b.n;
    let mut col_sums = vec![0.0; n];
    let mut dev: f64 = 0.0;
    for row in b.rows() {
        let mut s = 0.0;
        for (j, &x) in row.iter().enumerate() {
            s += x;
            col_sums[j] += x;
        }
        dev = dev.max((s - 1.0).abs());
    }
    col_sums.iter().fold(dev, |d, s| d.max((s - 1.0).abs()))
}
