//! Dense symmetric matrix primitives.
//!
//! Everything here is value-level and desk-scale: matrices are stored dense
//! and row-major, extreme eigenvalues come from a full symmetric
//! eigendecomposition up to [`DENSE_EIGEN_LIMIT`] and from shifted power
//! iteration above that.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Dimension above which extreme eigenvalues switch from a dense symmetric
/// eigendecomposition to shifted power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Relative asymmetry tolerated at construction before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default relative tolerance for eigenvalue computations.
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix dimension must be at least 1")]
    EmptyMatrix,
    #[error("expected {expected} entries for a {n}x{n} matrix, got {got}")]
    BadEntryCount { n: usize, expected: usize, got: usize },
    #[error("matrix contains a non-finite entry at ({i},{j})")]
    NonFinite { i: usize, j: usize },
    #[error("matrix is asymmetric: |A[{i}][{j}] - A[{j}][{i}]| = {diff:e} exceeds {tol:e} relative")]
    Asymmetric { i: usize, j: usize, diff: f64, tol: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("diagonal weights must be strictly positive (entry {i} is {value})")]
    NonPositiveWeight { i: usize, value: f64 },
    #[error("eigenvalue tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("matrix text parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read matrix file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense general (possibly rectangular, possibly asymmetric) matrix.
///
/// Used for data matrices and for diagonal scalings `D1 A D2` with distinct
/// scalings, where symmetry is not preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        let cols = rows[0].len();
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch { left: cols, right: r.len() });
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `y = A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transpose dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (j, a) in self.row(i).iter().enumerate() {
                y[j] += a * xi;
            }
        }
        y
    }

    /// `A^T A` as a symmetric matrix.
    pub fn gram(&self) -> SymMatrix {
        let n = self.cols;
        let mut entries = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let mut s = 0.0;
                for i in 0..self.rows {
                    s += self.get(i, j) * self.get(i, k);
                }
                entries[j * n + k] = s;
                entries[k * n + j] = s;
            }
        }
        SymMatrix { n, entries }
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch { left: self.rows, right: other.rows });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

/// Dense symmetric matrix with an enforced symmetry contract.
///
/// Construction symmetrizes the input as `(A + A^T)/2` when the relative
/// asymmetry is within [`SYMMETRY_TOL`] and rejects it otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(LinalgError::BadEntryCount { n, expected: n * n, got: entries.len() });
        }
        let mut scale: f64 = 0.0;
        for (idx, &value) in entries.iter().enumerate() {
            if !value.is_finite() {
                return Err(LinalgError::NonFinite { i: idx / n, j: idx % n });
            }
            scale = scale.max(value.abs());
        }
        let tol = SYMMETRY_TOL * scale.max(1.0);
        let mut sym = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = sym[i * n + j];
                let b = sym[j * n + i];
                let diff = (a - b).abs();
                if diff > tol {
                    return Err(LinalgError::Asymmetric { i, j, diff, tol });
                }
                let avg = 0.5 * (a + b);
                sym[i * n + j] = avg;
                sym[j * n + i] = avg;
            }
        }
        Ok(Self { n, entries: sym })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(LinalgError::DimensionMismatch { left: n, right: r.len() });
            }
        }
        Self::from_entries(n, rows.iter().flatten().copied().collect())
    }

    /// Build from a function of `(i, j)`; only `i <= j` is evaluated, so the
    /// result is symmetric by construction.
    pub fn from_fn_sym(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { i, j });
                }
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn_sym(n, |i, j| if i == j { 1.0 } else { 0.0 }).expect("n >= 1")
    }

    /// Matrix of all ones.
    pub fn ones(n: usize) -> Self {
        Self::from_fn_sym(n, |_, _| 1.0).expect("n >= 1")
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self, LinalgError> {
        let n = diag.len();
        Self::from_fn_sym(n, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `alpha * A + beta * B`, entrywise.
    pub fn scaled_add(&self, alpha: f64, other: &SymMatrix, beta: f64) -> Result<SymMatrix, LinalgError> {
        if self.n != other.n {
            return Err(LinalgError::DimensionMismatch { left: self.n, right: other.n });
        }
        Ok(SymMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// Congruence `D A D` with a single diagonal scaling; exactly symmetric.
    pub fn diag_congruence(&self, d: &DiagWeights) -> Result<SymMatrix, LinalgError> {
        if d.len() != self.n {
            return Err(LinalgError::DimensionMismatch { left: self.n, right: d.len() });
        }
        SymMatrix::from_fn_sym(self.n, |i, j| d.values[i] * self.get(i, j) * d.values[j])
    }

    pub fn as_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }
}

/// Strictly positive diagonal weights (probability vectors, ESO vectors,
/// diagonal scaling matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagWeights {
    values: Vec<f64>,
}

impl DiagWeights {
    pub fn new(values: Vec<f64>) -> Result<Self, LinalgError> {
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(LinalgError::NonPositiveWeight { i, value: v });
            }
        }
        if values.is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Elementwise map; the result must stay positive.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, LinalgError> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Elementwise (Hadamard) product of two symmetric matrices.
pub fn hadamard(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    if a.n != b.n {
        return Err(LinalgError::DimensionMismatch { left: a.n, right: b.n });
    }
    Ok(SymMatrix {
        n: a.n,
        entries: a.entries.iter().zip(&b.entries).map(|(x, y)| x * y).collect(),
    })
}

/// `D1 A D2` with diagonal scalings. The result is symmetric only when the
/// two scalings are proportional, so it is returned as a general matrix;
/// use [`SymMatrix::diag_congruence`] for the `D A D` case.
pub fn diag_scale(d1: &DiagWeights, a: &SymMatrix, d2: &DiagWeights) -> Result<DenseMatrix, LinalgError> {
    if d1.len() != a.n {
        return Err(LinalgError::DimensionMismatch { left: d1.len(), right: a.n });
    }
    if d2.len() != a.n {
        return Err(LinalgError::DimensionMismatch { left: d2.len(), right: a.n });
    }
    Ok(DenseMatrix::from_fn(a.n, a.n, |i, j| {
        d1.values[i] * a.get(i, j) * d2.values[j]
    }))
}

/// Largest eigenvalue of a symmetric matrix.
///
/// Dense symmetric eigendecomposition up to [`DENSE_EIGEN_LIMIT`]; shifted
/// power iteration above that (capped at `10 n` iterations; the achieved
/// residual is available through [`lambda_max_with_residual`]).
pub fn lambda_max(a: &SymMatrix, tol: f64) -> Result<f64, LinalgError> {
    lambda_max_with_residual(a, tol).map(|(v, _)| v)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(a: &SymMatrix, tol: f64) -> Result<f64, LinalgError> {
    lambda_min_with_residual(a, tol).map(|(v, _)| v)
}

/// Largest eigenvalue together with the achieved relative residual
/// (0 on the dense path).
pub fn lambda_max_with_residual(a: &SymMatrix, tol: f64) -> Result<(f64, f64), LinalgError> {
    check_tol(tol)?;
    if a.is_diagonal() {
        let v = a.diag().into_iter().fold(f64::NEG_INFINITY, f64::max);
        return Ok((v, 0.0));
    }
    if a.n <= DENSE_EIGEN_LIMIT {
        let (_, max) = dense_extremes(a);
        return Ok((max, 0.0));
    }
    // Shift by the max absolute row sum so that the target eigenvalue is the
    // dominant one of a PSD matrix.
    let shift = max_abs_row_sum(a);
    let (lam, res) = power_iteration(a, shift, tol);
    Ok((lam, res))
}

/// Smallest eigenvalue together with the achieved relative residual.
pub fn lambda_min_with_residual(a: &SymMatrix, tol: f64) -> Result<(f64, f64), LinalgError> {
    check_tol(tol)?;
    if a.is_diagonal() {
        let v = a.diag().into_iter().fold(f64::INFINITY, f64::min);
        return Ok((v, 0.0));
    }
    if a.n <= DENSE_EIGEN_LIMIT {
        let (min, _) = dense_extremes(a);
        return Ok((min, 0.0));
    }
    // lambda_min(A) = shift - lambda_max(shift I - A) with the same shift trick.
    let shift = max_abs_row_sum(a);
    let negated = SymMatrix {
        n: a.n,
        entries: a.entries.iter().map(|v| -v).collect(),
    };
    let (lam, res) = power_iteration(&negated, shift, tol);
    Ok((-lam, res))
}

fn check_tol(tol: f64) -> Result<(), LinalgError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(LinalgError::BadTolerance(tol));
    }
    Ok(())
}

fn dense_extremes(a: &SymMatrix) -> (f64, f64) {
    let eig = nalgebra::SymmetricEigen::new(a.as_nalgebra());
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

fn max_abs_row_sum(a: &SymMatrix) -> f64 {
    (0..a.n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// Power iteration on `A + shift I`; returns `lambda_max(A)` estimate and the
/// achieved relative eigenvector residual.
fn power_iteration(a: &SymMatrix, shift: f64, tol: f64) -> (f64, f64) {
    let n = a.n;
    let max_iters = 10 * n;
    // Deterministic non-degenerate start.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 % 7.0) * 0.1).collect();
    normalize(&mut x);
    let mut lam = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let mut y = a.matvec(&x);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += shift * xi;
        }
        let norm = normalize(&mut y);
        lam = norm;
        // Residual of the shifted problem: || (A + shift I) x - lam x ||.
        let mut r = a.matvec(&y);
        let mut rnorm = 0.0;
        for i in 0..n {
            r[i] += shift * y[i] - lam * y[i];
            rnorm += r[i] * r[i];
        }
        residual = rnorm.sqrt() / lam.max(f64::MIN_POSITIVE);
        x = y;
        if residual <= tol {
            break;
        }
    }
    (lam - shift, residual)
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

/// Smoothness matrix `M`: a symmetric matrix with positive-diagonal accessor,
/// its diagonal `M_ii = L_i`, and `L = lambda_max(M)` computed on demand.
#[derive(Debug, Clone)]
pub struct SmoothnessMatrix {
    mat: SymMatrix,
    diag: Vec<f64>,
    lmax: std::sync::OnceLock<f64>,
    estimated: bool,
}

impl SmoothnessMatrix {
    /// Wrap an exact smoothness matrix.
    pub fn exact(mat: SymMatrix) -> Self {
        let diag = mat.diag();
        Self { mat, diag, lmax: std::sync::OnceLock::new(), estimated: false }
    }

    /// Wrap a diagonal estimate; carries no smoothness certificate, so rate
    /// checks must not be asserted on it.
    pub fn estimated_diag(diag: Vec<f64>) -> Result<Self, LinalgError> {
        let mat = SymMatrix::from_diag(&diag)?;
        Ok(Self { mat, diag, lmax: std::sync::OnceLock::new(), estimated: true })
    }

    pub fn n(&self) -> usize {
        self.mat.n()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `L_i = M_ii`.
    pub fn li(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// `L = lambda_max(M)`, cached after the first call.
    pub fn lmax(&self) -> f64 {
        *self.lmax.get_or_init(|| {
            lambda_max(&self.mat, EIGEN_TOL).expect("smoothness matrix entries validated at construction")
        })
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn is_estimate(&self) -> bool {
        self.estimated
    }
}

/// Parse the matrix text format: first line `n`, then `n` lines of `n`
/// whitespace-separated decimals.
pub fn parse_matrix_text(text: &str) -> Result<SymMatrix, LinalgError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| LinalgError::Parse { line: 1, msg: "empty input".into() })?;
    let n: usize = header
        .trim()
        .parse()
        .map_err(|_| LinalgError::Parse { line: 1, msg: format!("expected dimension, got {header:?}") })?;
    if n == 0 {
        return Err(LinalgError::Parse { line: 1, msg: "dimension must be at least 1".into() });
    }
    let mut entries = Vec::with_capacity(n * n);
    let mut rows_read = 0;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows_read == n {
            return Err(LinalgError::Parse { line: idx + 1, msg: "more rows than declared".into() });
        }
        let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values
            .map_err(|e| LinalgError::Parse { line: idx + 1, msg: format!("bad number: {e}") })?;
        if values.len() != n {
            return Err(LinalgError::Parse {
                line: idx + 1,
                msg: format!("expected {n} values, got {}", values.len()),
            });
        }
        entries.extend(values);
        rows_read += 1;
    }
    if rows_read != n {
        return Err(LinalgError::Parse {
            line: 0,
            msg: format!("expected {n} rows, got {rows_read}"),
        });
    }
    SymMatrix::from_entries(n, entries)
}

pub fn read_matrix_file(path: &Path) -> Result<SymMatrix, LinalgError> {
    let text = std::fs::read_to_string(path).map_err(|source| LinalgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_matrix_text(&text)
}

pub fn format_matrix_text(a: &SymMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", a.n());
    for i in 0..a.n() {
        let row: Vec<String> = a.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::testutil::random_spd;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        SymMatrix::from_fn_sym(n, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn lambda_max_identity_is_one() {
        for n in [1, 2, 5, 17] {
            let a = SymMatrix::identity(n);
            assert_eq!(lambda_max(&a, EIGEN_TOL).unwrap(), 1.0);
            assert_eq!(lambda_min(&a, EIGEN_TOL).unwrap(), 1.0);
        }
    }

    #[test]
    fn lambda_max_diag_is_largest_entry() {
        let n = 9;
        let diag: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let a = SymMatrix::from_diag(&diag).unwrap();
        assert_eq!(lambda_max(&a, EIGEN_TOL).unwrap(), n as f64);
        assert_eq!(lambda_min(&a, EIGEN_TOL).unwrap(), 1.0);
    }

    #[test]
    fn lambda_extremes_2x2_characteristic_polynomial() {
        // [[2,1],[1,3]]: eigenvalues (5 +- sqrt(5)) / 2.
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let hi = (5.0 + 5.0_f64.sqrt()) / 2.0;
        let lo = (5.0 - 5.0_f64.sqrt()) / 2.0;
        assert!((lambda_max(&a, EIGEN_TOL).unwrap() - hi).abs() < 1e-12);
        assert!((lambda_min(&a, EIGEN_TOL).unwrap() - lo).abs() < 1e-12);
    }

    #[test]
    fn lambda_min_rank_one_all_ones_2x2() {
        let a = SymMatrix::ones(2);
        assert!(lambda_min(&a, EIGEN_TOL).unwrap().abs() < 1e-12);
        assert!((lambda_max(&a, EIGEN_TOL).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_bounds_vs_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_sym(8, &mut rng);
            let d = a.diag();
            let max_d = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min_d = d.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(lambda_max(&a, EIGEN_TOL).unwrap() >= max_d - 1e-12);
            assert!(lambda_min(&a, EIGEN_TOL).unwrap() <= min_d + 1e-12);
        }
    }

    #[test]
    fn psd_lambda_max_at_most_n_times_max_diag() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = random_spd(7, &mut rng);
            let max_d = q.diag().into_iter().fold(f64::NEG_INFINITY, f64::max);
            assert!(lambda_max(&q, EIGEN_TOL).unwrap() <= 7.0 * max_d + 1e-9);
        }
    }

    #[test]
    fn power_iteration_path_matches_known_spectrum() {
        // n > DENSE_EIGEN_LIMIT, rank-one plus identity: lambda_max = 1 + ||u||^2.
        let n = DENSE_EIGEN_LIMIT + 40;
        let u: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let unorm2: f64 = u.iter().map(|v| v * v).sum();
        let a = SymMatrix::from_fn_sym(n, |i, j| u[i] * u[j] + if i == j { 1.0 } else { 0.0 }).unwrap();
        let (lam, res) = lambda_max_with_residual(&a, 1e-10).unwrap();
        assert!(res <= 1e-10, "residual {res:e}");
        assert!((lam - (1.0 + unorm2)).abs() / (1.0 + unorm2) < 1e-9);
        let lo = lambda_min(&a, 1e-10).unwrap();
        assert!((lo - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hadamard_with_ones_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sym(5, &mut rng);
        let e = SymMatrix::ones(5);
        assert_eq!(hadamard(&a, &e).unwrap(), a);
        let with_i = hadamard(&a, &SymMatrix::identity(5)).unwrap();
        assert_eq!(with_i, SymMatrix::from_diag(&a.diag()).unwrap());
    }

    #[test]
    fn hadamard_dimension_mismatch() {
        let a = SymMatrix::identity(3);
        let b = SymMatrix::identity(4);
        assert!(matches!(hadamard(&a, &b), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn diag_scale_identity_and_scalar() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let id = DiagWeights::new(vec![1.0, 1.0]).unwrap();
        let scaled = diag_scale(&id, &a, &id).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(scaled.get(i, j), a.get(i, j));
            }
        }
        let one = SymMatrix::from_rows(&[vec![3.0]]).unwrap();
        let two = DiagWeights::new(vec![2.0]).unwrap();
        assert_eq!(diag_scale(&two, &one, &two).unwrap().get(0, 0), 12.0);
    }

    #[test]
    fn diag_scale_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_sym(6, &mut rng);
        let d: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
        let dw = DiagWeights::new(d.clone()).unwrap();
        let s = diag_scale(&dw, &a, &dw).unwrap();
        let c = a.diag_congruence(&dw).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = d[i] * a.get(i, j) * d[j];
                assert!((s.get(i, j) - expect).abs() < 1e-14);
                assert!((c.get(i, j) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diag_scale_hadamard_commute() {
        // D1 (A o B) D2 == (D1 A D2) o B == A o (D1 B D2), elementwise.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_sym(5, &mut rng);
            let b = random_sym(5, &mut rng);
            let d1 = DiagWeights::new((0..5).map(|_| rng.random_range(0.1..3.0)).collect()).unwrap();
            let d2 = DiagWeights::new((0..5).map(|_| rng.random_range(0.1..3.0)).collect()).unwrap();
            let lhs = diag_scale(&d1, &hadamard(&a, &b).unwrap(), &d2).unwrap();
            let mid = diag_scale(&d1, &a, &d2).unwrap();
            let rhs = diag_scale(&d1, &b, &d2).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let v = lhs.get(i, j);
                    assert!((v - mid.get(i, j) * b.get(i, j)).abs() <= 1e-12 * (1.0 + v.abs()));
                    assert!((v - a.get(i, j) * rhs.get(i, j)).abs() <= 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let r = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]);
        assert!(matches!(r, Err(LinalgError::Asymmetric { .. })));
        // Tiny asymmetry is symmetrized instead.
        let ok = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0 + 1e-15, 1.0]]).unwrap();
        assert_eq!(ok.get(0, 1), ok.get(1, 0));
    }

    #[test]
    fn non_finite_rejected() {
        let r = SymMatrix::from_rows(&[vec![1.0, f64::NAN], vec![f64::NAN, 1.0]]);
        assert!(matches!(r, Err(LinalgError::NonFinite { .. })));
    }

    #[test]
    fn nonpositive_weights_rejected() {
        assert!(DiagWeights::new(vec![1.0, 0.0]).is_err());
        assert!(DiagWeights::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn matrix_text_roundtrip_and_errors() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let text = format_matrix_text(&a);
        let b = parse_matrix_text(&text).unwrap();
        assert_eq!(a, b);

        assert!(matches!(parse_matrix_text(""), Err(LinalgError::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix_text("x\n"), Err(LinalgError::Parse { line: 1, .. })));
        let bad_row = "2\n1 0\n0 oops\n";
        assert!(matches!(parse_matrix_text(bad_row), Err(LinalgError::Parse { line: 3, .. })));
        let short = "2\n1 0\n";
        assert!(parse_matrix_text(short).is_err());
    }

    #[test]
    fn smoothness_matrix_caches_lmax() {
        let m = SmoothnessMatrix::exact(SymMatrix::from_diag(&[1.0, 4.0, 9.0]).unwrap());
        assert_eq!(m.lmax(), 9.0);
        assert_eq!(m.li(1), 4.0);
        assert!(!m.is_estimate());
        let est = SmoothnessMatrix::estimated_diag(vec![2.0, 2.0]).unwrap();
        assert!(est.is_estimate());
    }
}
