//! Problem oracles: objective values, per-coordinate partial derivatives,
//! full gradients, smoothness matrices and strong-convexity estimates.
//!
//! Three families are provided: quadratics `f(x) = x'Mx/2 - b'x` (including
//! the five synthetic generators), regularized logistic regression, and the
//! dual of the squared-hinge SVM with a nonnegative-orthant projection.
//! Oracles are immutable after construction; value/gradient calls are
//! re-entrant and side-effect free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{
    lambda_min, DenseMatrix, LinalgError, SmoothnessMatrix, SymMatrix, EIGEN_TOL,
};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("smoothness matrix is not PSD (lambda_min = {0:e})")]
    NotPsd(f64),
    #[error("smoothness diagonal must be positive (entry {i} = {value})")]
    BadDiagonal { i: usize, value: f64 },
    #[error("regularization must be positive, got {0}")]
    BadLambda(f64),
    #[error("labels must be -1 or +1 (entry {i} = {value})")]
    BadLabel { i: usize, value: f64 },
    #[error("dataset is empty")]
    EmptyData,
    #[error("synthetic problem type {0} is not in 1..=5")]
    BadSyntheticType(u8),
    #[error("synthetic type {ptype} needs an even dimension, got n = {n}")]
    OddDimension { ptype: u8, n: usize },
    #[error("scale factor must be positive, got {0}")]
    BadFactor(f64),
    #[error("reference solve requires {0}")]
    ReferenceUnsupported(&'static str),
    #[error("reference solve did not certify gap <= {target:e} within {iters} iterations (achieved {achieved:e})")]
    ReferenceNotConverged { target: f64, iters: usize, achieved: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Coordinatewise projection attached to constrained problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    NonnegativeOrthant,
}

impl Projection {
    pub fn apply(&self, x: &mut [f64]) {
        match self {
            Projection::NonnegativeOrthant => {
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum ProblemKind {
    Quadratic {
        m: SymMatrix,
        b: Vec<f64>,
    },
    Logistic {
        a: DenseMatrix,
        labels: Vec<f64>,
        lambda: f64,
    },
    /// Columns of `a_scaled` are already multiplied by the labels.
    SvmDual {
        a_scaled: DenseMatrix,
        lambda: f64,
    },
}

/// A problem oracle bundling objective, gradients, smoothness information,
/// a strong-convexity estimate and optional projection/reference values.
#[derive(Debug, Clone)]
pub struct ProblemOracle {
    n: usize,
    kind: ProblemKind,
    smoothness: SmoothnessMatrix,
    sigma: f64,
    projection: Option<Projection>,
    fstar: Option<f64>,
    xstar: Option<Vec<f64>>,
    descriptor: String,
}

impl ProblemOracle {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn smoothness(&self) -> &SmoothnessMatrix {
        &self.smoothness
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn projection(&self) -> Option<Projection> {
        self.projection
    }

    pub fn fstar(&self) -> Option<f64> {
        self.fstar
    }

    pub fn xstar(&self) -> Option<&[f64]> {
        self.xstar.as_deref()
    }

    /// Short human-readable tag used in trace metadata.
    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        match &self.kind {
            ProblemKind::Quadratic { m, b } => 0.5 * m.quad_form(x) - dot(b, x),
            ProblemKind::Logistic { a, labels, lambda } => {
                let z = a.matvec(x);
                let m = labels.len() as f64;
                let loss: f64 = z
                    .iter()
                    .zip(labels)
                    .map(|(&zi, &bi)| log1p_exp(-bi * zi))
                    .sum();
                loss / m + 0.5 * lambda * sq_norm(x)
            }
            ProblemKind::SvmDual { a_scaled, lambda } => {
                let n = self.n as f64;
                let t = a_scaled.matvec(x);
                sq_norm(&t) / (lambda * n * n) - x.iter().sum::<f64>() / n
                    + sq_norm(x) / (4.0 * n)
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        match &self.kind {
            ProblemKind::Quadratic { m, b } => {
                let mut g = m.matvec(x);
                for (gi, bi) in g.iter_mut().zip(b) {
                    *gi -= bi;
                }
                g
            }
            ProblemKind::Logistic { a, labels, lambda } => {
                let weights = logistic_weights(a, labels, x);
                let mut g = a.matvec_transpose(&weights);
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += lambda * xi;
                }
                g
            }
            ProblemKind::SvmDual { a_scaled, lambda } => {
                let n = self.n as f64;
                let t = a_scaled.matvec(x);
                let mut g = a_scaled.matvec_transpose(&t);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = 2.0 * *gi / (lambda * n * n) - 1.0 / n + x[i] / (2.0 * n);
                }
                g
            }
        }
    }

    /// Partial derivatives for a batch of coordinates at the same point.
    /// Shared work (`A x`) is computed once per call.
    pub fn grad_coords(&self, coords: &[usize], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        match &self.kind {
            ProblemKind::Quadratic { m, b } => {
                coords.iter().map(|&i| dot(m.row(i), x) - b[i]).collect()
            }
            ProblemKind::Logistic { a, labels, lambda } => {
                let weights = logistic_weights(a, labels, x);
                coords
                    .iter()
                    .map(|&i| {
                        let col: f64 =
                            weights.iter().enumerate().map(|(j, &wj)| wj * a.get(j, i)).sum();
                        col + lambda * x[i]
                    })
                    .collect()
            }
            ProblemKind::SvmDual { a_scaled, lambda } => {
                let n = self.n as f64;
                let t = a_scaled.matvec(x);
                coords
                    .iter()
                    .map(|&i| {
                        let col: f64 =
                            t.iter().enumerate().map(|(j, &tj)| tj * a_scaled.get(j, i)).sum();
                        2.0 * col / (lambda * n * n) - 1.0 / n + x[i] / (2.0 * n)
                    })
                    .collect()
            }
        }
    }

    pub fn grad_coord(&self, i: usize, x: &[f64]) -> f64 {
        self.grad_coords(&[i], x)[0]
    }

    /// Swap the exact smoothness matrix for `Diag(factor * M_ii)`, flagged as
    /// an estimate. Used by the cheap large-scale protocol.
    pub fn with_estimated_smoothness(mut self, factor: f64) -> Result<Self, ProblemError> {
        let est = estimate_smoothness_diag(self.smoothness.diag(), factor)?;
        self.smoothness = est;
        Ok(self)
    }

    /// Override the strong-convexity estimate (estimated-smoothness protocol).
    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn set_reference(&mut self, fstar: f64, xstar: Vec<f64>) {
        assert_eq!(xstar.len(), self.n);
        self.fstar = Some(fstar);
        self.xstar = Some(xstar);
    }
}

/// `w_j = -b_j sigmoid(-b_j (Ax)_j) / m`, the per-row gradient weights of
/// the logistic loss.
fn logistic_weights(a: &DenseMatrix, labels: &[f64], x: &[f64]) -> Vec<f64> {
    let z = a.matvec(x);
    let m = labels.len() as f64;
    z.iter()
        .zip(labels)
        .map(|(&zj, &bj)| -bj * sigmoid(-bj * zj) / m)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `log(1 + exp(t))` without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-t))` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Quadratic `f(x) = x'Mx/2 - b'x` with exact smoothness `M`,
/// `sigma = lambda_min(M)`, and the reference optimum from `M x* = b`.
pub fn quadratic_problem(m: SymMatrix, b: Vec<f64>) -> Result<ProblemOracle, ProblemError> {
    let n = m.n();
    if b.len() != n {
        return Err(ProblemError::Dimension { left: n, right: b.len() });
    }
    for (i, &d) in m.diag().iter().enumerate() {
        if !(d > 0.0) {
            return Err(ProblemError::BadDiagonal { i, value: d });
        }
    }
    let lmin = lambda_min(&m, EIGEN_TOL)?;
    if lmin < -1e-8 * m.max_abs().max(1.0) {
        return Err(ProblemError::NotPsd(lmin));
    }
    let sigma = lmin.max(0.0);
    let (xstar, fstar) = solve_linear(&m, &b);
    let smoothness = SmoothnessMatrix::exact(m.clone());
    Ok(ProblemOracle {
        n,
        kind: ProblemKind::Quadratic { m, b },
        smoothness,
        sigma,
        projection: None,
        fstar: Some(fstar),
        xstar: Some(xstar),
        descriptor: "quadratic".into(),
    })
}

/// `x* = M^{-1} b` via Cholesky, falling back to the minimum-norm
/// least-squares solution when `M` is singular; `f* = f(x*)`.
fn solve_linear(m: &SymMatrix, b: &[f64]) -> (Vec<f64>, f64) {
    let mat = m.as_nalgebra();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let xstar = match nalgebra::Cholesky::new(mat.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let svd = nalgebra::SVD::new(mat, true, true);
            svd.solve(&rhs, 1e-12).expect("SVD solve with computed factors")
        }
    };
    let x: Vec<f64> = xstar.iter().copied().collect();
    let fstar = 0.5 * m.quad_form(&x) - dot(b, &x);
    (x, fstar)
}

/// The five synthetic smoothness-matrix generators; `b ~ N(0, I)`.
/// Deterministic for a fixed `(ptype, n, seed)`: the entries of `A` are
/// drawn row-major first, then `b`.
pub fn synthetic_generator(ptype: u8, n: usize, seed: u64) -> Result<ProblemOracle, ProblemError> {
    if n == 0 {
        return Err(ProblemError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = match ptype {
        1 | 2 | 5 => {
            if n % 2 == 1 && ptype != 2 {
                return Err(ProblemError::OddDimension { ptype, n });
            }
            let rows = if ptype == 2 { 2 * n } else { n / 2 };
            let a = DenseMatrix::from_fn(rows, n, |_, _| rng.sample(StandardNormal));
            let gram = if ptype == 5 {
                // A' D A with D = Diag(1..rows) / sqrt(n), via sqrt(D) A.
                let scale = 1.0 / (n as f64).sqrt();
                let scaled = DenseMatrix::from_fn(rows, n, |i, j| {
                    ((i + 1) as f64 * scale).sqrt() * a.get(i, j)
                });
                scaled.gram()
            } else {
                a.gram()
            };
            gram.scaled_add(1.0, &SymMatrix::identity(n), 1.0)?
        }
        3 => {
            let diag: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            SymMatrix::from_diag(&diag)?
        }
        4 => {
            // A + I with A_nn = n, all-ones leading (n-1) x (n-1) block,
            // last row/column otherwise zero.
            SymMatrix::from_fn_sym(n, |i, j| {
                let a = if i == n - 1 && j == n - 1 {
                    n as f64
                } else if i < n - 1 && j < n - 1 {
                    1.0
                } else {
                    0.0
                };
                a + if i == j { 1.0 } else { 0.0 }
            })?
        }
        other => return Err(ProblemError::BadSyntheticType(other)),
    };
    let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut oracle = quadratic_problem(m, b)?;
    oracle.descriptor = format!("synthetic:{ptype}");
    Ok(oracle)
}

/// Regularized logistic regression on an `m x n` data matrix with labels in
/// `{-1, +1}`: `f(x) = (1/m) sum_i log(1 + exp(-b_i a_i'x)) + (lambda/2)|x|^2`.
/// The exact smoothness matrix is `(1/(4m)) A'A + lambda I`; `sigma = lambda`.
pub fn logistic_problem(
    a: DenseMatrix,
    labels: Vec<f64>,
    lambda: f64,
) -> Result<ProblemOracle, ProblemError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(ProblemError::EmptyData);
    }
    if labels.len() != a.rows() {
        return Err(ProblemError::Dimension { left: a.rows(), right: labels.len() });
    }
    if !(lambda > 0.0) {
        return Err(ProblemError::BadLambda(lambda));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l != 1.0 && l != -1.0 {
            return Err(ProblemError::BadLabel { i, value: l });
        }
    }
    let n = a.cols();
    let gram = a.gram();
    let m_rows = a.rows() as f64;
    let smooth = gram.scaled_add(1.0 / (4.0 * m_rows), &SymMatrix::identity(n), lambda)?;
    Ok(ProblemOracle {
        n,
        kind: ProblemKind::Logistic { a, labels, lambda },
        smoothness: SmoothnessMatrix::exact(smooth),
        sigma: lambda,
        projection: None,
        fstar: None,
        xstar: None,
        descriptor: "logistic".into(),
    })
}

/// Default logistic regularization: the mean diagonal element of the data
/// part `(1/(4m)) A'A` of the smoothness matrix.
pub fn logistic_lambda_mean_diag(a: &DenseMatrix) -> f64 {
    let m = a.rows() as f64;
    let n = a.cols();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..a.rows() {
            total += a.get(i, j) * a.get(i, j);
        }
    }
    total / (4.0 * m * n as f64)
}

/// Dual of the squared-hinge SVM on an `m x n` data matrix whose columns
/// correspond to the `n` dual variables, labels in `{-1, +1}` per column:
///
/// `f(x) = (1/(lambda n^2)) sum_j (sum_i b_i A_ji x_i)^2 - (1/n) sum_i x_i
///         + (1/(4n)) sum_i x_i^2`, constrained to the nonnegative orthant.
///
/// The smooth part has exact smoothness `(2/(lambda n^2)) A~'A~ + (1/(2n)) I`
/// with `A~_ji = b_i A_ji`; `sigma = 1/(2n)`.
pub fn svm_dual_problem(
    a: DenseMatrix,
    labels: Vec<f64>,
    lambda: f64,
) -> Result<ProblemOracle, ProblemError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(ProblemError::EmptyData);
    }
    if labels.len() != a.cols() {
        return Err(ProblemError::Dimension { left: a.cols(), right: labels.len() });
    }
    if !(lambda > 0.0) {
        return Err(ProblemError::BadLambda(lambda));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l != 1.0 && l != -1.0 {
            return Err(ProblemError::BadLabel { i, value: l });
        }
    }
    let n = a.cols();
    let nf = n as f64;
    let a_scaled = DenseMatrix::from_fn(a.rows(), n, |j, i| labels[i] * a.get(j, i));
    let gram = a_scaled.gram();
    let smooth = gram.scaled_add(
        2.0 / (lambda * nf * nf),
        &SymMatrix::identity(n),
        1.0 / (2.0 * nf),
    )?;
    Ok(ProblemOracle {
        n,
        kind: ProblemKind::SvmDual { a_scaled, lambda },
        smoothness: SmoothnessMatrix::exact(smooth),
        sigma: 1.0 / (2.0 * nf),
        projection: Some(Projection::NonnegativeOrthant),
        fstar: None,
        xstar: None,
        descriptor: "svm-dual".into(),
    })
}

/// Default SVM regularization: the maximal diagonal element of the dual
/// smoothness matrix evaluated at unit regularization, divided by 10.
pub fn svm_lambda_max_diag_over_10(a: &DenseMatrix, labels: &[f64]) -> f64 {
    let n = a.cols();
    let nf = n as f64;
    let mut max_diag = f64::NEG_INFINITY;
    for i in 0..n {
        let mut col = 0.0;
        for j in 0..a.rows() {
            let v = labels[i] * a.get(j, i);
            col += v * v;
        }
        max_diag = max_diag.max(2.0 * col / (nf * nf) + 1.0 / (2.0 * nf));
    }
    max_diag / 10.0
}

/// `Diag(factor * exact_diag)`, flagged as an estimate.
pub fn estimate_smoothness_diag(
    exact_diag: &[f64],
    factor: f64,
) -> Result<SmoothnessMatrix, ProblemError> {
    if !(factor > 0.0) {
        return Err(ProblemError::BadFactor(factor));
    }
    let diag: Vec<f64> = exact_diag.iter().map(|d| factor * d).collect();
    Ok(SmoothnessMatrix::estimated_diag(diag)?)
}

/// Multiply each row and column of `a` by a uniform `[0, 1)` factor.
/// Row factors are drawn first, then column factors.
pub fn rescale_corrupt(a: &DenseMatrix, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let r: Vec<f64> = (0..a.rows()).map(|_| rng.random::<f64>()).collect();
    let c: Vec<f64> = (0..a.cols()).map(|_| rng.random::<f64>()).collect();
    rescale_with(a, &r, &c)
}

/// Deterministic core of [`rescale_corrupt`]: `A'_ij = r_i c_j A_ij`.
pub fn rescale_with(a: &DenseMatrix, row_scales: &[f64], col_scales: &[f64]) -> DenseMatrix {
    assert_eq!(row_scales.len(), a.rows());
    assert_eq!(col_scales.len(), a.cols());
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| row_scales[i] * col_scales[j] * a.get(i, j))
}

/// Run deterministic accelerated full-gradient descent until the gap
/// certificate `|grad f(y)|^2 / (2 sigma) <= gap_tol`, then store the
/// reference `f*` (shifted down by the certificate so later gaps stay
/// nonnegative) and `x*` on the oracle.
///
/// Requires an exact smoothness matrix, `sigma > 0` and no projection.
pub fn solve_reference(problem: &mut ProblemOracle, gap_tol: f64) -> Result<(), ProblemError> {
    if problem.projection.is_some() {
        return Err(ProblemError::ReferenceUnsupported("an unconstrained problem"));
    }
    if problem.smoothness.is_estimate() {
        return Err(ProblemError::ReferenceUnsupported("an exact smoothness matrix"));
    }
    let sigma = problem.sigma;
    if !(sigma > 0.0) {
        return Err(ProblemError::ReferenceUnsupported("sigma > 0"));
    }
    let n = problem.n;
    let l = problem.smoothness.lmax();
    let sigma_w = sigma / l;
    let theta = ((sigma_w * sigma_w + 4.0 * sigma_w).sqrt() - sigma_w) / 2.0;
    let eta = 1.0 / theta;
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let max_iters = 500_000usize;
    let mut cert = f64::INFINITY;
    for _ in 0..max_iters {
        let x: Vec<f64> = y
            .iter()
            .zip(&z)
            .map(|(&yi, &zi)| (1.0 - theta) * yi + theta * zi)
            .collect();
        let g = problem.grad(&x);
        for i in 0..n {
            y[i] = x[i] - g[i] / l;
            z[i] = (z[i] + eta * sigma_w * x[i] - eta * g[i] / l) / (1.0 + eta * sigma_w);
        }
        cert = sq_norm(&problem.grad(&y)) / (2.0 * sigma);
        if cert <= gap_tol {
            let fstar = problem.value(&y) - cert;
            problem.set_reference(fstar, y);
            return Ok(());
        }
    }
    Err(ProblemError::ReferenceNotConverged { target: gap_tol, iters: max_iters, achieved: cert })
}
