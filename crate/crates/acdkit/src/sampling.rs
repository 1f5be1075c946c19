//! Sampling laws over coordinate subsets.
//!
//! A [`SamplingLaw`] is a fully resolved description of a random set-valued
//! sampling: the variant, the probability vector `p` with `p_i = P(i in S)`,
//! the expected minibatch size `tau = sum_i p_i`, and (for the solved
//! importance variants) the scalar `delta` produced by the root solve.
//!
//! All randomness flows through a caller-supplied [`rand_chacha::ChaCha8Rng`];
//! the draw stream is fully determined by `(seed, draw counter)`, with a fixed
//! variate budget per draw: `tau` uniforms for tau-nice, one uniform per
//! coordinate (in index order) for independent variants, one for serial, and
//! none for full.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{SmoothnessMatrix, SymMatrix};

/// Relative tolerance of the `sum_i p_i(delta) = tau` root solves.
pub const DELTA_SOLVE_TOL: f64 = 1e-12;

/// Relative tolerance on `sum_i p_i == tau` at law construction.
pub const SUM_P_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("expected minibatch size tau={tau} out of range [1, {n}]")]
    TauOutOfRange { tau: f64, n: usize },
    #[error("tau-nice sampling needs an integer tau, got {0}")]
    TauNotInteger(f64),
    #[error("serial sampling has expected size 1, got tau={0}")]
    SerialTauNotOne(f64),
    #[error("importance sampling needs strictly positive diagonal entries (M[{i}][{i}] = {value})")]
    ZeroDiagonal { i: usize, value: f64 },
    #[error("probability vector invalid at {i}: p = {value} not in (0, 1]")]
    ImproperProbability { i: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected {expected}")]
    BadProbabilitySum { sum: f64, expected: f64 },
    #[error("root solve for delta did not converge (residual {residual:e})")]
    DeltaSolve { residual: f64 },
}

/// The sampling variants supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingVariant {
    /// Uniform over all subsets of cardinality `tau`.
    TauNice,
    /// Independent inclusion with `p_i = tau / n`.
    IndepUniform,
    /// Independent inclusion with `p_i = tau sqrt(M_ii) / sum_j sqrt(M_jj)`,
    /// entries above 1 clipped to 1.
    IndepSqrtImportance,
    /// Independent inclusion with `p_i^2 / M_ii` proportional to `1 - p_i`;
    /// the importance law tuned for the accelerated method.
    IndepAcdSolved,
    /// Independent inclusion with `p_i = M_ii / (delta + M_ii)`; the
    /// importance law tuned for the plain method.
    IndepCdSolved,
    /// Exactly one coordinate per draw, picked with probability `p_i`.
    Serial,
    /// The whole coordinate set every draw.
    Full,
}

impl SamplingVariant {
    pub fn is_independent(self) -> bool {
        matches!(
            self,
            SamplingVariant::IndepUniform
                | SamplingVariant::IndepSqrtImportance
                | SamplingVariant::IndepAcdSolved
                | SamplingVariant::IndepCdSolved
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplingVariant::TauNice => "tau-nice",
            SamplingVariant::IndepUniform => "indep-uniform",
            SamplingVariant::IndepSqrtImportance => "sqrt-importance",
            SamplingVariant::IndepAcdSolved => "acd-solved",
            SamplingVariant::IndepCdSolved => "cd-solved",
            SamplingVariant::Serial => "serial",
            SamplingVariant::Full => "full",
        }
    }
}

impl std::fmt::Display for SamplingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplingVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau-nice" => Ok(SamplingVariant::TauNice),
            "indep-uniform" => Ok(SamplingVariant::IndepUniform),
            "sqrt-importance" => Ok(SamplingVariant::IndepSqrtImportance),
            "acd-solved" => Ok(SamplingVariant::IndepAcdSolved),
            "cd-solved" => Ok(SamplingVariant::IndepCdSolved),
            "serial" => Ok(SamplingVariant::Serial),
            "full" => Ok(SamplingVariant::Full),
            other => Err(format!(
                "unknown sampling variant {other:?} (expected tau-nice, indep-uniform, \
                 sqrt-importance, acd-solved, cd-solved, serial or full)"
            )),
        }
    }
}

/// A fully resolved sampling law. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingLaw {
    variant: SamplingVariant,
    n: usize,
    tau: f64,
    p: Vec<f64>,
    delta: Option<f64>,
}

impl SamplingLaw {
    pub fn variant(&self) -> SamplingVariant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The requested expected minibatch size. After clipping,
    /// `sqrt-importance` laws may have `sum_p() < tau()`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn p_of(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// `E|S| = sum_i p_i`.
    pub fn sum_p(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn is_independent(&self) -> bool {
        self.variant.is_independent()
    }

    /// The full sampling: `S = [n]` with probability 1.
    pub fn full(n: usize) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::TauOutOfRange { tau: 0.0, n });
        }
        Ok(Self {
            variant: SamplingVariant::Full,
            n,
            tau: n as f64,
            p: vec![1.0; n],
            delta: None,
        })
    }

    /// A serial law with an explicit probability vector summing to 1.
    pub fn serial_from_probs(p: Vec<f64>) -> Result<Self, SamplingError> {
        check_proper(&p)?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_P_TOL {
            return Err(SamplingError::BadProbabilitySum { sum, expected: 1.0 });
        }
        Ok(Self { variant: SamplingVariant::Serial, n: p.len(), tau: 1.0, p, delta: None })
    }
}

fn check_proper(p: &[f64]) -> Result<(), SamplingError> {
    for (i, &v) in p.iter().enumerate() {
        if !(v.is_finite() && v > 0.0 && v <= 1.0) {
            return Err(SamplingError::ImproperProbability { i, value: v });
        }
    }
    Ok(())
}

fn check_positive_diag(diag: &[f64]) -> Result<(), SamplingError> {
    for (i, &d) in diag.iter().enumerate() {
        if !(d > 0.0) {
            return Err(SamplingError::ZeroDiagonal { i, value: d });
        }
    }
    Ok(())
}

/// Construct a sampling law of the given variant for smoothness matrix `m`
/// and expected minibatch size `tau`.
///
/// For [`SamplingVariant::Full`] the expected size is `n` regardless of the
/// passed `tau`; for [`SamplingVariant::Serial`] it must be 1 and the
/// probabilities are proportional to `sqrt(M_ii)`.
pub fn build_law(
    variant: SamplingVariant,
    m: &SmoothnessMatrix,
    tau: f64,
) -> Result<SamplingLaw, SamplingError> {
    let n = m.n();
    if variant == SamplingVariant::Full {
        return SamplingLaw::full(n);
    }
    if !(tau >= 1.0 && tau <= n as f64) {
        return Err(SamplingError::TauOutOfRange { tau, n });
    }
    let diag = m.diag();
    match variant {
        SamplingVariant::TauNice => {
            if tau.fract() != 0.0 {
                return Err(SamplingError::TauNotInteger(tau));
            }
            let p = vec![tau / n as f64; n];
            Ok(SamplingLaw { variant, n, tau, p, delta: None })
        }
        SamplingVariant::IndepUniform => {
            let p = vec![tau / n as f64; n];
            Ok(SamplingLaw { variant, n, tau, p, delta: None })
        }
        SamplingVariant::IndepSqrtImportance => {
            check_positive_diag(diag)?;
            let sqrt_sum: f64 = diag.iter().map(|d| d.sqrt()).sum();
            let raw: Vec<f64> = diag.iter().map(|d| tau * d.sqrt() / sqrt_sum).collect();
            let raw_sum: f64 = raw.iter().sum();
            if (raw_sum - tau).abs() > SUM_P_TOL * tau {
                return Err(SamplingError::BadProbabilitySum { sum: raw_sum, expected: tau });
            }
            // Probabilities above 1 are clipped to 1 and the rest are left
            // unchanged, so E|S| may fall below tau.
            let p: Vec<f64> = raw.into_iter().map(|v| v.min(1.0)).collect();
            check_proper(&p)?;
            Ok(SamplingLaw { variant, n, tau, p, delta: None })
        }
        SamplingVariant::IndepAcdSolved => {
            check_positive_diag(diag)?;
            let p_of = |d: f64, delta: f64| 2.0 * d / ((d * d + 2.0 * d * delta).sqrt() + d);
            let (p, delta) = solve_independent(diag, tau, p_of)?;
            Ok(SamplingLaw { variant, n, tau, p, delta: Some(delta) })
        }
        SamplingVariant::IndepCdSolved => {
            check_positive_diag(diag)?;
            let p_of = |d: f64, delta: f64| d / (delta + d);
            let (p, delta) = solve_independent(diag, tau, p_of)?;
            Ok(SamplingLaw { variant, n, tau, p, delta: Some(delta) })
        }
        SamplingVariant::Serial => {
            if tau != 1.0 {
                return Err(SamplingError::SerialTauNotOne(tau));
            }
            check_positive_diag(diag)?;
            let sqrt_sum: f64 = diag.iter().map(|d| d.sqrt()).sum();
            let p: Vec<f64> = diag.iter().map(|d| d.sqrt() / sqrt_sum).collect();
            check_proper(&p)?;
            Ok(SamplingLaw { variant, n, tau: 1.0, p, delta: None })
        }
        SamplingVariant::Full => unreachable!("handled above"),
    }
}

/// Bisection on delta for independent laws with `p_i = p_of(M_ii, delta)`.
///
/// `sum_i p_i(delta)` is continuous and strictly decreasing with
/// `sum_i p_i(0) = n >= tau`, so a sign-changing bracket always exists;
/// the initial upper bound `Trace(M)/tau` is doubled until it crosses.
fn solve_independent(
    diag: &[f64],
    tau: f64,
    p_of: impl Fn(f64, f64) -> f64,
) -> Result<(Vec<f64>, f64), SamplingError> {
    let n = diag.len();
    let sum_p = |delta: f64| -> f64 { diag.iter().map(|&d| p_of(d, delta)).sum() };
    if tau >= n as f64 {
        return Ok((vec![1.0; n], 0.0));
    }
    let trace: f64 = diag.iter().sum();
    let mut hi = trace / tau;
    let mut doublings = 0;
    while sum_p(hi) > tau {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(SamplingError::DeltaSolve { residual: sum_p(hi) - tau });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = sum_p(mid);
        if (s - tau).abs() <= DELTA_SOLVE_TOL * tau {
            lo = mid;
            hi = mid;
            break;
        }
        if s > tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let delta = 0.5 * (lo + hi);
    let residual = (sum_p(delta) - tau).abs() / tau;
    if residual > 1e-9 {
        return Err(SamplingError::DeltaSolve { residual });
    }
    let p: Vec<f64> = diag.iter().map(|&d| p_of(d, delta).min(1.0)).collect();
    check_proper(&p)?;
    Ok((p, delta))
}

/// The probability matrix `P_ij = P(i in S and j in S)` of a sampling law.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    mat: SymMatrix,
}

impl ProbabilityMatrix {
    pub fn as_sym(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn into_sym(self) -> SymMatrix {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }
}

/// The analytic probability matrix of a law.
///
/// tau-nice: `(tau/n) ((1-beta) I + beta E)` with `beta = (tau-1)/(n-1)`
/// (the `n = 1` case degenerates to `[1]`); independent variants:
/// `p p^T + Diag(p) - Diag(p)^2`; serial: `Diag(p)`; full: all ones.
pub fn probability_matrix(law: &SamplingLaw) -> ProbabilityMatrix {
    let n = law.n();
    let p = law.p();
    let mat = match law.variant() {
        SamplingVariant::Full => SymMatrix::ones(n),
        SamplingVariant::Serial => SymMatrix::from_diag(p).expect("proper law"),
        SamplingVariant::TauNice => {
            if n == 1 {
                SymMatrix::ones(1)
            } else {
                let tau = law.tau();
                let nf = n as f64;
                let beta = (tau - 1.0) / (nf - 1.0);
                let on_diag = tau / nf;
                let off_diag = (tau / nf) * beta;
                SymMatrix::from_fn_sym(n, |i, j| if i == j { on_diag } else { off_diag })
                    .expect("n >= 1")
            }
        }
        SamplingVariant::IndepUniform
        | SamplingVariant::IndepSqrtImportance
        | SamplingVariant::IndepAcdSolved
        | SamplingVariant::IndepCdSolved => {
            SymMatrix::from_fn_sym(n, |i, j| if i == j { p[i] } else { p[i] * p[j] })
                .expect("n >= 1")
        }
    };
    ProbabilityMatrix { mat }
}

/// Draw one coordinate subset. Returns sorted indices; independent draws may
/// be empty.
pub fn draw(law: &SamplingLaw, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = law.n();
    match law.variant() {
        SamplingVariant::Full => (0..n).collect(),
        SamplingVariant::Serial => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &pi) in law.p().iter().enumerate() {
                acc += pi;
                if u < acc {
                    return vec![i];
                }
            }
            vec![n - 1]
        }
        SamplingVariant::TauNice => {
            // Partial Fisher-Yates consuming exactly tau uniforms.
            let tau = law.tau() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            for k in 0..tau {
                let u: f64 = rng.random();
                let j = k + ((u * (n - k) as f64) as usize).min(n - k - 1);
                idx.swap(k, j);
            }
            let mut out = idx[..tau].to_vec();
            out.sort_unstable();
            out
        }
        _ => {
            // Independent variants: one uniform per coordinate, index order.
            let mut out = Vec::new();
            for (i, &pi) in law.p().iter().enumerate() {
                let u: f64 = rng.random();
                if u < pi {
                    out.push(i);
                }
            }
            out
        }
    }
}

/// Frequency estimate of the probability matrix over `draws` samples.
pub fn empirical_probability_matrix(
    law: &SamplingLaw,
    rng: &mut ChaCha8Rng,
    draws: usize,
) -> ProbabilityMatrix {
    assert!(draws >= 1, "draws must be at least 1");
    let n = law.n();
    let mut counts = vec![0u64; n * n];
    for _ in 0..draws {
        let s = draw(law, rng);
        for (a, &i) in s.iter().enumerate() {
            counts[i * n + i] += 1;
            for &j in &s[a + 1..] {
                counts[i * n + j] += 1;
                counts[j * n + i] += 1;
            }
        }
    }
    let scale = 1.0 / draws as f64;
    let mat = SymMatrix::from_fn_sym(n, |i, j| counts[i * n + j] as f64 * scale)
        .expect("n >= 1");
    ProbabilityMatrix { mat }
}
