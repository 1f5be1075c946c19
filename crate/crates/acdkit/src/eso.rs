//! Expected separable overapproximation (ESO) calculus.
//!
//! An ESO vector `v` certifies `P o M <= Diag(p o v)` in the PSD order, which
//! is what licenses the per-coordinate stepsizes `1/v_i`. Two general
//! constructions are exposed and deliberately kept distinct:
//!
//! * [`c_accelerated`] (for the accelerated method): `c = lambda_max(P' o M')`
//!   with `P' = D^{-1/2} P D^{-1/2}`, `M' = D^{-1} M D^{-1}`, `v = c p^2`;
//! * [`c_plain`] (for the plain method): `c = lambda_max(P'' o M)` with
//!   `P'' = D^{-1} P D^{-1}`, `v = c p`.
//!
//! Inferring the mode from context is a recipe for silent `v`-vector mixups,
//! so every [`EsoParams`] carries its [`EsoMode`] tag.

use thiserror::Error;

use crate::linalg::{
    hadamard, lambda_min, DiagWeights, LinalgError, SmoothnessMatrix, SymMatrix, EIGEN_TOL,
};
use crate::sampling::{build_law, probability_matrix, SamplingError, SamplingLaw, SamplingVariant};

/// Relative slack on the PSD gap accepted by ESO certification:
/// `lambda_min(Diag(p o v) - P o M) >= -ESO_GAP_REL_TOL * max_i p_i v_i`.
pub const ESO_GAP_REL_TOL: f64 = 1e-9;

/// Floor applied to tau-nice ESO entries on degenerate zero-diagonal
/// coordinates, as a fraction of `L`, to keep stepsizes finite.
const V_FLOOR_REL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum EsoError {
    #[error("tau={tau} out of range [1, {n}]")]
    TauOutOfRange { tau: f64, n: usize },
    #[error("dimension mismatch: law has n={law_n}, matrix has n={mat_n}")]
    Dimension { law_n: usize, mat_n: usize },
    #[error("sigma_w={0} outside (0, 1]")]
    SigmaWOutOfRange(f64),
    #[error("smoothness matrix has no positive curvature (L = {0})")]
    ZeroSmoothness(f64),
    #[error("no closed form for variant {0}")]
    NoClosedForm(SamplingVariant),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How an ESO vector was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsoMode {
    /// `v = c p^2` with `c = lambda_max(P' o M')`.
    AcceleratedGeneral,
    /// `v = c p` with `c = lambda_max(P'' o M)`.
    PlainGeneral,
    /// Closed form for the tau-nice sampling, plain method.
    ClosedFormC1,
    /// Closed form for the independent uniform sampling, plain method.
    ClosedFormC2,
    /// Closed form for the solved independent sampling, plain method.
    ClosedFormC3,
    /// `v_i = (1 - beta) M_ii + beta L` for the tau-nice sampling.
    TauNiceDiagonal,
}

impl EsoMode {
    pub fn name(self) -> &'static str {
        match self {
            EsoMode::AcceleratedGeneral => "accelerated",
            EsoMode::PlainGeneral => "plain",
            EsoMode::ClosedFormC1 => "closed-c1",
            EsoMode::ClosedFormC2 => "closed-c2",
            EsoMode::ClosedFormC3 => "closed-c3",
            EsoMode::TauNiceDiagonal => "tau-nice",
        }
    }
}

impl std::fmt::Display for EsoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An ESO parameter vector together with the leading constant that produced
/// it and the derivation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EsoParams {
    pub v: Vec<f64>,
    pub c: f64,
    pub mode: EsoMode,
}

impl EsoParams {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn v_min(&self) -> f64 {
        self.v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Step parameters of the accelerated method for a given weighted
/// strong-convexity modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub sigma_w: f64,
    pub theta: f64,
    pub eta: f64,
    /// Weighted-norm weights `w_i = v_i / p_i^2`.
    pub w: Vec<f64>,
}

fn check_dims(law: &SamplingLaw, m: &SmoothnessMatrix) -> Result<(), EsoError> {
    if law.n() != m.n() {
        return Err(EsoError::Dimension { law_n: law.n(), mat_n: m.n() });
    }
    Ok(())
}

/// ESO vector for the tau-nice sampling: `v_i = (1 - beta) M_ii + beta L`
/// with `beta = (tau - 1)/(n - 1)`. The `n = 1` case degenerates to
/// `v = [M_11]`.
pub fn eso_tau_nice(m: &SmoothnessMatrix, tau: usize) -> Result<EsoParams, EsoError> {
    let n = m.n();
    if tau < 1 || tau > n {
        return Err(EsoError::TauOutOfRange { tau: tau as f64, n });
    }
    let l = m.lmax();
    if !(l > 0.0) {
        return Err(EsoError::ZeroSmoothness(l));
    }
    let v: Vec<f64> = if n == 1 {
        vec![m.li(0)]
    } else {
        let beta = (tau as f64 - 1.0) / (n as f64 - 1.0);
        m.diag()
            .iter()
            .map(|&li| ((1.0 - beta) * li + beta * l).max(V_FLOOR_REL * l))
            .collect()
    };
    let p = tau as f64 / n as f64;
    let c = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / (p * p);
    Ok(EsoParams { v, c, mode: EsoMode::TauNiceDiagonal })
}

/// Leading constant and ESO vector for the accelerated method:
/// `c = lambda_max(P' o M')`, `v = c p^2`.
pub fn c_accelerated(law: &SamplingLaw, m: &SmoothnessMatrix) -> Result<EsoParams, EsoError> {
    check_dims(law, m)?;
    let p = law.p();
    let d_inv_sqrt = DiagWeights::new(p.iter().map(|&x| 1.0 / x.sqrt()).collect())?;
    let d_inv = DiagWeights::new(p.iter().map(|&x| 1.0 / x).collect())?;
    let p_prime = probability_matrix(law).as_sym().diag_congruence(&d_inv_sqrt)?;
    let m_prime = m.matrix().diag_congruence(&d_inv)?;
    let c = crate::linalg::lambda_max(&hadamard(&p_prime, &m_prime)?, EIGEN_TOL)?;
    if !(c > 0.0) {
        return Err(EsoError::ZeroSmoothness(c));
    }
    let v = p.iter().map(|&x| c * x * x).collect();
    Ok(EsoParams { v, c, mode: EsoMode::AcceleratedGeneral })
}

/// Leading constant and ESO vector for the plain method:
/// `c = lambda_max(P'' o M)`, `v = c p`.
pub fn c_plain(law: &SamplingLaw, m: &SmoothnessMatrix) -> Result<EsoParams, EsoError> {
    check_dims(law, m)?;
    let p = law.p();
    let d_inv = DiagWeights::new(p.iter().map(|&x| 1.0 / x).collect())?;
    let p_second = probability_matrix(law).as_sym().diag_congruence(&d_inv)?;
    let c = crate::linalg::lambda_max(&hadamard(&p_second, m.matrix())?, EIGEN_TOL)?;
    if !(c > 0.0) {
        return Err(EsoError::ZeroSmoothness(c));
    }
    let v = p.iter().map(|&x| c * x).collect();
    Ok(EsoParams { v, c, mode: EsoMode::PlainGeneral })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    /// tau-nice: `c1 = (n/tau) lambda_max((tau-1)/(n-1) M + (n-tau)/(n-1) Diag(M))`.
    C1,
    /// independent uniform: `c2 = lambda_max(M + (n-tau)/tau Diag(M))`.
    C2,
    /// solved independent: `c3 = lambda_max(M) + delta`.
    C3,
}

/// Closed-form leading constants for the plain method.
pub fn closed_form_c(m: &SmoothnessMatrix, tau: f64, which: ClosedForm) -> Result<f64, EsoError> {
    let n = m.n();
    if !(tau >= 1.0 && tau <= n as f64) {
        return Err(EsoError::TauOutOfRange { tau, n });
    }
    if n == 1 {
        return Ok(m.li(0));
    }
    let nf = n as f64;
    let diag = SymMatrix::from_diag(m.diag())?;
    match which {
        ClosedForm::C1 => {
            let inner = m
                .matrix()
                .scaled_add((tau - 1.0) / (nf - 1.0), &diag, (nf - tau) / (nf - 1.0))?;
            Ok(nf / tau * crate::linalg::lambda_max(&inner, EIGEN_TOL)?)
        }
        ClosedForm::C2 => {
            let inner = m.matrix().scaled_add(1.0, &diag, (nf - tau) / tau)?;
            Ok(crate::linalg::lambda_max(&inner, EIGEN_TOL)?)
        }
        ClosedForm::C3 => {
            let law = build_law(SamplingVariant::IndepCdSolved, m, tau)?;
            let delta = law.delta().expect("solved law carries delta");
            Ok(m.lmax() + delta)
        }
    }
}

/// Lower bound on the dominant complexity term: `sum_i sqrt(M_ii) / (tau sqrt(sigma))`.
pub fn rate_lower_bound(m: &SmoothnessMatrix, tau: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0 && tau >= 1.0);
    m.diag().iter().map(|&d| d.sqrt()).sum::<f64>() / (tau * sigma.sqrt())
}

/// Replace `v` by the dominating vector of the form `c p^2` with
/// `c = max_j v_j / p_j^2`; the complexity constant is unchanged.
pub fn canonicalize_eso(law: &SamplingLaw, v: &[f64]) -> EsoParams {
    assert_eq!(law.n(), v.len(), "dimension mismatch");
    let c = v
        .iter()
        .zip(law.p())
        .map(|(&vi, &pi)| vi / (pi * pi))
        .fold(f64::NEG_INFINITY, f64::max);
    let v_new = law.p().iter().map(|&pi| c * pi * pi).collect();
    EsoParams { v: v_new, c, mode: EsoMode::AcceleratedGeneral }
}

/// Weighted strong-convexity modulus `sigma_w = min_i p_i^2 sigma / v_i` for
/// weights `w_i = v_i / p_i^2`.
pub fn sigma_weighted(sigma: f64, law: &SamplingLaw, v: &[f64]) -> f64 {
    assert_eq!(law.n(), v.len(), "dimension mismatch");
    debug_assert!(sigma > 0.0);
    law.p()
        .iter()
        .zip(v)
        .map(|(&pi, &vi)| pi * pi * sigma / vi)
        .fold(f64::INFINITY, f64::min)
}

/// Step parameters: `theta = (sqrt(sigma_w^2 + 4 sigma_w) - sigma_w)/2`,
/// `eta = 1/theta`, weights `w_i = v_i / p_i^2`.
pub fn step_params(sigma_w: f64, law: &SamplingLaw, eso: &EsoParams) -> Result<StepParams, EsoError> {
    if !(sigma_w > 0.0 && sigma_w <= 1.0) {
        return Err(EsoError::SigmaWOutOfRange(sigma_w));
    }
    let theta = ((sigma_w * sigma_w + 4.0 * sigma_w).sqrt() - sigma_w) / 2.0;
    let w = eso
        .v
        .iter()
        .zip(law.p())
        .map(|(&vi, &pi)| vi / (pi * pi))
        .collect();
    Ok(StepParams { sigma_w, theta, eta: 1.0 / theta, w })
}

/// The PSD gap `lambda_min(Diag(p o v) - P o M)`. A value at or above
/// `-ESO_GAP_REL_TOL * max_i p_i v_i` certifies the ESO inequality.
pub fn verify_eso(law: &SamplingLaw, m: &SmoothnessMatrix, v: &[f64]) -> Result<f64, EsoError> {
    check_dims(law, m)?;
    assert_eq!(law.n(), v.len(), "dimension mismatch");
    let pv: Vec<f64> = law.p().iter().zip(v).map(|(&pi, &vi)| pi * vi).collect();
    let lhs = hadamard(probability_matrix(law).as_sym(), m.matrix())?;
    let gap_matrix = SymMatrix::from_diag(&pv)?.scaled_add(1.0, &lhs, -1.0)?;
    Ok(lambda_min(&gap_matrix, EIGEN_TOL)?)
}

/// Whether `verify_eso`'s gap certifies the ESO inequality for this `(law, v)`.
pub fn eso_certified(law: &SamplingLaw, m: &SmoothnessMatrix, v: &[f64]) -> Result<bool, EsoError> {
    let gap = verify_eso(law, m, v)?;
    let scale = law
        .p()
        .iter()
        .zip(v)
        .map(|(&pi, &vi)| pi * vi)
        .fold(0.0_f64, f64::max);
    Ok(gap >= -ESO_GAP_REL_TOL * scale)
}
