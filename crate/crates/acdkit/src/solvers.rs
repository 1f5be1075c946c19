//! Iteration engines: plain minibatch coordinate descent, accelerated
//! coordinate descent with arbitrary sampling, and the projected variant.
//!
//! Both engines use the direct full-vector recursion. Per iteration the
//! partial derivative of each sampled coordinate is computed exactly once and
//! reused wherever it appears. Runs are strictly sequential; distinct runs
//! own their state and generator and may execute concurrently.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eso::{
    eso_certified, sigma_weighted, step_params, EsoError, EsoParams, StepParams,
};
use crate::problems::ProblemOracle;
use crate::sampling::{draw, SamplingLaw};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("ESO certificate failed for this (law, v): PSD gap {gap:e}")]
    EsoNotCertified { gap: f64 },
    #[error("sigma_w = {0} outside (0, 1]; check sigma and the ESO mode")]
    BadSigmaW(f64),
    #[error("objective became non-finite ({value}) at iteration {iter}")]
    NonFinite { iter: u64, value: f64 },
    #[error("problem has a projection; plain CD/ACD has no proximal variant (use prox ACD)")]
    ProjectionUnsupported,
    #[error("gap-based stopping (eps) requires a reference f* on the oracle")]
    MissingReference,
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error(transparent)]
    Eso(#[from] EsoError),
}

/// When to record trace checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckpointCadence {
    /// Every time this many epochs of coordinate evaluations complete.
    Epochs(f64),
    /// Every this many iterations.
    Iterations(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Budget in epochs (`n` coordinate evaluations each).
    pub budget_epochs: f64,
    /// Optional absolute optimality-gap target; requires `f*`.
    pub eps: Option<f64>,
    pub cadence: CheckpointCadence,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            budget_epochs: 50.0,
            eps: None,
            cadence: CheckpointCadence::Epochs(1.0),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iter: u64,
    pub epochs: f64,
    pub coord_evals: u64,
    pub f: f64,
    /// `f - f*` when the reference optimum is known.
    pub gap: Option<f64>,
    /// Weighted potential, recorded by the accelerated method when the
    /// reference optimum is known.
    pub potential: Option<f64>,
    pub wall_ms: u64,
}

/// One record of the weighted potential
/// `P = (f(y) - f*)/theta^2 + |z - x*|_w^2 / (2 (1 - theta))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialRecord {
    pub pk: f64,
    pub fgap: f64,
    pub znorm: f64,
}

/// Per-run convergence trace plus the metadata needed to audit it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub checkpoints: Vec<Checkpoint>,
    /// Ordered `(key, value)` pairs echoed into CSV headers.
    pub metadata: Vec<(String, String)>,
    /// Set on projected runs, which carry no rate guarantee.
    pub experimental: bool,
    /// Final iterate (`x` for CD, `y` for ACD).
    pub solution: Vec<f64>,
    /// Final `z` sequence of the accelerated method.
    pub z_final: Option<Vec<f64>>,
}

impl SolverTrace {
    /// Epochs at the first checkpoint whose gap is at or below `target`.
    pub fn epochs_to_gap(&self, target: f64) -> Option<f64> {
        self.checkpoints
            .iter()
            .find(|c| c.gap.is_some_and(|g| g <= target))
            .map(|c| c.epochs)
    }

    /// Iteration count at the first checkpoint whose gap is at or below `target`.
    pub fn iters_to_gap(&self, target: f64) -> Option<u64> {
        self.checkpoints
            .iter()
            .find(|c| c.gap.is_some_and(|g| g <= target))
            .map(|c| c.iter)
    }

    pub fn push_metadata(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }
}

/// The weighted potential at state `(y, z)`; requires `f*` and `x*`.
pub fn potential(
    y: &[f64],
    z: &[f64],
    problem: &ProblemOracle,
    step: &StepParams,
) -> Result<PotentialRecord, SolverError> {
    let fstar = problem.fstar().ok_or(SolverError::MissingReference)?;
    let xstar = problem.xstar().ok_or(SolverError::MissingReference)?;
    if y.len() != z.len() || y.len() != xstar.len() {
        return Err(SolverError::Dimension { left: y.len(), right: xstar.len() });
    }
    let fgap = problem.value(y) - fstar;
    let znorm: f64 = z
        .iter()
        .zip(xstar)
        .zip(&step.w)
        .map(|((&zi, &xi), &wi)| wi * (zi - xi) * (zi - xi))
        .sum();
    let theta = step.theta;
    Ok(PotentialRecord {
        pk: fgap / (theta * theta) + znorm / (2.0 * (1.0 - theta)),
        fgap,
        znorm,
    })
}

struct CheckpointTracker {
    cadence: CheckpointCadence,
    next_epoch_mark: f64,
    start: Instant,
}

impl CheckpointTracker {
    fn new(cadence: CheckpointCadence) -> Self {
        let next_epoch_mark = match cadence {
            CheckpointCadence::Epochs(e) => e,
            CheckpointCadence::Iterations(_) => 0.0,
        };
        Self { cadence, next_epoch_mark, start: Instant::now() }
    }

    fn due(&mut self, iter: u64, epochs: f64) -> bool {
        match self.cadence {
            CheckpointCadence::Epochs(e) => {
                if epochs + 1e-12 >= self.next_epoch_mark {
                    while self.next_epoch_mark <= epochs + 1e-12 {
                        self.next_epoch_mark += e;
                    }
                    true
                } else {
                    false
                }
            }
            CheckpointCadence::Iterations(k) => iter % k.max(1) == 0,
        }
    }

    fn wall_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

fn start_point(problem: &ProblemOracle, opts: &RunOptions) -> Result<Vec<f64>, SolverError> {
    match &opts.x0 {
        Some(x0) => {
            if x0.len() != problem.n() {
                return Err(SolverError::Dimension { left: x0.len(), right: problem.n() });
            }
            Ok(x0.clone())
        }
        None => Ok(vec![0.0; problem.n()]),
    }
}

fn certify(problem: &ProblemOracle, law: &SamplingLaw, eso: &EsoParams) -> Result<(), SolverError> {
    // Estimated smoothness matrices carry no certificate to check against.
    if problem.smoothness().is_estimate() {
        return Ok(());
    }
    if !eso_certified(law, problem.smoothness(), &eso.v)? {
        let gap = crate::eso::verify_eso(law, problem.smoothness(), &eso.v)?;
        return Err(SolverError::EsoNotCertified { gap });
    }
    Ok(())
}

fn validate_eps(problem: &ProblemOracle, opts: &RunOptions) -> Result<(), SolverError> {
    if opts.eps.is_some() && problem.fstar().is_none() {
        return Err(SolverError::MissingReference);
    }
    Ok(())
}

fn base_metadata(
    method: &str,
    problem: &ProblemOracle,
    law: &SamplingLaw,
    eso: &EsoParams,
    opts: &RunOptions,
) -> Vec<(String, String)> {
    let p_min = law.p().iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = law.p().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut md: Vec<(String, String)> = vec![
        ("method".into(), method.into()),
        ("problem".into(), problem.descriptor().into()),
        ("n".into(), problem.n().to_string()),
        ("sampling".into(), law.variant().to_string()),
        ("tau".into(), format!("{}", law.tau())),
        ("sum_p".into(), format!("{:.17e}", law.sum_p())),
        ("p_min".into(), format!("{p_min:.17e}")),
        ("p_max".into(), format!("{p_max:.17e}")),
        ("eso_mode".into(), eso.mode.to_string()),
        ("c".into(), format!("{:.17e}", eso.c)),
        ("v_min".into(), format!("{:.17e}", eso.v_min())),
        ("v_max".into(), format!("{:.17e}", eso.v_max())),
        ("budget_epochs".into(), format!("{}", opts.budget_epochs)),
        (
            "eps".into(),
            opts.eps.map_or_else(|| "NA".into(), |e| format!("{e:.17e}")),
        ),
        (
            "smoothness".into(),
            if problem.smoothness().is_estimate() { "estimated".into() } else { "exact".into() },
        ),
    ];
    if let Some(delta) = law.delta() {
        md.push(("delta".into(), format!("{delta:.17e}")));
    }
    md
}

/// Plain minibatch coordinate descent: for each drawn subset `S`, update
/// `x_i <- x_i - grad_i f(x) / v_i` for `i in S`, with the partial
/// derivatives all evaluated at the pre-update point.
pub fn cd_run(
    problem: &ProblemOracle,
    law: &SamplingLaw,
    eso: &EsoParams,
    opts: &RunOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SolverTrace, SolverError> {
    if problem.projection().is_some() {
        return Err(SolverError::ProjectionUnsupported);
    }
    certify(problem, law, eso)?;
    validate_eps(problem, opts)?;
    let n = problem.n();
    let nf = n as f64;
    let mut x = start_point(problem, opts)?;
    let mut trace = SolverTrace {
        metadata: base_metadata("cd", problem, law, eso, opts),
        ..Default::default()
    };
    let mut tracker = CheckpointTracker::new(opts.cadence);
    let budget_evals = (opts.budget_epochs * nf).ceil() as u64;
    let max_iters = budget_evals.saturating_mul(100).max(1_000_000);

    let record = |trace: &mut SolverTrace,
                  tracker: &CheckpointTracker,
                  iter: u64,
                  coord_evals: u64,
                  f: f64| {
        let gap = problem.fstar().map(|fs| f - fs);
        trace.checkpoints.push(Checkpoint {
            iter,
            epochs: coord_evals as f64 / nf,
            coord_evals,
            f,
            gap,
            potential: None,
            wall_ms: tracker.wall_ms(),
        });
        gap
    };

    let mut iter: u64 = 0;
    let mut coord_evals: u64 = 0;
    let f0 = problem.value(&x);
    let gap0 = record(&mut trace, &tracker, 0, 0, f0);
    let mut done = matches!((gap0, opts.eps), (Some(g), Some(eps)) if g <= eps);

    while !done && coord_evals < budget_evals && iter < max_iters {
        let subset = draw(law, rng);
        let grads = problem.grad_coords(&subset, &x);
        for (&i, &gi) in subset.iter().zip(&grads) {
            x[i] -= gi / eso.v[i];
        }
        coord_evals += subset.len() as u64;
        iter += 1;
        let budget_done = coord_evals >= budget_evals || iter >= max_iters;
        if tracker.due(iter, coord_evals as f64 / nf) || budget_done {
            let f = problem.value(&x);
            if !f.is_finite() {
                return Err(SolverError::NonFinite { iter, value: f });
            }
            let gap = record(&mut trace, &tracker, iter, coord_evals, f);
            if let (Some(g), Some(eps)) = (gap, opts.eps) {
                if g <= eps {
                    done = true;
                }
            }
        }
    }
    trace.solution = x;
    Ok(trace)
}

/// Accelerated coordinate descent with arbitrary sampling.
pub fn acd_run(
    problem: &ProblemOracle,
    law: &SamplingLaw,
    eso: &EsoParams,
    sigma: f64,
    opts: &RunOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SolverTrace, SolverError> {
    acd_impl(problem, law, eso, sigma, opts, rng, false)
}

/// Projected accelerated coordinate descent: identical to [`acd_run`] with
/// the problem's projection applied to `y` and `z` after each update. The
/// resulting trace is flagged experimental (there is no rate guarantee for
/// the projected steps). Without a projection it reduces to [`acd_run`].
pub fn prox_acd_run(
    problem: &ProblemOracle,
    law: &SamplingLaw,
    eso: &EsoParams,
    sigma: f64,
    opts: &RunOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SolverTrace, SolverError> {
    acd_impl(problem, law, eso, sigma, opts, rng, true)
}

fn acd_impl(
    problem: &ProblemOracle,
    law: &SamplingLaw,
    eso: &EsoParams,
    sigma: f64,
    opts: &RunOptions,
    rng: &mut ChaCha8Rng,
    apply_prox: bool,
) -> Result<SolverTrace, SolverError> {
    if problem.projection().is_some() && !apply_prox {
        return Err(SolverError::ProjectionUnsupported);
    }
    certify(problem, law, eso)?;
    validate_eps(problem, opts)?;
    let n = problem.n();
    let nf = n as f64;
    let sigma_w = sigma_weighted(sigma, law, &eso.v);
    if !(sigma_w > 0.0 && sigma_w <= 1.0) {
        return Err(SolverError::BadSigmaW(sigma_w));
    }
    let step = step_params(sigma_w, law, eso)?;
    let theta = step.theta;
    let eta = step.eta;
    let projection = if apply_prox { problem.projection() } else { None };
    let track_potential = problem.fstar().is_some() && problem.xstar().is_some();

    let mut y = start_point(problem, opts)?;
    let mut z = y.clone();
    let mut trace = SolverTrace {
        metadata: base_metadata("acd", problem, law, eso, opts),
        experimental: projection.is_some(),
        ..Default::default()
    };
    trace.push_metadata("sigma", format!("{sigma:.17e}"));
    trace.push_metadata("sigma_w", format!("{sigma_w:.17e}"));
    trace.push_metadata("theta", format!("{theta:.17e}"));
    if projection.is_some() {
        trace.push_metadata("experimental", "prox");
    }
    let mut tracker = CheckpointTracker::new(opts.cadence);
    let budget_evals = (opts.budget_epochs * nf).ceil() as u64;
    let max_iters = budget_evals.saturating_mul(100).max(1_000_000);

    let record = |trace: &mut SolverTrace,
                  tracker: &CheckpointTracker,
                  iter: u64,
                  coord_evals: u64,
                  y: &[f64],
                  z: &[f64]|
     -> Result<Option<f64>, SolverError> {
        let f = problem.value(y);
        if !f.is_finite() {
            return Err(SolverError::NonFinite { iter, value: f });
        }
        let gap = problem.fstar().map(|fs| f - fs);
        let pk = if track_potential {
            Some(potential(y, z, problem, &step)?.pk)
        } else {
            None
        };
        trace.checkpoints.push(Checkpoint {
            iter,
            epochs: coord_evals as f64 / nf,
            coord_evals,
            f,
            gap,
            potential: pk,
            wall_ms: tracker.wall_ms(),
        });
        Ok(gap)
    };

    let mut iter: u64 = 0;
    let mut coord_evals: u64 = 0;
    let gap0 = record(&mut trace, &tracker, 0, 0, &y, &z)?;
    let mut done = matches!((gap0, opts.eps), (Some(g), Some(eps)) if g <= eps);

    let mix = 1.0 / (1.0 + eta * sigma_w);
    while !done && coord_evals < budget_evals && iter < max_iters {
        // x = (1 - theta) y + theta z
        let x: Vec<f64> = y
            .iter()
            .zip(&z)
            .map(|(&yi, &zi)| (1.0 - theta) * yi + theta * zi)
            .collect();
        let subset = draw(law, rng);
        let grads = problem.grad_coords(&subset, &x);
        // y <- x - sum_{i in S} grad_i / v_i e_i
        y.copy_from_slice(&x);
        for (&i, &gi) in subset.iter().zip(&grads) {
            y[i] -= gi / eso.v[i];
        }
        // z <- (z + eta sigma_w x - sum_{i in S} (eta p_i / v_i) grad_i e_i) / (1 + eta sigma_w);
        // the z-coefficient eta p_i / v_i is eta / (p_i w_i) with w_i = v_i / p_i^2.
        for i in 0..n {
            z[i] = mix * (z[i] + eta * sigma_w * x[i]);
        }
        for (&i, &gi) in subset.iter().zip(&grads) {
            z[i] -= mix * eta * law.p_of(i) * gi / eso.v[i];
        }
        if let Some(proj) = projection {
            proj.apply(&mut y);
            proj.apply(&mut z);
        }
        coord_evals += subset.len() as u64;
        iter += 1;
        let budget_done = coord_evals >= budget_evals || iter >= max_iters;
        if tracker.due(iter, coord_evals as f64 / nf) || budget_done {
            let gap = record(&mut trace, &tracker, iter, coord_evals, &y, &z)?;
            if let (Some(g), Some(eps)) = (gap, opts.eps) {
                if g <= eps {
                    done = true;
                }
            }
        }
    }
    trace.solution = y;
    trace.z_final = Some(z);
    Ok(trace)
}
