//! Minibatch (accelerated) randomized coordinate descent toolkit.
//!
//! The crate is organized around the pipeline needed to configure and run
//! minibatch coordinate descent on a smooth strongly convex problem:
//!
//! * [`linalg`] — dense symmetric matrix primitives (extreme eigenvalues,
//!   Hadamard products, diagonal scalings).
//! * [`sampling`] — sampling laws over coordinate subsets: probability
//!   vectors, probability matrices, and reproducible draws.
//! * [`eso`] — expected-separable-overapproximation (ESO) parameter vectors,
//!   leading rate constants, and step parameters.
//! * [`problems`] — problem oracles: quadratics, synthetic generators,
//!   regularized logistic regression, and the SVM dual with projection.
//! * [`dataio`] — LibSVM text format ingestion.
//! * [`solvers`] — the plain and accelerated minibatch coordinate descent
//!   iteration engines and the weighted potential tracker.
//! * [`harness`] — experiment grids, speedup tables, and CSV trace output.
//!
//! The `acdkit` binary exposes `solve`, `bench`, `eso` and `sampling-check`
//! subcommands on top of these modules.

pub mod dataio;
pub mod eso;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod sampling;
pub mod solvers;

#[cfg(test)]
pub(crate) mod testutil;
