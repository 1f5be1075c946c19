//! Shared helpers for the unit-test suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{DenseMatrix, SmoothnessMatrix, SymMatrix};

/// Random SPD matrix with unit-order diagonal: `G^T G / n + 0.1 I`.
pub(crate) fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g.gram()
        .scaled_add(1.0 / n as f64, &SymMatrix::identity(n), 0.1)
        .unwrap()
}

pub(crate) fn random_spd_smoothness(n: usize, rng: &mut ChaCha8Rng) -> SmoothnessMatrix {
    SmoothnessMatrix::exact(random_spd(n, rng))
}

/// Exact smoothness wrapper around a diagonal matrix.
pub(crate) fn smoothness(diag: &[f64]) -> SmoothnessMatrix {
    SmoothnessMatrix::exact(SymMatrix::from_diag(diag).unwrap())
}
