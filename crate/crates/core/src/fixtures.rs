//! Reference baths, system operators and seeded random parametrizations used by
//! tests, benches and the CLI.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bcf::{ExponentialBcf, PositiveParametrization};
use crate::linalg::{c, CMat};

/// Two-term bath that is physical but admits no chain geometry with a single
/// damped end mode: `G = (1, 2)`, `lambda = (1 + i, 2 + i)`.
pub fn chain_counterexample() -> ExponentialBcf {
    ExponentialBcf::new(vec![c(1.0, 1.0), c(2.0, 1.0)], vec![c(1.0, 0.0), c(2.0, 0.0)])
        .expect("fixture is valid")
}

/// Random residues and rates: `Re lambda in [0.3, 2]`, `Im lambda in [-3, 3]`,
/// residue components uniform in `[-1, 1]`.
pub fn random_parametrization<R: Rng>(n: usize, rng: &mut R) -> PositiveParametrization {
    loop {
        let lambdas: Vec<Complex64> = (0..n)
            .map(|_| c(rng.random_range(0.3..2.0), rng.random_range(-3.0..3.0)))
            .collect();
        let residues: Vec<Complex64> = (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let separated = (0..n).all(|i| {
            ((i + 1)..n).all(|j| (lambdas[i] - lambdas[j]).norm() > 0.05)
        });
        if separated {
            if let Ok(p) = PositiveParametrization::new(lambdas, residues) {
                return p;
            }
        }
    }
}

pub fn seeded_parametrization(n: usize, seed: u64) -> PositiveParametrization {
    random_parametrization(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Pure state projector `|psi><psi|`.
pub fn projector(psi: &[Complex64]) -> CMat {
    let v = crate::linalg::CVec::from_column_slice(psi);
    &v * v.adjoint()
}
