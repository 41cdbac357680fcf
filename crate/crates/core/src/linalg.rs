//! Small dense complex linear-algebra helpers shared by the builders and engines.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn diag(values: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(values))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Factor `L` with `L L^H = m` for a Hermitian positive semi-definite `m`.
/// Eigenvalues below zero from rounding are clamped.
pub fn psd_factor(m: &CMat) -> CMat {
    let (values, w) = hermitian_eigen(m);
    let mut f = w;
    for (j, v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Eigenvalues of a general complex matrix from its complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let (_, t) = Schur::new(m.clone()).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Solves `M P + P M^H = C` by Bartels-Stewart on the complex Schur form of `M`.
///
/// Requires every eigenvalue of `M` to have a strictly positive real part.
pub fn solve_lyapunov(m: &CMat, rhs: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if m.ncols() != n || rhs.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "lyapunov: M is {:?}, C is {:?}",
            m.shape(),
            rhs.shape()
        )));
    }
    let (q, t) = Schur::new(m.clone()).unpack();
    if let Some(re) = (0..n).map(|i| t[(i, i)].re).find(|re| *re <= 0.0) {
        return Err(Error::UnstableDrift(re));
    }
    let ct = q.adjoint() * rhs * &q;
    let mut x = CMat::zeros(n, n);
    for j in (0..n).rev() {
        let mut b: CVec = ct.column(j).into_owned();
        for k in (j + 1)..n {
            let coeff = t[(j, k)].conj();
            b -= x.column(k) * coeff;
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = b[i];
            for l in (i + 1)..n {
                acc -= t[(i, l)] * x[(l, j)];
            }
            x[(i, j)] = acc / (t[(i, i)] + shift);
        }
    }
    Ok(&q * x * q.adjoint())
}

/// Unitary `U` with `U x = |x| e_1`: a Householder reflection followed by a phase.
///
/// When `x` already points along `e_1` (within `1e-12`, up to phase) the reflection
/// is skipped and only the phase is applied.
pub fn householder_to_e1(x: &CVec) -> CMat {
    let n = x.len();
    let norm = x.norm();
    if n == 0 || norm == 0.0 {
        return CMat::identity(n, n);
    }
    let unit = x.unscale(norm);
    let phase = if unit[0].norm() > 0.0 {
        unit[0] / unit[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut v = unit.clone();
    v[0] -= phase;
    let vn2 = v.norm_squared();
    let reflection = if vn2.sqrt() < 1e-12 {
        CMat::identity(n, n)
    } else {
        CMat::identity(n, n) - (&v * v.adjoint()).scale(2.0 / vn2)
    };
    reflection * phase.conj()
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    frobenius(&(u.adjoint() * u - CMat::identity(n, n)))
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    frobenius(&(m - m.adjoint())) <= rel_tol * frobenius(m).max(1.0)
}

/// Principal-branch square root.
pub fn sqrt_principal(z: Complex64) -> Complex64 {
    z.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn lyapunov_scalar() {
        let m = CMat::from_element(1, 1, c(1.0, 0.0));
        let rhs = CMat::from_element(1, 1, c(2.0, 0.0));
        let p = solve_lyapunov(&m, &rhs).unwrap();
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_random_residual() {
        for seed in 0..5 {
            let a = random_matrix(5, seed);
            let m = &a + CMat::identity(5, 5).scale(4.0);
            let b = random_matrix(5, seed + 100);
            let rhs = &b * b.adjoint();
            let p = solve_lyapunov(&m, &rhs).unwrap();
            let res = &m * &p + &p * m.adjoint() - &rhs;
            assert!(frobenius(&res) < 1e-11 * frobenius(&rhs));
            assert!(is_hermitian(&p, 1e-12));
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let m = diag(&[c(1.0, 0.0), c(-0.5, 1.0)]);
        let rhs = CMat::identity(2, 2);
        assert!(matches!(solve_lyapunov(&m, &rhs), Err(Error::UnstableDrift(_))));
    }

    #[test]
    fn householder_maps_to_positive_e1() {
        let x = CVec::from_vec(vec![c(0.3, -1.0), c(2.0, 0.5), c(-0.1, 0.2)]);
        let u = householder_to_e1(&x);
        let y = &u * &x;
        assert!((y[0] - c(x.norm(), 0.0)).norm() < 1e-13);
        assert!(y[1].norm() < 1e-13 && y[2].norm() < 1e-13);
        assert!(unitarity_defect(&u) < 1e-13);
    }

    #[test]
    fn householder_aligned_is_identity() {
        let x = CVec::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let u = householder_to_e1(&x);
        assert!(frobenius(&(u - CMat::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let b = random_matrix(4, 7);
        let m = &b * b.adjoint();
        let f = psd_factor(&m);
        assert!(frobenius(&(&f * f.adjoint() - &m)) < 1e-12 * frobenius(&m));
    }
}
