//! Constructive conversion of a positive parametrization into an interacting
//! pseudomode Lindblad model with a single damped mode.
//!
//! The chain is: diagonal Ornstein-Uhlenbeck process `dz_j = -lambda_j z_j dt + c_j dxi`
//! with stationary covariance `P`, a similarity transform `V` with
//! `(V^H V)^{-1} = P`, and finally `h = (V lambda V^{-1} - h.c.) / 2i`,
//! `Gamma^H = (V c) e_1^H`, `g = (V^{-1})^H g~`.

mod gauge;
mod verify;

pub use gauge::enumerate_gauge_freedom;
pub use verify::{verify_model, VerificationReport};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bcf::{amplitudes_from_residues, PositiveParametrization};
use crate::error::{Error, Result};
use crate::linalg::{self, diag, frobenius, hermitian_eigen, CMat, CVec, I};
use crate::serde_c64;

/// `dz = -M z dt + B dxi` with readout `A = g~^H z`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuModel {
    pub drift: CMat,
    pub diffusion: CMat,
    pub coupling: CVec,
}

/// Relative threshold below which an amplitude counts as zero.
pub const ZERO_AMPLITUDE_TOL: f64 = 1e-12;

fn sqrt_amplitudes(p: &PositiveParametrization) -> Result<Vec<Complex64>> {
    let g = amplitudes_from_residues(p);
    let scale: f64 = g.amplitudes().iter().map(|z| z.norm()).sum::<f64>().max(1.0);
    g.amplitudes()
        .iter()
        .enumerate()
        .map(|(index, z)| {
            if z.norm() < ZERO_AMPLITUDE_TOL * scale {
                Err(Error::ZeroAmplitude {
                    index,
                    magnitude: z.norm(),
                })
            } else {
                Ok(linalg::sqrt_principal(*z))
            }
        })
        .collect()
}

/// Diagonal OU process reproducing the BCF of `p`.
///
/// `M = diag(lambda)`, `B = c e_1^H` with `c_j = r_j / sqrt(G_j)`, and
/// `g~_j = conj(sqrt(G_j))` on the principal branch.
pub fn build_diagonal_ou(p: &PositiveParametrization) -> Result<OuModel> {
    let n = p.len();
    let sqrt_g = sqrt_amplitudes(p)?;
    let c: Vec<Complex64> = p.residues().iter().zip(&sqrt_g).map(|(r, s)| r / s).collect();
    let mut diffusion = CMat::zeros(n, n);
    for j in 0..n {
        diffusion[(j, 0)] = c[j];
    }
    Ok(OuModel {
        drift: diag(p.lambdas()),
        diffusion,
        coupling: CVec::from_iterator(n, sqrt_g.iter().map(|s| s.conj())),
    })
}

/// The noise amplitudes `c_j` of the diagonal process (first column of `B`).
pub fn noise_amplitudes(ou: &OuModel) -> CVec {
    ou.diffusion.column(0).into_owned()
}

/// Closed form `P_jk = c_j conj(c_k) / (lambda_j + conj(lambda_k))`.
pub fn diagonal_covariance(lambdas: &[Complex64], c: &CVec) -> CMat {
    let n = lambdas.len();
    CMat::from_fn(n, n, |j, k| c[j] * c[k].conj() / (lambdas[j] + lambdas[k].conj()))
}

/// Stationary covariance `P` solving `M P + P M^H = B B^H`.
pub fn stationary_covariance(m: &OuModel) -> Result<CMat> {
    let rhs = &m.diffusion * m.diffusion.adjoint();
    let p = linalg::solve_lyapunov(&m.drift, &rhs)?;
    Ok((&p + p.adjoint()).scale(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    /// `V = U D^{-1/2} W^H`.
    pub v: CMat,
    pub v_inv: CMat,
    /// Eigenvectors of `P`.
    pub w: CMat,
    /// Eigenvalues of `P`, ascending.
    pub d: Vec<f64>,
    /// Householder completion sending `D^{-1/2} W^H c` to the positive `e_1` axis.
    pub u: CMat,
}

pub const SINGULAR_P_TOL: f64 = 1e-12;

/// Similarity transform `V` with `(V^H V)^{-1} = P` and `V c = |V c| e_1`.
pub fn build_transformation(p: &CMat, c: &CVec) -> Result<Transformation> {
    let n = p.nrows();
    if p.ncols() != n || c.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "P is {:?}, c has length {}",
            p.shape(),
            c.len()
        )));
    }
    let (d, w) = hermitian_eigen(p);
    let (dmin, dmax) = (d[0], d[n - 1]);
    if !(dmin > SINGULAR_P_TOL * dmax) {
        return Err(Error::SingularP(dmin / dmax));
    }
    let inv_sqrt = diag(&d.iter().map(|x| Complex64::new(x.powf(-0.5), 0.0)).collect::<Vec<_>>());
    let sqrt = diag(&d.iter().map(|x| Complex64::new(x.sqrt(), 0.0)).collect::<Vec<_>>());
    let base = &inv_sqrt * w.adjoint();
    let u = linalg::householder_to_e1(&(&base * c));
    let v = &u * &base;
    // V^{-1} = W D^{1/2} U^H, exact for unitary W and U.
    let v_inv = &w * sqrt * u.adjoint();
    Ok(Transformation { v, v_inv, w, d, u })
}

/// Data retained from the construction so the gauge freedom can be re-applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    #[serde(with = "serde_c64::vec")]
    pub lambdas: Vec<Complex64>,
    #[serde(with = "serde_c64::vec")]
    pub noise_amplitudes: Vec<Complex64>,
    #[serde(with = "serde_c64::vec")]
    pub coupling_tilde: Vec<Complex64>,
    #[serde(with = "serde_c64::matrix")]
    pub w: CMat,
    pub d: Vec<f64>,
}

/// Pseudomode Lindblad model: `H = sum h_kk' a_k^H a_k'`, dissipators
/// `L_k = sum_k' Gamma_kk' a_k'` and system coupling `S (g^H a + a^H g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudomodeModel {
    #[serde(with = "serde_c64::matrix")]
    pub h: CMat,
    #[serde(rename = "Gamma", with = "serde_c64::matrix")]
    pub gamma: CMat,
    #[serde(with = "serde_c64::vec")]
    pub g: Vec<Complex64>,
    #[serde(rename = "V", with = "serde_c64::opt_matrix", default)]
    pub v: Option<CMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction: Option<Construction>,
}

impl PseudomodeModel {
    pub fn modes(&self) -> usize {
        self.g.len()
    }

    /// `M~ = Gamma^H Gamma / 2 + i h`.
    pub fn effective_drift(&self) -> CMat {
        (self.gamma.adjoint() * &self.gamma).scale(0.5) + &self.h * I
    }

    pub fn coupling(&self) -> CVec {
        CVec::from_column_slice(&self.g)
    }

    /// Indices of modes carrying a non-zero dissipator row.
    pub fn damped_rows(&self) -> Vec<usize> {
        let total = frobenius(&self.gamma).max(f64::MIN_POSITIVE);
        (0..self.gamma.nrows())
            .filter(|&k| self.gamma.row(k).norm() > 1e-12 * total)
            .collect()
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let n = self.g.len();
        if self.h.shape() != (n, n) || self.gamma.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "h {:?}, Gamma {:?}, g length {n}",
                self.h.shape(),
                self.gamma.shape()
            )));
        }
        Ok(())
    }
}

pub(crate) fn model_from_transform(
    v: &CMat,
    v_inv: &CMat,
    lambdas: &[Complex64],
    c: &CVec,
    g_tilde: &CVec,
) -> (CMat, CMat, Vec<Complex64>) {
    let n = lambdas.len();
    let similar = v * diag(lambdas) * v_inv;
    let h = (&similar - similar.adjoint()) * Complex64::new(0.0, -0.5);
    let vc = v * c;
    let mut gamma_dag = CMat::zeros(n, n);
    for k in 0..n {
        gamma_dag[(k, 0)] = vc[k];
    }
    let g = v_inv.adjoint() * g_tilde;
    (h, gamma_dag.adjoint(), g.iter().copied().collect())
}

/// Builds the single-damped-mode pseudomode model for `p`.
pub fn assemble_pseudomode(p: &PositiveParametrization) -> Result<PseudomodeModel> {
    let ou = build_diagonal_ou(p)?;
    let c = noise_amplitudes(&ou);
    let cov = stationary_covariance(&ou)?;
    let t = build_transformation(&cov, &c)?;
    let (h, gamma, g) = model_from_transform(&t.v, &t.v_inv, p.lambdas(), &c, &ou.coupling);
    Ok(PseudomodeModel {
        h,
        gamma,
        g,
        v: Some(t.v),
        construction: Some(Construction {
            lambdas: p.lambdas().to_vec(),
            noise_amplitudes: c.iter().copied().collect(),
            coupling_tilde: ou.coupling.iter().copied().collect(),
            w: t.w,
            d: t.d,
        }),
    })
}

/// `alpha_pm(tau) = g^H exp(-M~ tau) g` for `tau >= 0`, hermitian extension otherwise.
pub fn analytic_bcf(model: &PseudomodeModel, tau: f64) -> Complex64 {
    let g = model.coupling();
    let prop = (model.effective_drift() * Complex64::new(-tau.abs(), 0.0)).exp();
    let value = (g.adjoint() * prop * &g)[(0, 0)];
    if tau >= 0.0 {
        value
    } else {
        value.conj()
    }
}

/// `analytic_bcf` on a whole grid, reusing one propagator step when the grid is uniform.
pub fn analytic_bcf_grid(model: &PseudomodeModel, taus: &[f64]) -> Vec<Complex64> {
    taus.iter().map(|&t| analytic_bcf(model, t)).collect()
}

pub(crate) fn identity(n: usize) -> CMat {
    DMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::ExponentialBcf;
    use crate::fixtures::{chain_counterexample, seeded_parametrization};
    use crate::linalg::c;

    fn param(l: &[Complex64], r: &[Complex64]) -> PositiveParametrization {
        PositiveParametrization::new(l.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn single_mode_ou() {
        let p = param(&[c(1.0, 2.0)], &[c(1.0, 0.0)]);
        let ou = build_diagonal_ou(&p).unwrap();
        assert!((ou.drift[(0, 0)] - c(1.0, 2.0)).norm() < 1e-15);
        assert!((ou.diffusion[(0, 0)] - c(1.0 / 0.5f64.sqrt(), 0.0)).norm() < 1e-14);
        assert!((ou.coupling[0] - c(0.5f64.sqrt(), 0.0)).norm() < 1e-15);
        let cov = stationary_covariance(&ou).unwrap();
        assert!((cov[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_covariance_matches_lyapunov() {
        let p = param(&[c(1.0, 0.0), c(2.0, 0.0)], &[c(1.0, 0.0), c(1.0, 0.0)]);
        let ou = build_diagonal_ou(&p).unwrap();
        let c_vec = noise_amplitudes(&ou);
        let closed = diagonal_covariance(p.lambdas(), &c_vec);
        let general = stationary_covariance(&ou).unwrap();
        assert!(frobenius(&(&closed - &general)) < 1e-12);
        let c1 = 1.0 / (5.0f64 / 6.0).sqrt();
        assert!((closed[(0, 0)].re - c1 * c1 / 2.0).abs() < 1e-13);
        for seed in 0..5 {
            let p = seeded_parametrization(4, seed);
            let ou = build_diagonal_ou(&p).unwrap();
            let c_vec = noise_amplitudes(&ou);
            let closed = diagonal_covariance(p.lambdas(), &c_vec);
            let general = stationary_covariance(&ou).unwrap();
            assert!(frobenius(&(&closed - &general)) < 1e-12 * frobenius(&closed).max(1.0));
        }
    }

    #[test]
    fn zero_amplitude_guard() {
        // r = (1, -2) with lambda = (1, 3): G_2 = -2 (1/4 - 2/6) ... pick r so that G_1 = 0.
        // G_1 = r_1 (conj r_1 / 2 + conj r_2 / 4) vanishes for r_2 = -2 r_1.
        let p = param(&[c(1.0, 0.0), c(3.0, 0.0)], &[c(1.0, 0.0), c(-2.0, 0.0)]);
        assert!(matches!(build_diagonal_ou(&p), Err(Error::ZeroAmplitude { index: 0, .. })));
    }

    #[test]
    fn pseudomode_form_has_identity_covariance() {
        let p = seeded_parametrization(3, 11);
        let model = assemble_pseudomode(&p).unwrap();
        let ou = OuModel {
            drift: model.effective_drift(),
            diffusion: model.gamma.adjoint(),
            coupling: model.coupling(),
        };
        let cov = stationary_covariance(&ou).unwrap();
        assert!(frobenius(&(cov - identity(3))) < 1e-10);
    }

    #[test]
    fn transformation_identity_and_scalar() {
        let v = build_transformation(&identity(2), &CVec::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]))
            .unwrap();
        assert!(frobenius(&(v.v - identity(2))) < 1e-14);

        let p = CMat::from_element(1, 1, c(4.0, 0.0));
        let t = build_transformation(&p, &CVec::from_vec(vec![c(0.0, 3.0)])).unwrap();
        assert!((t.v[(0, 0)].norm() - 0.5).abs() < 1e-14);
        let back = (t.v.adjoint() * &t.v).try_inverse().unwrap();
        assert!((back[(0, 0)] - c(4.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn singular_covariance_rejected() {
        let p = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let c_vec = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(build_transformation(&p, &c_vec), Err(Error::SingularP(_))));
    }

    #[test]
    fn single_mode_model() {
        // r = sqrt(2 gamma G) keeps G real: gamma = 0.7, omega = 1.3, G = 0.4.
        let (gamma, omega, g): (f64, f64, f64) = (0.7, 1.3, 0.4);
        let p = param(&[c(gamma, omega)], &[c((2.0 * gamma * g).sqrt(), 0.0)]);
        let m = assemble_pseudomode(&p).unwrap();
        assert!((m.h[(0, 0)] - c(omega, 0.0)).norm() < 1e-13);
        let gg = m.gamma.adjoint() * &m.gamma;
        assert!((gg[(0, 0)] - c(2.0 * gamma, 0.0)).norm() < 1e-13);
        assert!((m.g[0].norm() - g.sqrt()).abs() < 1e-13);
        for tau in [0.0, 0.5, 2.0] {
            let expected = c(g, 0.0) * (-c(gamma, omega) * tau).exp();
            assert!((analytic_bcf(&m, tau) - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn counterexample_model_invariants() {
        let bcf = chain_counterexample();
        let p = crate::bcf::spectral_factorization(&bcf).unwrap();
        let m = assemble_pseudomode(&p).unwrap();
        let report = verify_model(&m, &bcf).unwrap();
        assert!(report.all_pass(), "{report:?}");
        // Only mode 1 is damped: row and column of mode 2 vanish in Gamma.
        assert_eq!(m.damped_rows(), vec![0]);
        assert!(m.gamma.column(1).norm() < 1e-12);
    }

    #[test]
    fn bcf_matches_exponential_form() {
        for seed in 0..10 {
            let n = 1 + (seed as usize % 5);
            let p = seeded_parametrization(n, seed);
            let m = assemble_pseudomode(&p).unwrap();
            let b: ExponentialBcf = amplitudes_from_residues(&p);
            let scale = b.eval(0.0).norm();
            for k in 0..40 {
                let tau = 0.25 * k as f64;
                assert!((analytic_bcf(&m, tau) - b.eval(tau)).norm() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn model_json_fields() {
        let p = seeded_parametrization(2, 3);
        let m = assemble_pseudomode(&p).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in ["h", "Gamma", "g", "V"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: PseudomodeModel = serde_json::from_value(v).unwrap();
        assert!(frobenius(&(back.h - m.h)) < 1e-15);
    }
}
