use serde::Serialize;

use super::{analytic_bcf, identity, stationary_covariance, OuModel, PseudomodeModel};
use crate::bcf::ExponentialBcf;
use crate::error::Result;
use num_complex::Complex64;

use crate::linalg::{diag, frobenius, singular_values, unitarity_defect, CMat};

/// Numerical checks of a constructed pseudomode model against its source BCF.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub hermiticity_defect: f64,
    pub lyapunov_residual: f64,
    pub similarity_residual: Option<f64>,
    pub covariance_residual: Option<f64>,
    pub identity_covariance_residual: f64,
    pub gamma_singular_values: Vec<f64>,
    pub damped_modes: usize,
    pub max_bcf_deviation: f64,
    pub tolerance: f64,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        let tol = self.tolerance;
        let s = &self.gamma_singular_values;
        let rank_one = s.is_empty() || s.iter().skip(1).all(|&x| x <= tol * s[0].max(1.0));
        self.hermiticity_defect <= tol
            && self.lyapunov_residual <= tol
            && self.similarity_residual.is_none_or(|r| r <= tol)
            && self.covariance_residual.is_none_or(|r| r <= 1e-8)
            && self.identity_covariance_residual <= 1e-8
            && rank_one
            && self.max_bcf_deviation <= 1e-8
    }
}

pub fn verify_model(model: &PseudomodeModel, bcf: &ExponentialBcf) -> Result<VerificationReport> {
    model.validate_shapes()?;
    let n = model.modes();
    let scale = frobenius(&model.h).max(1.0);
    let hermiticity_defect = frobenius(&(&model.h - model.h.adjoint())) / scale;
    let m = model.effective_drift();
    let gg = model.gamma.adjoint() * &model.gamma;
    let lyapunov_residual = frobenius(&(&m + m.adjoint() - &gg)) / frobenius(&gg).max(1.0);

    let (similarity_residual, covariance_residual) = match (&model.v, &model.construction) {
        (Some(v), Some(data)) => {
            let v_inv = v.clone().try_inverse();
            let sim = v_inv.as_ref().map(|vi| {
                frobenius(&(v * diag(&data.lambdas) * vi - &m)) / frobenius(&m).max(1.0)
            });
            let p = CMat::from_fn(n, n, |j, k| {
                data.noise_amplitudes[j] * data.noise_amplitudes[k].conj()
                    / (data.lambdas[j] + data.lambdas[k].conj())
            });
            // P = V^-1 V^-H checked as: U = V W D^{1/2} unitary and W D W^H = P.
            // Inverting V^H V directly would measure the conditioning of P instead.
            let sqrt_d: Vec<Complex64> = data.d.iter().map(|x| Complex64::new(x.sqrt(), 0.0)).collect();
            let d: Vec<Complex64> = data.d.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let u = v * &data.w * diag(&sqrt_d);
            let reconstructed = &data.w * diag(&d) * data.w.adjoint();
            let cov = Some(
                unitarity_defect(&u).max(frobenius(&(reconstructed - &p)) / frobenius(&p).max(1.0)),
            );
            (sim, cov)
        }
        _ => (None, None),
    };

    let identity_covariance_residual = stationary_covariance(&OuModel {
        drift: m.clone(),
        diffusion: model.gamma.adjoint(),
        coupling: model.coupling(),
    })
    .map(|p| frobenius(&(p - identity(n))))
    .unwrap_or(f64::INFINITY);

    let rate = bcf.lambdas().iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let horizon = if rate.is_finite() && rate > 0.0 { 10.0 / rate } else { 10.0 };
    let norm0 = bcf.eval(0.0).norm().max(f64::MIN_POSITIVE);
    let max_bcf_deviation = (0..=200)
        .map(|k| {
            let tau = horizon * k as f64 / 200.0;
            (analytic_bcf(model, tau) - bcf.eval(tau)).norm() / norm0
        })
        .fold(0.0, f64::max);

    Ok(VerificationReport {
        hermiticity_defect,
        lyapunov_residual,
        similarity_residual,
        covariance_residual,
        identity_covariance_residual,
        gamma_singular_values: singular_values(&model.gamma),
        damped_modes: model.damped_rows().len(),
        max_bcf_deviation,
        tolerance: 1e-10,
    })
}
