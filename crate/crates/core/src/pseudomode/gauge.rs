use num_complex::Complex64;

use super::{model_from_transform, PseudomodeModel};
use crate::error::{Error, Result};
use crate::linalg::{diag, unitarity_defect, CMat, CVec};

pub const UNITARITY_TOL: f64 = 1e-10;

/// Re-applies the construction with `V' = u D^{-1/2} W^H` for an arbitrary unitary `u`.
///
/// The BCF and the rank of `Gamma` are unchanged; the damped mode is rotated
/// into `u D^{-1/2} W^H c`.
pub fn enumerate_gauge_freedom(model: &PseudomodeModel, u: &CMat) -> Result<PseudomodeModel> {
    let data = model.construction.as_ref().ok_or_else(|| {
        Error::InvalidInput("model carries no construction data".into())
    })?;
    let n = data.lambdas.len();
    if u.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!("u is {:?}, expected {n}x{n}", u.shape())));
    }
    let defect = unitarity_defect(u);
    if defect > UNITARITY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    let inv_sqrt: Vec<Complex64> = data.d.iter().map(|x| Complex64::new(x.powf(-0.5), 0.0)).collect();
    let sqrt: Vec<Complex64> = data.d.iter().map(|x| Complex64::new(x.sqrt(), 0.0)).collect();
    let v = u * diag(&inv_sqrt) * data.w.adjoint();
    let v_inv = &data.w * diag(&sqrt) * u.adjoint();
    let c = CVec::from_column_slice(&data.noise_amplitudes);
    let g_tilde = CVec::from_column_slice(&data.coupling_tilde);
    let (h, gamma, g) = model_from_transform(&v, &v_inv, &data.lambdas, &c, &g_tilde);
    Ok(PseudomodeModel {
        h,
        gamma,
        g,
        v: Some(v),
        construction: model.construction.clone(),
    })
}
