//! Exponential bath correlation functions: evaluation, positivity and factorization.
//!
//! A bath correlation function (BCF) of exponential form is
//! `alpha(tau) = sum_j G_j exp(-lambda_j tau)` for `tau >= 0`, extended to negative
//! times by `alpha(-tau) = conj(alpha(tau))`. It is physical when its spectral
//! density `J(omega) = 2 Re sum_j G_j / (lambda_j - i omega)` is non-negative for
//! every real frequency.

mod factorization;
mod positivity;

pub use factorization::spectral_factorization;
pub use positivity::{
    certify_positivity, spectral_numerator, CertConfig, CertMethod, PositivityReport,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_c64;

/// Default relative hermiticity tolerance, applied to `sum_j |G_j|`.
pub const DEFAULT_HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BcfRepr", into = "BcfRepr")]
pub struct ExponentialBcf {
    lambdas: Vec<Complex64>,
    amplitudes: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct BcfRepr {
    #[serde(with = "serde_c64::vec")]
    lambdas: Vec<Complex64>,
    #[serde(with = "serde_c64::vec")]
    amplitudes: Vec<Complex64>,
}

impl TryFrom<BcfRepr> for ExponentialBcf {
    type Error = Error;

    fn try_from(r: BcfRepr) -> Result<Self> {
        ExponentialBcf::new(r.lambdas, r.amplitudes)
    }
}

impl From<ExponentialBcf> for BcfRepr {
    fn from(b: ExponentialBcf) -> Self {
        BcfRepr {
            lambdas: b.lambdas,
            amplitudes: b.amplitudes,
        }
    }
}

fn check_rates(lambdas: &[Complex64]) -> Result<()> {
    for (j, l) in lambdas.iter().enumerate() {
        if !(l.re.is_finite() && l.im.is_finite()) || l.re <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "decay rate lambda_{j} = {l} must be finite with positive real part"
            )));
        }
    }
    Ok(())
}

fn check_distinct(lambdas: &[Complex64], tol: f64) -> Result<()> {
    for i in 0..lambdas.len() {
        for j in (i + 1)..lambdas.len() {
            let scale = 1.0 + lambdas[i].norm().max(lambdas[j].norm());
            if (lambdas[i] - lambdas[j]).norm() <= tol * scale {
                return Err(Error::DegenerateLambdas { i, j });
            }
        }
    }
    Ok(())
}

impl ExponentialBcf {
    /// Validated constructor using the default hermiticity tolerance.
    pub fn new(lambdas: Vec<Complex64>, amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::with_tolerance(lambdas, amplitudes, DEFAULT_HERMITICITY_TOL)
    }

    pub fn with_tolerance(
        lambdas: Vec<Complex64>,
        amplitudes: Vec<Complex64>,
        hermiticity_tol: f64,
    ) -> Result<Self> {
        if lambdas.len() != amplitudes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} decay rates but {} amplitudes",
                lambdas.len(),
                amplitudes.len()
            )));
        }
        check_rates(&lambdas)?;
        if amplitudes.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite amplitude".into()));
        }
        let bcf = Self {
            lambdas,
            amplitudes,
        };
        bcf.check_hermiticity(hermiticity_tol)?;
        Ok(bcf)
    }

    /// The closed-system limit: no exponential terms at all.
    pub fn empty() -> Self {
        Self {
            lambdas: vec![],
            amplitudes: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[Complex64] {
        &self.lambdas
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `|sum_j Im G_j|`, which must vanish for `alpha(0)` to be real.
    pub fn hermiticity_defect(&self) -> f64 {
        self.amplitudes.iter().map(|g| g.im).sum::<f64>().abs()
    }

    pub fn check_hermiticity(&self, rel_tol: f64) -> Result<()> {
        let scale: f64 = self.amplitudes.iter().map(|g| g.norm()).sum();
        let tolerance = rel_tol * scale.max(f64::MIN_POSITIVE);
        let defect = self.hermiticity_defect();
        if defect > tolerance {
            return Err(Error::HermiticityViolation { defect, tolerance });
        }
        Ok(())
    }

    pub fn check_distinct(&self, tol: f64) -> Result<()> {
        check_distinct(&self.lambdas, tol)
    }

    /// `alpha(tau)` with the hermitian extension to negative times.
    pub fn eval(&self, tau: f64) -> Complex64 {
        let forward = |t: f64| {
            self.lambdas
                .iter()
                .zip(&self.amplitudes)
                .map(|(l, g)| g * (-l * t).exp())
                .sum::<Complex64>()
        };
        if tau >= 0.0 {
            forward(tau)
        } else {
            forward(-tau).conj()
        }
    }

    /// Closed-form spectral density `J(omega) = 2 Re sum_j G_j / (lambda_j - i omega)`.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        self.check_hermiticity(DEFAULT_HERMITICITY_TOL)?;
        Ok(self.spectral_density_unchecked(omega))
    }

    pub(crate) fn spectral_density_unchecked(&self, omega: f64) -> f64 {
        let w = Complex64::new(0.0, omega);
        2.0 * self
            .lambdas
            .iter()
            .zip(&self.amplitudes)
            .map(|(l, g)| (g / (l - w)).re)
            .sum::<f64>()
    }

    /// Largest `|lambda_j|`, used to size frequency grids.
    pub fn max_rate(&self) -> f64 {
        self.lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }
}

/// Complex residues `r_j` and rates `lambda_j` whose derived amplitudes
/// `G_j = sum_k r_j conj(r_k) / (lambda_j + conj(lambda_k))` always describe a
/// non-negative spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr", into = "ParamRepr")]
pub struct PositiveParametrization {
    lambdas: Vec<Complex64>,
    residues: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct ParamRepr {
    #[serde(with = "serde_c64::vec")]
    lambdas: Vec<Complex64>,
    #[serde(with = "serde_c64::vec")]
    residues: Vec<Complex64>,
}

impl TryFrom<ParamRepr> for PositiveParametrization {
    type Error = Error;

    fn try_from(r: ParamRepr) -> Result<Self> {
        PositiveParametrization::new(r.lambdas, r.residues)
    }
}

impl From<PositiveParametrization> for ParamRepr {
    fn from(p: PositiveParametrization) -> Self {
        ParamRepr {
            lambdas: p.lambdas,
            residues: p.residues,
        }
    }
}

/// Separation below which two rates are treated as coincident.
pub const DEFAULT_LAMBDA_SEPARATION: f64 = 1e-10;

impl PositiveParametrization {
    pub fn new(lambdas: Vec<Complex64>, residues: Vec<Complex64>) -> Result<Self> {
        if lambdas.len() != residues.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} decay rates but {} residues",
                lambdas.len(),
                residues.len()
            )));
        }
        check_rates(&lambdas)?;
        check_distinct(&lambdas, DEFAULT_LAMBDA_SEPARATION)?;
        if residues.iter().any(|r| !(r.re.is_finite() && r.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite residue".into()));
        }
        Ok(Self { lambdas, residues })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[Complex64] {
        &self.lambdas
    }

    pub fn residues(&self) -> &[Complex64] {
        &self.residues
    }

    /// The derived amplitudes, by direct double sum.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        self.residues[j] * self.residues[k].conj()
                            / (self.lambdas[j] + self.lambdas[k].conj())
                    })
                    .sum()
            })
            .collect()
    }
}

/// Amplitudes `G_j = sum_k r_j conj(r_k) / (lambda_j + conj(lambda_k))`.
pub fn amplitudes_from_residues(p: &PositiveParametrization) -> ExponentialBcf {
    let mut amplitudes = p.amplitudes();
    // The double sum is real analytically; remove the rounding residue so the
    // result always passes the hermiticity check.
    let defect: f64 = amplitudes.iter().map(|g| g.im).sum();
    if let Some(largest) = amplitudes
        .iter_mut()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        largest.im -= defect;
    }
    ExponentialBcf {
        lambdas: p.lambdas.clone(),
        amplitudes,
    }
}

/// Default relative tolerance for [`chain_feasibility`].
pub const DEFAULT_CHAIN_TOL: f64 = 1e-10;

/// Whether this factorization admits a chain geometry in which only the last,
/// system-decoupled mode is damped: `|sum_j r_j|` must vanish.
pub fn chain_feasibility(p: &PositiveParametrization) -> bool {
    chain_feasibility_with_tol(p, DEFAULT_CHAIN_TOL)
}

pub fn chain_feasibility_with_tol(p: &PositiveParametrization, rel_tol: f64) -> bool {
    let scale: f64 = p.residues.iter().map(|r| r.norm()).sum();
    if scale == 0.0 {
        return false;
    }
    p.residues.iter().sum::<Complex64>().norm() < rel_tol * scale
}

/// Samples `(tau, alpha(tau))` on the given grid.
pub fn sample_bcf(bcf: &ExponentialBcf, taus: &[f64]) -> Vec<(f64, Complex64)> {
    taus.iter().map(|&t| (t, bcf.eval(t))).collect()
}

/// Samples `(omega, J(omega))` on the given grid.
pub fn sample_spectral_density(bcf: &ExponentialBcf, omegas: &[f64]) -> Result<Vec<(f64, f64)>> {
    bcf.check_hermiticity(DEFAULT_HERMITICITY_TOL)?;
    Ok(omegas
        .iter()
        .map(|&w| (w, bcf.spectral_density_unchecked(w)))
        .collect())
}
