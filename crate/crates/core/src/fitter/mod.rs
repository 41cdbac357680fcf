//! Least-squares fitting of exponential BCFs to sampled data.
//!
//! Two arms share one objective `sum_i w_i |alpha(tau_i) - y_i|^2`:
//! the direct arm fits `(G, lambda)` with `sum Im G = 0` imposed by elimination,
//! the physical arm fits residues `r` and rates `lambda` so that the derived
//! amplitudes are physical by construction. Both use `Re lambda = exp(u)`.

mod lm;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcf::{
    amplitudes_from_residues, certify_positivity, spectral_factorization, CertConfig,
    ExponentialBcf, PositiveParametrization, PositivityReport,
};
use crate::error::{Error, Result};
use crate::linalg::sqrt_principal;
use crate::serde_c64;
use lm::{LeastSquares, LmSettings};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcfSamples {
    taus: Vec<f64>,
    #[serde(with = "serde_c64::vec")]
    values: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl BcfSamples {
    pub fn new(taus: Vec<f64>, values: Vec<Complex64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let s = Self {
            taus,
            values,
            weights,
        };
        s.validate()?;
        Ok(s)
    }

    /// Samples `bcf` on the given grid with unit weights.
    pub fn from_bcf(bcf: &ExponentialBcf, taus: Vec<f64>) -> Result<Self> {
        let values = taus.iter().map(|&t| bcf.eval(t)).collect();
        Self::new(taus, values, None)
    }

    /// Samples an arbitrary function on the given grid.
    pub fn from_fn(taus: Vec<f64>, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = taus.iter().map(|&t| f(t)).collect();
        Self::new(taus, values, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::InvalidInput("no samples".into()));
        }
        if self.taus.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times but {} values",
                self.taus.len(),
                self.values.len()
            )));
        }
        if !(self.taus[0] >= 0.0) || self.taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("sample times must be finite and >= 0".into()));
        }
        if self.taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("sample times must be strictly increasing".into()));
        }
        if self.values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.taus.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} times but {} weights",
                    self.taus.len(),
                    w.len()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidInput("weights must be positive and finite".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// The same data on the time axis `tau -> s tau`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.taus.iter().map(|t| t * s).collect(),
            self.values.clone(),
            self.weights.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    /// `w_i = exp(-rate tau_i)`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    /// Used only when the samples carry no explicit weights.
    pub weighting: Weighting,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            seed: 0,
            max_iterations: 500,
            rel_tol: 1e-12,
            grad_tol: 1e-10,
            weighting: Weighting::Uniform,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidInput("at least one restart is required".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if let Weighting::Exponential { rate } = self.weighting {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::InvalidInput("weighting rate must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ansatz {
    Physical,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitParams {
    Physical(PositiveParametrization),
    Direct(ExponentialBcf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub ansatz: Ansatz,
    /// Fitted model in the BCF exchange format (`lambdas`, `amplitudes`).
    #[serde(flatten)]
    pub bcf: ExponentialBcf,
    #[serde(skip)]
    pub params: FitParams,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "serialize_opt_vec"
    )]
    pub residues: Option<Vec<Complex64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub free_parameters: usize,
    pub positivity: Option<PositivityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certification_error: Option<String>,
    /// Objective after every accepted step of the winning restart.
    #[serde(skip)]
    pub history: Vec<f64>,
}

fn serialize_opt_vec<S: serde::Serializer>(
    v: &Option<Vec<Complex64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => serde_c64::vec::serialize(v, s),
        None => s.serialize_none(),
    }
}

impl FitResult {
    pub fn is_physical(&self) -> Option<bool> {
        self.positivity.as_ref().map(|p| p.is_physical)
    }

    pub fn summary(&self) -> String {
        let verdict = match (&self.positivity, &self.certification_error) {
            (Some(p), _) => {
                if p.is_physical {
                    "physical".to_string()
                } else {
                    format!(
                        "NOT physical (min J = {:.3e} at omega = {:.4})",
                        p.min_spectral_value, p.witness_frequency
                    )
                }
            }
            (None, Some(e)) => format!("uncertified ({e})"),
            (None, None) => "uncertified".to_string(),
        };
        let mut out = format!(
            "{:?} fit, {} terms, {} free parameters\n  residual norm {:.6e}, {} iterations, converged {}, best of {} restarts (#{})\n  verdict: {}\n",
            self.ansatz,
            self.bcf.len(),
            self.free_parameters,
            self.residual_norm,
            self.iterations,
            self.converged,
            self.restarts_used,
            self.best_restart,
            verdict
        );
        for (l, g) in self.bcf.lambdas().iter().zip(self.bcf.amplitudes()) {
            out.push_str(&format!(
                "  G = {:+.8e} {:+.8e}i   lambda = {:+.8e} {:+.8e}i\n",
                g.re, g.im, l.re, l.im
            ));
        }
        out
    }
}

/// Free real parameters of an `n`-term fit, before and after removing the one
/// redundancy of each arm (global phase of `r`, or `sum Im G = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParameterCount {
    pub raw: usize,
    pub constraints: usize,
    pub free: usize,
}

pub fn parameter_count(_ansatz: Ansatz, n_terms: usize) -> ParameterCount {
    ParameterCount {
        raw: 4 * n_terms,
        constraints: 1,
        free: 4 * n_terms - 1,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmReport {
    pub parameters: ParameterCount,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArmReport {
    fn new(ansatz: Ansatz, n: usize, r: Result<FitResult>) -> Self {
        let parameters = parameter_count(ansatz, n);
        match r {
            Ok(res) => Self {
                parameters,
                result: Some(res),
                error: None,
            },
            Err(e) => Self {
                parameters,
                result: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn residual_norm(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.residual_norm)
    }

    pub fn is_physical(&self) -> Option<bool> {
        self.result.as_ref().and_then(|r| r.is_physical())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub n_terms: usize,
    pub physical: ArmReport,
    pub direct: ArmReport,
    pub equal_parameter_counts: bool,
}

// ---------------------------------------------------------------------------
// objective

struct Problem<'a> {
    taus: &'a [f64],
    values: &'a [Complex64],
    sqrt_w: Vec<f64>,
    n: usize,
}

impl<'a> Problem<'a> {
    fn new(samples: &'a BcfSamples, weighting: Weighting, n: usize) -> Self {
        let sqrt_w = match (samples.weights(), weighting) {
            (Some(w), _) => w.iter().map(|x| x.sqrt()).collect(),
            (None, Weighting::Uniform) => vec![1.0; samples.len()],
            (None, Weighting::Exponential { rate }) => {
                samples.taus().iter().map(|t| (-0.5 * rate * t).exp()).collect()
            }
        };
        Self {
            taus: samples.taus(),
            values: samples.values(),
            sqrt_w,
            n,
        }
    }

    fn m(&self) -> usize {
        self.taus.len()
    }

    fn scale(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.sqrt_w)
            .map(|(v, w)| w * w * v.norm_sqr())
            .sum()
    }

    fn realify(&self, res: &[Complex64]) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(2 * m);
        for (i, r) in res.iter().enumerate() {
            out[i] = r.re;
            out[m + i] = r.im;
        }
        out
    }

    fn residuals_for(&self, lambdas: &[Complex64], amps: &[Complex64]) -> Vec<Complex64> {
        self.taus
            .iter()
            .zip(self.values)
            .zip(&self.sqrt_w)
            .map(|((&t, &y), &w)| {
                let a: Complex64 = lambdas
                    .iter()
                    .zip(amps)
                    .map(|(l, g)| g * (-l * t).exp())
                    .sum();
                w * (a - y)
            })
            .collect()
    }

    fn norm_for(&self, bcf: &ExponentialBcf) -> f64 {
        self.residuals_for(bcf.lambdas(), bcf.amplitudes())
            .iter()
            .map(|r| r.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn unpack_rates(x: &DVector<f64>, offset: usize, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| Complex64::new(x[offset + j].exp(), x[offset + n + j]))
        .collect()
}

fn pack_rates(x: &mut [f64], offset: usize, lambdas: &[Complex64]) {
    let n = lambdas.len();
    for (j, l) in lambdas.iter().enumerate() {
        x[offset + j] = l.re.ln();
        x[offset + n + j] = l.im;
    }
}

/// Layout `[Re r (n), Im r_2..r_n (n-1), u (n), Im lambda (n)]`.
struct PhysicalProblem<'a>(Problem<'a>);

impl PhysicalProblem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.0.n;
        let r = (0..n)
            .map(|j| Complex64::new(x[j], if j == 0 { 0.0 } else { x[n + j - 1] }))
            .collect();
        (r, unpack_rates(x, 2 * n - 1, n))
    }

    fn pack(r: &[Complex64], lambdas: &[Complex64]) -> DVector<f64> {
        let n = r.len();
        // Fix the global phase so that r_1 is real.
        let phase = if r[0].norm() > 0.0 {
            r[0].conj() / r[0].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut x = vec![0.0; 4 * n - 1];
        for (j, rj) in r.iter().enumerate() {
            let z = rj * phase;
            x[j] = z.re;
            if j > 0 {
                x[n + j - 1] = z.im;
            }
        }
        pack_rates(&mut x, 2 * n - 1, lambdas);
        DVector::from_vec(x)
    }
}

fn amplitudes(r: &[Complex64], lambdas: &[Complex64]) -> Vec<Complex64> {
    let n = r.len();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| r[j] * r[k].conj() / (lambdas[j] + lambdas[k].conj()))
                .sum()
        })
        .collect()
}

impl LeastSquares for PhysicalProblem<'_> {
    fn n_params(&self) -> usize {
        4 * self.0.n - 1
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (r, l) = self.unpack(x);
        self.0.realify(&self.0.residuals_for(&l, &amplitudes(&r, &l)))
    }

    fn jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = &self.0;
        let (n, m) = (p.n, p.m());
        let (r, l) = self.unpack(x);
        let res = p.realify(&p.residuals_for(&l, &amplitudes(&r, &l)));
        let mut jac = DMatrix::zeros(2 * m, 4 * n - 1);
        // kernel[j][k] = 1 / (lambda_j + conj lambda_k)
        let kernel: Vec<Vec<Complex64>> = (0..n)
            .map(|j| (0..n).map(|k| 1.0 / (l[j] + l[k].conj())).collect())
            .collect();
        let mut col = vec![Complex64::new(0.0, 0.0); 4 * n - 1];
        for (i, &t) in p.taus.iter().enumerate() {
            let w = p.sqrt_w[i];
            let e: Vec<Complex64> = l.iter().map(|lj| (-lj * t).exp()).collect();
            for mm in 0..n {
                // d alpha / d r_m (holomorphic) and d alpha / d conj r_m.
                let d_hol: Complex64 = (0..n).map(|k| r[k].conj() * e[mm] * kernel[mm][k]).sum();
                let d_anti: Complex64 = (0..n).map(|j| r[j] * e[j] * kernel[j][mm]).sum();
                col[mm] = d_hol + d_anti;
                if mm > 0 {
                    col[n + mm - 1] = I * (d_hol - d_anti);
                }
                // Same split for lambda_m.
                let a: Complex64 = (0..n)
                    .map(|k| {
                        r[mm] * r[k].conj() * e[mm] * (-t * kernel[mm][k] - kernel[mm][k] * kernel[mm][k])
                    })
                    .sum();
                let b: Complex64 = (0..n)
                    .map(|j| -r[j] * r[mm].conj() * e[j] * kernel[j][mm] * kernel[j][mm])
                    .sum();
                col[2 * n - 1 + mm] = l[mm].re * (a + b);
                col[3 * n - 1 + mm] = I * (a - b);
            }
            for (q, d) in col.iter().enumerate() {
                jac[(i, q)] = w * d.re;
                jac[(m + i, q)] = w * d.im;
            }
        }
        (res, jac)
    }
}

/// Layout `[Re G (n), Im G_1..G_{n-1} (n-1), u (n), Im lambda (n)]`.
struct DirectProblem<'a>(Problem<'a>);

impl DirectProblem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.0.n;
        let mut g: Vec<Complex64> = (0..n).map(|j| Complex64::new(x[j], 0.0)).collect();
        let mut sum_im = 0.0;
        for j in 0..n - 1 {
            g[j].im = x[n + j];
            sum_im += x[n + j];
        }
        g[n - 1].im = -sum_im;
        (g, unpack_rates(x, 2 * n - 1, n))
    }

    fn pack(g: &[Complex64], lambdas: &[Complex64]) -> DVector<f64> {
        let n = g.len();
        let mut x = vec![0.0; 4 * n - 1];
        for (j, gj) in g.iter().enumerate() {
            x[j] = gj.re;
            if j + 1 < n {
                x[n + j] = gj.im;
            }
        }
        pack_rates(&mut x, 2 * n - 1, lambdas);
        DVector::from_vec(x)
    }
}

impl LeastSquares for DirectProblem<'_> {
    fn n_params(&self) -> usize {
        4 * self.0.n - 1
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (g, l) = self.unpack(x);
        self.0.realify(&self.0.residuals_for(&l, &g))
    }

    fn jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = &self.0;
        let (n, m) = (p.n, p.m());
        let (g, l) = self.unpack(x);
        let res = p.realify(&p.residuals_for(&l, &g));
        let mut jac = DMatrix::zeros(2 * m, 4 * n - 1);
        let mut col = vec![Complex64::new(0.0, 0.0); 4 * n - 1];
        for (i, &t) in p.taus.iter().enumerate() {
            let w = p.sqrt_w[i];
            let e: Vec<Complex64> = l.iter().map(|lj| (-lj * t).exp()).collect();
            for j in 0..n {
                col[j] = e[j];
                if j + 1 < n {
                    col[n + j] = I * (e[j] - e[n - 1]);
                }
                let d = -t * g[j] * e[j];
                col[2 * n - 1 + j] = l[j].re * d;
                col[3 * n - 1 + j] = I * d;
            }
            for (q, d) in col.iter().enumerate() {
                jac[(i, q)] = w * d.re;
                jac[(m + i, q)] = w * d.im;
            }
        }
        (res, jac)
    }
}

// ---------------------------------------------------------------------------
// initialization

/// Frequencies of the strongest local maxima of `|sum_i w_i y_i exp(i omega tau_i)|`,
/// strongest first.
fn dominant_frequencies(p: &Problem) -> Vec<f64> {
    let taus = p.taus;
    let m = taus.len();
    if m < 2 {
        return vec![0.0];
    }
    let dt_min = taus.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let w_max = std::f64::consts::PI / dt_min;
    let points = (8 * m).clamp(256, 4096);
    let grid: Vec<f64> = (0..points)
        .map(|k| -w_max + 2.0 * w_max * k as f64 / (points - 1) as f64)
        .collect();
    let spectrum: Vec<f64> = grid
        .iter()
        .map(|&w| {
            (0..m)
                .map(|i| {
                    let dt = if i + 1 < m {
                        taus[i + 1] - taus[i]
                    } else {
                        taus[i] - taus[i - 1]
                    };
                    p.sqrt_w[i] * p.sqrt_w[i] * p.values[i] * (I * w * taus[i]).exp() * dt
                })
                .sum::<Complex64>()
                .norm()
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (0..points)
        .filter(|&k| {
            let left = k == 0 || spectrum[k] >= spectrum[k - 1];
            let right = k + 1 == points || spectrum[k] > spectrum[k + 1];
            left && right && spectrum[k] > 0.0
        })
        .map(|k| (spectrum[k], grid[k]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<f64> = peaks.into_iter().map(|(_, w)| w).collect();
    if out.is_empty() {
        out.push(0.0);
    }
    out
}

/// Weighted linear least squares for the amplitudes at fixed rates.
fn linear_amplitudes(p: &Problem, lambdas: &[Complex64]) -> Vec<Complex64> {
    let (m, n) = (p.m(), lambdas.len());
    let a = DMatrix::from_fn(m, n, |i, j| p.sqrt_w[i] * (-lambdas[j] * p.taus[i]).exp());
    let b = DVector::from_fn(m, |i, _| p.sqrt_w[i] * p.values[i]);
    let svd = a.svd(true, true);
    match svd.solve(&b, 1e-12) {
        Ok(g) if g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => g.iter().copied().collect(),
        _ => vec![Complex64::new(0.0, 0.0); n],
    }
}

fn initial_rates(p: &Problem, n: usize, restart: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let taus = p.taus;
    let window = (taus[taus.len() - 1] - taus[0]).max(taus[taus.len() - 1]);
    let window = if window > 0.0 { window } else { 1.0 };
    let dt_min = taus
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(window, f64::min);
    let lo = 1.0 / window;
    let hi = (20.0 / window).min(1.0 / dt_min).max(lo * 1.5);
    let freqs = dominant_frequencies(p);
    let mut rates: Vec<f64> = if n == 1 {
        vec![(lo * hi).sqrt()]
    } else {
        (0..n)
            .map(|j| lo * (hi / lo).powf(j as f64 / (n - 1) as f64))
            .collect()
    };
    let mut omegas: Vec<f64> = (0..n).map(|j| freqs.get(j).copied().unwrap_or(0.0)).collect();
    if restart > 0 {
        let pool = freqs.len().min(2 * n).max(1);
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            rates[j] = (rates[j].ln() + 0.7 * z).exp();
            let pick = rng.random_range(0..pool);
            let z2: f64 = rng.sample(StandardNormal);
            omegas[j] = freqs.get(pick).copied().unwrap_or(0.0) + z2 / window;
        }
    }
    let mut lambdas: Vec<Complex64> = rates
        .iter()
        .zip(&omegas)
        .map(|(&r, &w)| Complex64::new(r, w))
        .collect();
    // Keep the rates pairwise distinct.
    for j in 0..n {
        for k in 0..j {
            if (lambdas[j] - lambdas[k]).norm() < 1e-3 * (1.0 + lambdas[k].norm()) {
                lambdas[j].re *= 1.0 + 0.05 * (j as f64);
                lambdas[j].im += 0.1 * lo * j as f64;
            }
        }
    }
    lambdas
}

fn initial_residues(lambdas: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
    // Exact factorization when the linear fit happens to be physical.
    let mut g_herm = g.to_vec();
    let defect: f64 = g_herm.iter().map(|z| z.im).sum();
    let n = g_herm.len() as f64;
    for z in g_herm.iter_mut() {
        z.im -= defect / n;
    }
    if let Ok(bcf) = ExponentialBcf::new(lambdas.to_vec(), g_herm) {
        if let Ok(p) = spectral_factorization(&bcf) {
            if p.lambdas() == lambdas {
                return p.residues().to_vec();
            }
        }
    }
    lambdas
        .iter()
        .zip(g)
        .map(|(l, gj)| sqrt_principal(2.0 * l.re * gj))
        .collect()
}

// ---------------------------------------------------------------------------
// driver

struct Candidate {
    index: usize,
    outcome: lm::LmOutcome,
}

fn multistart<F>(config: &FitConfig, scale: f64, run: F) -> Vec<Candidate>
where
    F: Fn(usize, &mut ChaCha8Rng, &LmSettings) -> lm::LmOutcome + Sync,
{
    let settings = LmSettings {
        max_iterations: config.max_iterations,
        rel_tol: config.rel_tol,
        grad_tol: config.grad_tol,
        cost_floor: 1e-32 * scale.max(f64::MIN_POSITIVE),
    };
    let mut out: Vec<Candidate> = (0..config.restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            Candidate {
                index,
                outcome: run(index, &mut rng, &settings),
            }
        })
        .collect();
    // Best objective first; ties go to the lower restart index.
    out.sort_by(|a, b| {
        let ca = if a.outcome.cost.is_finite() { a.outcome.cost } else { f64::INFINITY };
        let cb = if b.outcome.cost.is_finite() { b.outcome.cost } else { f64::INFINITY };
        ca.total_cmp(&cb).then(a.index.cmp(&b.index))
    });
    out
}

fn certify(bcf: &ExponentialBcf) -> (Option<PositivityReport>, Option<String>) {
    match certify_positivity(bcf, &CertConfig::default()) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn check_inputs(samples: &BcfSamples, n_terms: usize, config: &FitConfig) -> Result<()> {
    if n_terms < 1 {
        return Err(Error::InvalidN(n_terms));
    }
    samples.validate()?;
    config.validate()
}

/// Fit with the positivity-preserving residue parametrization.
pub fn fit_physical(samples: &BcfSamples, n_terms: usize, config: &FitConfig) -> Result<FitResult> {
    check_inputs(samples, n_terms, config)?;
    let problem = PhysicalProblem(Problem::new(samples, config.weighting, n_terms));
    let candidates = multistart(config, problem.0.scale(), |restart, rng, settings| {
        let lambdas = initial_rates(&problem.0, n_terms, restart, rng);
        let g = linear_amplitudes(&problem.0, &lambdas);
        let r = initial_residues(&lambdas, &g);
        lm::minimize(&problem, PhysicalProblem::pack(&r, &lambdas), settings)
    });
    let mut last_err = None;
    for cand in &candidates {
        let (r, l) = problem.unpack(&cand.outcome.x);
        let p = match PositiveParametrization::new(l, r) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let bcf = amplitudes_from_residues(&p);
        let (positivity, certification_error) = certify(&bcf);
        return Ok(FitResult {
            ansatz: Ansatz::Physical,
            residual_norm: problem.0.norm_for(&bcf),
            residues: Some(p.residues().to_vec()),
            params: FitParams::Physical(p),
            bcf,
            iterations: cand.outcome.iterations,
            converged: cand.outcome.converged,
            restarts_used: config.restarts,
            best_restart: cand.index,
            free_parameters: problem.n_params(),
            positivity,
            certification_error,
            history: cand.outcome.history.clone(),
        });
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidInput("no restart produced a finite fit".into())))
}

/// Fit `(G, lambda)` directly with `sum Im G = 0`.
pub fn fit_direct(samples: &BcfSamples, n_terms: usize, config: &FitConfig) -> Result<FitResult> {
    check_inputs(samples, n_terms, config)?;
    let problem = DirectProblem(Problem::new(samples, config.weighting, n_terms));
    let candidates = multistart(config, problem.0.scale(), |restart, rng, settings| {
        let lambdas = initial_rates(&problem.0, n_terms, restart, rng);
        let mut g = linear_amplitudes(&problem.0, &lambdas);
        let defect: f64 = g.iter().map(|z| z.im).sum();
        g[n_terms - 1].im -= defect;
        lm::minimize(&problem, DirectProblem::pack(&g, &lambdas), settings)
    });
    let mut last_err = None;
    for cand in &candidates {
        let (g, l) = problem.unpack(&cand.outcome.x);
        let bcf = match ExponentialBcf::new(l, g) {
            Ok(b) => b,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let (positivity, certification_error) = certify(&bcf);
        return Ok(FitResult {
            ansatz: Ansatz::Direct,
            residual_norm: problem.0.norm_for(&bcf),
            params: FitParams::Direct(bcf.clone()),
            bcf,
            residues: None,
            iterations: cand.outcome.iterations,
            converged: cand.outcome.converged,
            restarts_used: config.restarts,
            best_restart: cand.index,
            free_parameters: problem.n_params(),
            positivity,
            certification_error,
            history: cand.outcome.history.clone(),
        });
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidInput("no restart produced a finite fit".into())))
}

/// Runs both arms with the same budget; a failing arm does not abort the other.
pub fn compare_ansatz(samples: &BcfSamples, n_terms: usize) -> ComparisonReport {
    compare_ansatz_with(samples, n_terms, &FitConfig::default())
}

pub fn compare_ansatz_with(
    samples: &BcfSamples,
    n_terms: usize,
    config: &FitConfig,
) -> ComparisonReport {
    let physical = ArmReport::new(Ansatz::Physical, n_terms, fit_physical(samples, n_terms, config));
    let direct = ArmReport::new(Ansatz::Direct, n_terms, fit_direct(samples, n_terms, config));
    ComparisonReport {
        n_terms,
        equal_parameter_counts: physical.parameters.free == direct.parameters.free,
        physical,
        direct,
    }
}

/// The objective `sqrt(sum_i w_i |alpha(tau_i) - y_i|^2)` for a given model.
pub fn residual_norm(samples: &BcfSamples, bcf: &ExponentialBcf, weighting: Weighting) -> f64 {
    Problem::new(samples, weighting, bcf.len()).norm_for(bcf)
}

#[cfg(test)]
mod tests;
