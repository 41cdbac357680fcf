use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ExponentialBcf;
use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertMethod {
    Grid,
    PolynomialRoots,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    pub method: CertMethod,
    /// Relative tolerance on `|sum Im G_j|` against `sum |G_j|`.
    pub hermiticity_tol: f64,
    /// Relative separation below which two rates count as coincident.
    pub lambda_separation: f64,
    /// Roots closer than `cluster_tol * (1 + |root|)` are merged into one cluster.
    pub cluster_tol: f64,
    /// A root is near-real when `|Im| < real_axis_tol * (1 + |Re|)`.
    pub real_axis_tol: f64,
    /// Leading coefficients below this fraction of the largest are dropped.
    pub coefficient_tol: f64,
    /// `J` is considered negative below `-negativity_tol * max J`.
    pub negativity_tol: f64,
    pub grid_points: usize,
    /// Grid spans `[-span, span] * max |lambda_j|`.
    pub grid_span: f64,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self {
            method: CertMethod::Both,
            hermiticity_tol: super::DEFAULT_HERMITICITY_TOL,
            lambda_separation: super::DEFAULT_LAMBDA_SEPARATION,
            cluster_tol: 1e-6,
            real_axis_tol: 1e-7,
            coefficient_tol: 1e-12,
            negativity_tol: 1e-10,
            grid_points: 100_000,
            grid_span: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub is_physical: bool,
    pub min_spectral_value: f64,
    pub witness_frequency: f64,
    pub method: CertMethod,
    /// Real roots of the spectral numerator with their cluster multiplicities.
    pub real_root_multiplicities: Vec<(f64, usize)>,
    pub polynomial_verdict: Option<bool>,
    pub grid_verdict: Option<bool>,
    pub max_spectral_value: f64,
}

/// Numerator `P(omega)` of `J = P / Q` with `Q = prod_j |lambda_j - i omega|^2`.
///
/// The returned polynomial has nominal degree `2N - 1`; its top coefficient equals
/// `-2 sum_j Im G_j` and vanishes for hermitian inputs.
pub fn spectral_numerator(bcf: &ExponentialBcf) -> Poly {
    let quad = |l: &Complex64| Poly::new(vec![l.norm_sqr(), -2.0 * l.im, 1.0]);
    let n = bcf.len();
    let mut total = Poly::zero();
    for j in 0..n {
        let g = bcf.amplitudes[j];
        let l = bcf.lambdas[j];
        let mut term = Poly::new(vec![2.0 * (g * l.conj()).re, -2.0 * g.im]);
        for (k, lk) in bcf.lambdas.iter().enumerate() {
            if k != j {
                term = term.mul(&quad(lk));
            }
        }
        total = total.add(&term);
    }
    total
}

pub(super) struct RootStructure {
    /// Even-multiplicity real clusters `(root, multiplicity)`.
    pub real: Vec<(f64, usize)>,
    /// Roots off the real axis.
    pub complex: Vec<Complex64>,
    /// Trimmed numerator in the original frequency variable.
    pub numerator: Poly,
    pub physical: bool,
    /// Candidate frequencies where `J` may be negative.
    pub witnesses: Vec<f64>,
}

pub(super) fn analyse_roots(bcf: &ExponentialBcf, config: &CertConfig) -> Result<RootStructure> {
    let numerator = spectral_numerator(bcf);
    let scale = bcf.max_rate().max(1e-300);
    let scaled = numerator.rescale_argument(scale).trimmed(config.coefficient_tol);

    if scaled.is_empty() {
        // J vanishes identically.
        return Ok(RootStructure {
            real: vec![],
            complex: vec![],
            numerator: Poly::zero(),
            physical: true,
            witnesses: vec![],
        });
    }

    let roots: Vec<Complex64> = scaled.roots().into_iter().map(|z| z * scale).collect();
    let degree = scaled.len() - 1;
    let lead = scaled.coeffs[degree];
    let eval = |x: f64| scaled.eval(x / scale);

    let mut near_real: Vec<Complex64> = vec![];
    let mut complex = vec![];
    for z in roots {
        if z.im.abs() < config.real_axis_tol * (1.0 + z.re.abs()) {
            near_real.push(z);
        } else {
            complex.push(z);
        }
    }
    near_real.sort_by(|a, b| a.re.total_cmp(&b.re));

    let mut clusters: Vec<Vec<Complex64>> = vec![];
    for z in near_real {
        match clusters.last_mut() {
            Some(cl) if (z.re - cl.last().unwrap().re).abs() < config.cluster_tol * (1.0 + z.re.abs()) => {
                cl.push(z)
            }
            _ => clusters.push(vec![z]),
        }
    }

    let mut physical = degree % 2 == 0 && lead > 0.0;
    let mut witnesses = vec![];
    if degree % 2 == 1 || lead < 0.0 {
        let far = 10.0 * scale * (1.0 + clusters.len() as f64);
        witnesses.extend([far, -far, 1e3 * far, -1e3 * far]);
    }

    let centers: Vec<f64> = clusters
        .iter()
        .map(|cl| cl.iter().map(|z| z.re).sum::<f64>() / cl.len() as f64)
        .collect();
    let mut real = vec![];
    for (idx, cl) in clusters.iter().enumerate() {
        let x = centers[idx];
        if cl.len() % 2 == 0 {
            real.push((x, cl.len()));
            continue;
        }
        // Odd cluster: confirm the sign change on either side before declaring
        // the density negative.
        let gap_left = if idx > 0 { x - centers[idx - 1] } else { f64::INFINITY };
        let gap_right = if idx + 1 < centers.len() { centers[idx + 1] - x } else { f64::INFINITY };
        let delta = (1e-3 * (1.0 + x.abs())).min(0.5 * gap_left).min(0.5 * gap_right);
        let (left, right) = (eval(x - delta), eval(x + delta));
        if left.signum() != right.signum() && left != 0.0 && right != 0.0 {
            physical = false;
            witnesses.push(if left < right { x - delta } else { x + delta });
            real.push((x, cl.len()));
        } else {
            return Err(Error::NumericallyAmbiguous {
                root: format!("{x:.6e} (multiplicity {})", cl.len()),
            });
        }
    }
    // Midpoints between consecutive real roots also bracket negative lobes.
    if !physical {
        for w in centers.windows(2) {
            witnesses.push(0.5 * (w[0] + w[1]));
        }
    }

    Ok(RootStructure {
        real,
        complex,
        numerator: numerator.trimmed(config.coefficient_tol),
        physical,
        witnesses,
    })
}

fn grid_scan(bcf: &ExponentialBcf, config: &CertConfig) -> (f64, f64, f64) {
    let span = config.grid_span * bcf.max_rate().max(1e-12);
    let n = config.grid_points.max(2);
    let step = 2.0 * span / (n - 1) as f64;
    let mut min = (f64::INFINITY, 0.0);
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let w = -span + step * i as f64;
        let j = bcf.spectral_density_unchecked(w);
        if j < min.0 {
            min = (j, w);
        }
        max = max.max(j);
    }
    (min.0, min.1, max)
}

/// Decides whether the spectral density is non-negative everywhere.
///
/// The polynomial route finds every root of the spectral numerator and demands
/// that real roots come with even multiplicity and that the leading coefficient is
/// positive. The grid route scans a frequency window; when both run the report
/// carries both verdicts and a concrete grid witness overrides the polynomial one.
pub fn certify_positivity(bcf: &ExponentialBcf, config: &CertConfig) -> Result<PositivityReport> {
    bcf.check_hermiticity(config.hermiticity_tol)?;
    bcf.check_distinct(config.lambda_separation)?;

    let run_poly = matches!(config.method, CertMethod::PolynomialRoots | CertMethod::Both);
    let run_grid = matches!(config.method, CertMethod::Grid | CertMethod::Both);

    let (grid_min, grid_arg, grid_max) = grid_scan(
        bcf,
        &CertConfig {
            grid_points: if run_grid { config.grid_points } else { 2001 },
            ..config.clone()
        },
    );
    let max_j = grid_max.max(0.0);
    let neg_tol = config.negativity_tol * max_j.max(f64::MIN_POSITIVE);

    let mut min_value = grid_min;
    let mut witness = grid_arg;
    let mut real_roots = vec![];
    let mut polynomial_verdict = None;
    if run_poly {
        let structure = analyse_roots(bcf, config)?;
        for &w in &structure.witnesses {
            let j = bcf.spectral_density_unchecked(w);
            if j < min_value {
                min_value = j;
                witness = w;
            }
        }
        real_roots = structure.real;
        polynomial_verdict = Some(structure.physical);
    }
    let grid_verdict = run_grid.then_some(grid_min >= -neg_tol);

    let is_physical = match (polynomial_verdict, grid_verdict) {
        (Some(p), Some(g)) => p && g,
        (Some(p), None) => p,
        (None, Some(g)) => g,
        (None, None) => unreachable!(),
    };

    Ok(PositivityReport {
        is_physical,
        min_spectral_value: min_value,
        witness_frequency: witness,
        method: config.method,
        real_root_multiplicities: real_roots,
        polynomial_verdict,
        grid_verdict,
        max_spectral_value: max_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::{amplitudes_from_residues, PositiveParametrization};
    use crate::linalg::c;

    fn bcf(l: &[Complex64], g: &[Complex64]) -> ExponentialBcf {
        ExponentialBcf::new(l.to_vec(), g.to_vec()).unwrap()
    }

    #[test]
    fn single_lorentzian_physical() {
        let b = bcf(&[c(1.0, 2.0)], &[c(0.5, 0.0)]);
        let r = certify_positivity(&b, &CertConfig::default()).unwrap();
        assert!(r.is_physical);
        assert_eq!(r.polynomial_verdict, Some(true));
        // P is the positive constant 2 Re(G conj(lambda)) = 1.
        let p = spectral_numerator(&b).trimmed(1e-12);
        assert_eq!(p.coeffs, vec![1.0]);
    }

    #[test]
    fn leading_coefficient_cancels() {
        let b = bcf(&[c(1.0, 1.0), c(2.0, 1.0), c(0.5, -3.0)], &[c(1.0, 0.3), c(2.0, -0.5), c(-0.2, 0.2)]);
        let p = spectral_numerator(&b);
        assert_eq!(p.len(), 6);
        assert!(p.coeff(5).abs() < 1e-14);
    }

    #[test]
    fn numerator_matches_density() {
        let b = bcf(&[c(1.0, 1.0), c(2.0, 1.0)], &[c(1.0, 0.0), c(2.0, 0.0)]);
        let p = spectral_numerator(&b);
        for w in [-3.0, 0.0, 0.7, 4.0] {
            let q: f64 = b.lambdas().iter().map(|l| (l - c(0.0, w)).norm_sqr()).product();
            assert!((p.eval(w) / q - b.spectral_density(w).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_changing_density_is_unphysical() {
        let b = bcf(&[c(1.0, 0.0), c(2.0, 0.0)], &[c(1.0, 0.0), c(-1.0, 0.0)]);
        let r = certify_positivity(&b, &CertConfig::default()).unwrap();
        assert!(!r.is_physical);
        assert_eq!(r.polynomial_verdict, Some(false));
        assert!(r.min_spectral_value < 0.0);
        let at_witness = b.spectral_density(r.witness_frequency).unwrap();
        assert!((at_witness - r.min_spectral_value).abs() < 1e-15);
        // P = 4 - 2 omega^2 has simple roots at +-sqrt(2).
        let roots: Vec<f64> = r.real_root_multiplicities.iter().map(|x| x.0).collect();
        assert_eq!(r.real_root_multiplicities.len(), 2);
        assert!(roots.iter().all(|x| (x.abs() - 2f64.sqrt()).abs() < 1e-9));
    }

    #[test]
    fn double_real_root_is_physical() {
        // v(omega) = 1/(1 - i omega) - 2/(2 - i omega) vanishes at omega = 0.
        let p = PositiveParametrization::new(vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(1.0, 0.0), c(-2.0, 0.0)])
            .unwrap();
        let b = amplitudes_from_residues(&p);
        let r = certify_positivity(&b, &CertConfig::default()).unwrap();
        assert!(r.is_physical);
        assert_eq!(r.real_root_multiplicities.len(), 1);
        assert_eq!(r.real_root_multiplicities[0].1, 2);
        assert!(r.real_root_multiplicities[0].0.abs() < 1e-7);
    }

    #[test]
    fn degenerate_lambdas_rejected() {
        let b = bcf(&[c(1.0, 1.0), c(1.0, 1.0)], &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            certify_positivity(&b, &CertConfig::default()),
            Err(Error::DegenerateLambdas { .. })
        ));
    }

    #[test]
    fn negative_leading_coefficient() {
        // Large-omega tail (2 G1 gamma1 + 2 G2 gamma2)/omega^2 = (2 - 2.4)/omega^2 < 0.
        let b = bcf(&[c(1.0, 0.0), c(2.0, 0.0)], &[c(1.0, 0.0), c(-0.6, 0.0)]);
        let r = certify_positivity(&b, &CertConfig::default()).unwrap();
        assert!(!r.is_physical);
        assert!(r.min_spectral_value < 0.0);
    }

    #[test]
    fn zero_bcf_is_physical() {
        let b = bcf(&[c(1.0, 0.0)], &[c(0.0, 0.0)]);
        assert!(certify_positivity(&b, &CertConfig::default()).unwrap().is_physical);
    }
}
