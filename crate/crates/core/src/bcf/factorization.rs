use num_complex::Complex64;

use super::positivity::{analyse_roots, CertConfig};
use super::{ExponentialBcf, PositiveParametrization};
use crate::error::{Error, Result};

/// Relative tolerance for matching an upper-half-plane root with its mirror image.
const PAIRING_TOL: f64 = 1e-6;

/// Writes `J(omega) = |v(omega)|^2` with
/// `v(omega) = c prod(omega - Omega) / prod_j (lambda_j - i omega)` and returns the
/// partial-fraction residues `r_j` of `v`.
///
/// `v` keeps half of every even real-root cluster and all upper-half-plane roots
/// of the spectral numerator. The constant `c` is real and positive, fixed by
/// matching `J` at a probe frequency.
pub fn spectral_factorization(bcf: &ExponentialBcf) -> Result<PositiveParametrization> {
    spectral_factorization_with(bcf, &CertConfig::default())
}

pub fn spectral_factorization_with(
    bcf: &ExponentialBcf,
    config: &CertConfig,
) -> Result<PositiveParametrization> {
    bcf.check_hermiticity(config.hermiticity_tol)?;
    bcf.check_distinct(config.lambda_separation)?;
    let n = bcf.len();
    let lambdas = bcf.lambdas().to_vec();

    let structure = analyse_roots(bcf, config)?;
    if !structure.physical {
        let (min_spectral_value, witness_frequency) = structure
            .witnesses
            .iter()
            .map(|&w| (bcf.spectral_density_unchecked(w), w))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::NotPhysical {
            min_spectral_value,
            witness_frequency,
        });
    }
    if structure.numerator.is_empty() {
        return PositiveParametrization::new(lambdas, vec![Complex64::new(0.0, 0.0); n]);
    }

    let mut zeros: Vec<Complex64> = vec![];
    for &(x, mult) in &structure.real {
        for _ in 0..mult / 2 {
            zeros.push(Complex64::new(x, 0.0));
        }
    }
    let (upper, mut lower): (Vec<Complex64>, Vec<Complex64>) =
        structure.complex.iter().partition(|z| z.im > 0.0);
    if upper.len() != lower.len() {
        return Err(Error::RootPairingFailure(format!(
            "{} roots above the real axis, {} below",
            upper.len(),
            lower.len()
        )));
    }
    for z in &upper {
        let (idx, dist) = lower
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z.conj()).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("equal counts");
        if dist > PAIRING_TOL * (1.0 + z.norm()) {
            return Err(Error::RootPairingFailure(format!(
                "no conjugate partner for {z} (closest at distance {dist:e})"
            )));
        }
        lower.swap_remove(idx);
        zeros.push(*z);
    }
    let degree = structure.numerator.len() - 1;
    if 2 * zeros.len() != degree || zeros.len() + 1 > n.max(1) {
        return Err(Error::RootPairingFailure(format!(
            "{} factor roots for a numerator of degree {degree}",
            zeros.len()
        )));
    }

    let shape = |w: f64| -> Complex64 {
        let num: Complex64 = zeros.iter().map(|z| Complex64::new(w, 0.0) - z).product();
        let den: Complex64 = lambdas.iter().map(|l| l - Complex64::new(0.0, w)).product();
        num / den
    };
    // Probe where J is largest among a few natural frequencies.
    let probe = std::iter::once(0.0)
        .chain(lambdas.iter().map(|l| -l.im))
        .chain(lambdas.iter().map(|l| l.im))
        .chain(lambdas.iter().flat_map(|l| [l.norm(), -l.norm()]))
        .map(|w| (w, bcf.spectral_density_unchecked(w)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty probe set");
    let scale = (probe.1.max(0.0) / shape(probe.0).norm_sqr()).sqrt();

    let residues = (0..n)
        .map(|j| {
            let pole = Complex64::new(0.0, -1.0) * lambdas[j];
            let num: Complex64 = zeros.iter().map(|z| pole - z).product();
            let den: Complex64 = (0..n)
                .filter(|&k| k != j)
                .map(|k| lambdas[k] - lambdas[j])
                .product();
            num / den * scale
        })
        .collect();
    PositiveParametrization::new(lambdas, residues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::amplitudes_from_residues;
    use crate::linalg::c;

    #[test]
    fn single_lorentzian_unit_residue() {
        let b = ExponentialBcf::new(vec![c(1.0, 2.0)], vec![c(0.5, 0.0)]).unwrap();
        let p = spectral_factorization(&b).unwrap();
        assert!((p.residues()[0].norm() - 1.0).abs() < 1e-12);
        // c real positive and N = 1 means r itself is real positive.
        assert!(p.residues()[0].im.abs() < 1e-12 && p.residues()[0].re > 0.0);
    }

    #[test]
    fn counterexample_roundtrip() {
        let b = ExponentialBcf::new(vec![c(1.0, 1.0), c(2.0, 1.0)], vec![c(1.0, 0.0), c(2.0, 0.0)])
            .unwrap();
        let p = spectral_factorization(&b).unwrap();
        let back = amplitudes_from_residues(&p);
        for (a, g) in back.amplitudes().iter().zip(b.amplitudes()) {
            assert!((a - g).norm() < 1e-10);
        }
        let sum: Complex64 = p.residues().iter().sum();
        assert!(sum.norm() > 0.1);
    }

    #[test]
    fn unphysical_rejected() {
        let b = ExponentialBcf::new(vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(1.0, 0.0), c(-1.0, 0.0)])
            .unwrap();
        assert!(matches!(spectral_factorization(&b), Err(Error::NotPhysical { .. })));
    }

    #[test]
    fn double_real_root_factorizes() {
        let p = PositiveParametrization::new(vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(1.0, 0.0), c(-2.0, 0.0)])
            .unwrap();
        let b = amplitudes_from_residues(&p);
        let q = spectral_factorization(&b).unwrap();
        let back = amplitudes_from_residues(&q);
        for (a, g) in back.amplitudes().iter().zip(b.amplitudes()) {
            assert!((a - g).norm() < 1e-7 * (1.0 + g.norm()));
        }
    }
}
