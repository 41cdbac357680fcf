//! Real polynomials in ascending-coefficient form and companion-matrix root finding.

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    /// `coeffs[k]` multiplies `x^k`.
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn constant(a: f64) -> Self {
        Self { coeffs: vec![a] }
    }

    /// Nominal degree, counting possibly-zero leading coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.len().max(other.len());
        Poly::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_empty() || other.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.len() + other.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|a| a * s).collect())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
    }

    /// `p(s x)` as a polynomial in `x`.
    pub fn rescale_argument(&self, s: f64) -> Poly {
        let mut f = 1.0;
        Poly::new(
            self.coeffs
                .iter()
                .map(|a| {
                    let out = a * f;
                    f *= s;
                    out
                })
                .collect(),
        )
    }

    /// Drops leading coefficients whose magnitude is at most `rel_tol` times the largest one.
    pub fn trimmed(&self, rel_tol: f64) -> Poly {
        let scale = self.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mut coeffs = self.coeffs.clone();
        while let Some(&last) = coeffs.last() {
            if last.abs() <= rel_tol * scale || last == 0.0 {
                coeffs.pop();
            } else {
                break;
            }
        }
        Poly::new(coeffs)
    }

    /// All complex roots, as eigenvalues of the companion matrix. The polynomial
    /// must already be trimmed so that its leading coefficient is non-zero.
    pub fn roots(&self) -> Vec<Complex64> {
        let deg = self.len().saturating_sub(1);
        if deg == 0 {
            return vec![];
        }
        let lead = self.coeffs[deg];
        let mut companion = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            companion[(i, deg - 1)] = -self.coeffs[i] / lead;
        }
        companion.complex_eigenvalues().iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_quadratic() {
        // (x - 1)(x + 2) = x^2 + x - 2
        let p = Poly::new(vec![-2.0, 1.0, 1.0]);
        let mut r: Vec<f64> = p.roots().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        assert!((r[0] + 2.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_pair() {
        // x^2 + 1
        let p = Poly::new(vec![1.0, 0.0, 1.0]);
        let r = p.roots();
        assert!(r.iter().all(|z| (z.im.abs() - 1.0).abs() < 1e-12 && z.re.abs() < 1e-12));
    }

    #[test]
    fn mul_eval_consistent() {
        let a = Poly::new(vec![1.0, -3.0, 2.0]);
        let b = Poly::new(vec![0.5, 4.0]);
        let ab = a.mul(&b);
        for x in [-2.0, 0.3, 5.0] {
            assert!((ab.eval(x) - a.eval(x) * b.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn trimming_and_rescale() {
        let p = Poly::new(vec![1.0, 2.0, 1e-20]);
        assert_eq!(p.trimmed(1e-12).len(), 2);
        let q = p.trimmed(1e-12).rescale_argument(3.0);
        assert!((q.eval(1.0) - p.eval(3.0)).abs() < 1e-12);
    }
}
