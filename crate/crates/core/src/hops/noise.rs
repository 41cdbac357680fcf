//! Coloured complex Gaussian noise with exponential autocorrelation, generated
//! as a sum of Ornstein-Uhlenbeck components driven by one white noise.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bcf::{amplitudes_from_residues, PositiveParametrization};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, sqrt_principal, CMat, CVec};
use crate::pseudomode::{build_diagonal_ou, diagonal_covariance, noise_amplitudes};

/// `dt * max|lambda|` above which the grid is considered coarse.
pub const COARSE_GRID_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisePath {
    pub dt: f64,
    /// `z_t^*` at `t = k dt`, `k = 0..=n_steps`.
    pub samples: Vec<Complex64>,
    pub seed: u64,
    pub stream: u64,
}

impl NoisePath {
    pub fn zeros(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            samples: vec![Complex64::new(0.0, 0.0); n_steps + 1],
            seed: 0,
            stream: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    /// Piecewise-linear interpolation; constant beyond the last sample.
    pub fn at(&self, t: f64) -> Complex64 {
        let x = (t / self.dt).max(0.0);
        let k = (x.floor() as usize).min(self.n_steps());
        if k >= self.n_steps() {
            return self.samples[self.n_steps()];
        }
        let frac = x - k as f64;
        self.samples[k] * (1.0 - frac) + self.samples[k + 1] * frac
    }
}

/// Precomputed exact one-step propagator of the OU components.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    dt: f64,
    decay: Vec<Complex64>,
    increment_factor: CMat,
    initial_factor: CMat,
    readout: Vec<Complex64>,
    pub coarse: bool,
}

fn standard_complex_normal(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        }),
    )
}

impl NoiseGenerator {
    pub fn new(p: &PositiveParametrization, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("noise step must be positive, got {dt}")));
        }
        let ou = build_diagonal_ou(p)?;
        let c = noise_amplitudes(&ou);
        let lambdas = p.lambdas();
        let n = lambdas.len();
        let cov = diagonal_covariance(lambdas, &c);
        let initial_factor = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::CholeskyFailure("stationary covariance is not positive definite".into()))?
            .l();
        let increment = CMat::from_fn(n, n, |j, k| {
            let s = lambdas[j] + lambdas[k].conj();
            c[j] * c[k].conj() * (Complex64::new(1.0, 0.0) - (-s * dt).exp()) / s
        });
        let bcf = amplitudes_from_residues(p);
        let max_rate = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max);
        Ok(Self {
            dt,
            decay: lambdas.iter().map(|l| (-l * dt).exp()).collect(),
            increment_factor: psd_factor(&increment),
            initial_factor,
            readout: bcf.amplitudes().iter().map(|g| sqrt_principal(*g)).collect(),
            coarse: dt * max_rate > COARSE_GRID_THRESHOLD,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Bit-reproducible for a given `(seed, stream)`.
    pub fn sample(&self, n_steps: usize, seed: u64, stream: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let n = self.decay.len();
        let mut z = &self.initial_factor * standard_complex_normal(&mut rng, n);
        let mut samples = Vec::with_capacity(n_steps + 1);
        let emit = |z: &CVec| -> Complex64 {
            self.readout.iter().zip(z.iter()).map(|(s, zj)| s * zj).sum::<Complex64>().conj()
        };
        samples.push(emit(&z));
        for _ in 0..n_steps {
            let eta = &self.increment_factor * standard_complex_normal(&mut rng, n);
            for j in 0..n {
                z[j] = self.decay[j] * z[j] + eta[j];
            }
            samples.push(emit(&z));
        }
        NoisePath {
            dt: self.dt,
            samples,
            seed,
            stream,
        }
    }
}

pub fn generate_noise(
    p: &PositiveParametrization,
    dt: f64,
    n_steps: usize,
    seed: u64,
    stream: u64,
) -> Result<NoisePath> {
    Ok(NoiseGenerator::new(p, dt)?.sample(n_steps, seed, stream))
}

/// Empirical two-time moments at one `(t, s)` probe pair.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationProbe {
    pub t: f64,
    pub s: f64,
    #[serde(with = "crate::serde_c64::scalar")]
    pub estimate: Complex64,
    #[serde(with = "crate::serde_c64::scalar")]
    pub expected: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr: (f64, f64),
    /// Largest of the real and imaginary deviations in units of their standard errors.
    pub z_score: f64,
    #[serde(with = "crate::serde_c64::scalar")]
    pub pseudo_estimate: Complex64,
    pub pseudo_z_score: f64,
    #[serde(with = "crate::serde_c64::scalar")]
    pub mean_t: Complex64,
    pub mean_z_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStatistics {
    pub paths: usize,
    pub probes: Vec<CorrelationProbe>,
}

impl NoiseStatistics {
    pub fn max_z_score(&self) -> f64 {
        self.probes.iter().map(|p| p.z_score).fold(0.0, f64::max)
    }

    pub fn max_auxiliary_z_score(&self) -> f64 {
        self.probes
            .iter()
            .map(|p| p.pseudo_z_score.max(p.mean_z_score))
            .fold(0.0, f64::max)
    }
}

#[derive(Default, Clone)]
struct Moments {
    n: f64,
    sum: Complex64,
    sum_re2: f64,
    sum_im2: f64,
}

impl Moments {
    fn push(&mut self, x: Complex64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_re2 += x.re * x.re;
        self.sum_im2 += x.im * x.im;
    }

    fn merge(mut self, o: &Self) -> Self {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_re2 += o.sum_re2;
        self.sum_im2 += o.sum_im2;
        self
    }

    fn mean(&self) -> Complex64 {
        self.sum / self.n
    }

    fn stderr(&self) -> (f64, f64) {
        let m = self.mean();
        let var_re = (self.sum_re2 / self.n - m.re * m.re).max(0.0) * self.n / (self.n - 1.0);
        let var_im = (self.sum_im2 / self.n - m.im * m.im).max(0.0) * self.n / (self.n - 1.0);
        ((var_re / self.n).sqrt(), (var_im / self.n).sqrt())
    }

    fn z_score(&self, expected: Complex64) -> f64 {
        let m = self.mean();
        let (se_re, se_im) = self.stderr();
        let z = |d: f64, se: f64| if se > 0.0 { d.abs() / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        z(m.re - expected.re, se_re).max(z(m.im - expected.im, se_im))
    }
}

/// Monte-Carlo estimate of `E[z_t z_s^*]`, `E[z_t z_s]` and `E[z_t]` on every
/// pair `t >= s` of the probe times (multiples of `dt`).
pub fn noise_statistics(
    p: &PositiveParametrization,
    dt: f64,
    probe_times: &[f64],
    paths: usize,
    seed: u64,
) -> Result<NoiseStatistics> {
    if paths < 2 {
        return Err(Error::InsufficientTrajectories(paths));
    }
    let generator = NoiseGenerator::new(p, dt)?;
    let bcf = amplitudes_from_residues(p);
    let idx: Vec<usize> = probe_times.iter().map(|t| (t / dt).round() as usize).collect();
    let n_steps = idx.iter().copied().max().unwrap_or(0);
    let pairs: Vec<(usize, usize)> = (0..idx.len())
        .flat_map(|a| (0..idx.len()).map(move |b| (a, b)))
        .collect();
    let empty = || vec![(Moments::default(), Moments::default(), Moments::default()); pairs.len()];
    let chunk = 1024usize;
    let partials: Vec<Vec<(Moments, Moments, Moments)>> = (0..paths.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = empty();
            for path in (c * chunk)..((c + 1) * chunk).min(paths) {
                let noise = generator.sample(n_steps, seed, path as u64);
                for (slot, &(a, b)) in acc.iter_mut().zip(&pairs) {
                    let zt = noise.samples[idx[a]].conj();
                    let zs = noise.samples[idx[b]].conj();
                    slot.0.push(zt * zs.conj());
                    slot.1.push(zt * zs);
                    slot.2.push(zt);
                }
            }
            acc
        })
        .collect();
    let totals = partials.iter().fold(empty(), |acc, part| {
        acc.into_iter()
            .zip(part)
            .map(|(x, y)| (x.0.merge(&y.0), x.1.merge(&y.1), x.2.merge(&y.2)))
            .collect()
    });
    let zero = Complex64::new(0.0, 0.0);
    let probes = pairs
        .iter()
        .zip(totals)
        .map(|(&(a, b), (cross, pseudo, mean))| {
            let tau = (idx[a] as f64 - idx[b] as f64) * dt;
            let expected = bcf.eval(tau);
            CorrelationProbe {
                t: idx[a] as f64 * dt,
                s: idx[b] as f64 * dt,
                estimate: cross.mean(),
                expected,
                stderr: cross.stderr(),
                z_score: cross.z_score(expected),
                pseudo_estimate: pseudo.mean(),
                pseudo_z_score: pseudo.z_score(zero),
                mean_t: mean.mean(),
                mean_z_score: mean.z_score(zero),
            }
        })
        .collect();
    Ok(NoiseStatistics { paths, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::seeded_parametrization;
    use crate::linalg::c;

    fn single(g: f64, lambda: Complex64) -> PositiveParametrization {
        PositiveParametrization::new(vec![lambda], vec![c((2.0 * lambda.re * g).sqrt(), 0.0)]).unwrap()
    }

    #[test]
    fn reproducible_streams() {
        let p = seeded_parametrization(3, 2);
        let g = NoiseGenerator::new(&p, 0.01).unwrap();
        assert_eq!(g.sample(50, 7, 3), g.sample(50, 7, 3));
        assert_ne!(g.sample(50, 7, 3).samples, g.sample(50, 7, 4).samples);
        assert_ne!(g.sample(50, 7, 3).samples, g.sample(50, 8, 3).samples);
    }

    #[test]
    fn interpolation() {
        let path = NoisePath {
            dt: 0.5,
            samples: vec![c(0.0, 0.0), c(1.0, 2.0), c(3.0, 0.0)],
            seed: 0,
            stream: 0,
        };
        assert_eq!(path.at(0.25), c(0.5, 1.0));
        assert_eq!(path.at(0.75), c(2.0, 1.0));
        assert_eq!(path.at(2.0), c(3.0, 0.0));
    }

    #[test]
    fn coarse_grid_flagged() {
        let p = single(0.5, c(1.0, 2.0));
        assert!(!NoiseGenerator::new(&p, 0.01).unwrap().coarse);
        assert!(NoiseGenerator::new(&p, 0.1).unwrap().coarse);
    }

    #[test]
    fn single_mode_statistics() {
        let lambda = c(1.0, 2.0);
        let stats = noise_statistics(&single(0.5, lambda), 0.05, &[0.0, 0.5, 1.0], 20_000, 11).unwrap();
        assert_eq!(stats.probes.len(), 9);
        for probe in &stats.probes {
            let tau = probe.t - probe.s;
            let expected = if tau >= 0.0 {
                c(0.5, 0.0) * (-lambda * tau).exp()
            } else {
                c(0.5, 0.0) * (lambda.conj() * tau).exp()
            };
            assert!((probe.expected - expected).norm() < 1e-12);
            assert!(probe.z_score < 4.0, "{probe:?}");
            assert!(probe.pseudo_z_score < 4.5 && probe.mean_z_score < 4.5, "{probe:?}");
        }
        // The stored samples are conjugated: E[z_t^* z_0] = conj(alpha(t)).
        let g = NoiseGenerator::new(&single(0.5, lambda), 0.05).unwrap();
        let n = 20_000;
        let mut acc = c(0.0, 0.0);
        for k in 0..n {
            let path = g.sample(20, 5, k);
            acc += path.samples[20] * path.samples[0].conj();
        }
        let est = acc / n as f64;
        assert!((est - c(0.5, 0.0) * (-lambda.conj()).exp()).norm() < 0.03);
    }

    #[test]
    fn stationary_variance() {
        let p = seeded_parametrization(2, 8);
        let bcf = amplitudes_from_residues(&p);
        let stats = noise_statistics(&p, 0.02, &[0.0, 0.4], 20_000, 3).unwrap();
        for probe in stats.probes.iter().filter(|q| q.t == q.s) {
            assert!((probe.expected - bcf.eval(0.0)).norm() < 1e-12);
            assert!(probe.z_score < 4.0);
        }
    }

    #[test]
    fn too_few_paths() {
        let p = single(0.5, c(1.0, 0.0));
        assert!(matches!(noise_statistics(&p, 0.1, &[0.0], 1, 0), Err(Error::InsufficientTrajectories(1))));
    }
}
