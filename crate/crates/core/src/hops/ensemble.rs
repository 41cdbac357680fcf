use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::NoiseGenerator;
use super::trajectory::{propagate, HopsSystem, HopsVariant, Trajectory};
use crate::error::{Error, Result};
use crate::integrate::Integrator;
use crate::linalg::CMat;

/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 50;
/// Largest tolerated fraction of trajectories lost to norm collapse.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    /// Mean of `|psi0><psi0|`.
    Linear,
    /// Mean of `|psi0><psi0| / <psi0|psi0>`.
    Normalized,
}

impl AverageMode {
    pub fn for_variant(variant: HopsVariant) -> Self {
        match variant {
            HopsVariant::Linear => AverageMode::Linear,
            _ => AverageMode::Normalized,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub mean: Vec<CMat>,
    /// Batch-means standard errors of the real and imaginary parts, entry-wise.
    pub stderr_re: Vec<DMatrix<f64>>,
    pub stderr_im: Vec<DMatrix<f64>>,
    pub trajectories: usize,
}

fn projector(v: &[Complex64], mode: AverageMode) -> CMat {
    let d = v.len();
    let mut m = CMat::from_fn(d, d, |a, b| v[a] * v[b].conj());
    if mode == AverageMode::Normalized {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        m.unscale_mut(n);
    }
    m
}

/// Ensemble mean of the vacuum projectors with batch-means standard errors.
/// Trajectories are reduced in the given order.
pub fn ensemble_average(trajectories: &[Trajectory], mode: AverageMode) -> Result<EnsembleEstimate> {
    let n = trajectories.len();
    if n < 2 {
        return Err(Error::InsufficientTrajectories(n));
    }
    let times = trajectories[0].times.clone();
    if trajectories.iter().any(|t| t.times.len() != times.len()) {
        return Err(Error::ShapeMismatch("trajectories have different output grids".into()));
    }
    let d = trajectories[0].vacuum[0].len();
    let batches = BATCHES.min(n);
    let mut mean = Vec::with_capacity(times.len());
    let mut stderr_re = Vec::with_capacity(times.len());
    let mut stderr_im = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let mut batch_sums = vec![CMat::zeros(d, d); batches];
        let mut batch_counts = vec![0usize; batches];
        for (i, traj) in trajectories.iter().enumerate() {
            let b = i * batches / n;
            batch_sums[b] += projector(&traj.vacuum[k], mode);
            batch_counts[b] += 1;
        }
        let total: CMat = batch_sums.iter().fold(CMat::zeros(d, d), |acc, s| acc + s);
        let m = total.unscale(n as f64);
        let means: Vec<CMat> = batch_sums
            .iter()
            .zip(&batch_counts)
            .map(|(s, &c)| s.unscale(c as f64))
            .collect();
        // Pairwise form of the sample variance: exactly zero for identical batches.
        let spread = |part: fn(&Complex64) -> f64| {
            DMatrix::from_fn(d, d, |a, b| {
                let x: Vec<f64> = means.iter().map(|bm| part(&bm[(a, b)])).collect();
                let mut acc = 0.0;
                for i in 0..x.len() {
                    for j in (i + 1)..x.len() {
                        acc += (x[i] - x[j]).powi(2);
                    }
                }
                let var = acc / (batches as f64 * (batches as f64 - 1.0));
                (var / batches as f64).sqrt()
            })
        };
        stderr_re.push(spread(|z| z.re));
        stderr_im.push(spread(|z| z.im));
        mean.push(m);
    }
    Ok(EnsembleEstimate {
        times,
        mean,
        stderr_re,
        stderr_im,
        trajectories: n,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub variant: HopsVariant,
    pub trajectories: usize,
    pub seed: u64,
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
    pub integrator: Integrator,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub estimate: EnsembleEstimate,
    pub excluded: usize,
    /// Largest `| ||psi|| - 1 |` over all kept trajectories and output times.
    pub max_norm_deviation: f64,
    /// Ensemble mean of `<b_k>` per output time and mode.
    pub mean_mode_amplitudes: Vec<Vec<Complex64>>,
    pub coarse_noise_grid: bool,
}

/// Runs `config.trajectories` independent trajectories; trajectory `i` uses noise
/// stream `i`, so results do not depend on scheduling.
pub fn run_ensemble(
    system: &HopsSystem,
    noise: &NoiseGenerator,
    psi0: &[Complex64],
    config: &EnsembleConfig,
) -> Result<EnsembleRun> {
    if config.trajectories < 2 {
        return Err(Error::InsufficientTrajectories(config.trajectories));
    }
    let results: Vec<Result<Trajectory>> = (0..config.trajectories)
        .into_par_iter()
        .map(|i| {
            let path = noise.sample(config.n_steps, config.seed, i as u64);
            propagate(config.variant, system, psi0, &path, config.integrator, config.stride)
        })
        .collect();
    let mut kept = Vec::with_capacity(results.len());
    let mut excluded = 0;
    for r in results {
        match r {
            Ok(t) => kept.push(t),
            Err(Error::NormCollapse { .. }) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if excluded as f64 > MAX_EXCLUDED_FRACTION * config.trajectories as f64 {
        return Err(Error::ExcessiveExclusions {
            excluded,
            total: config.trajectories,
        });
    }
    let estimate = ensemble_average(&kept, AverageMode::for_variant(config.variant))?;
    let max_norm_deviation = kept
        .iter()
        .flat_map(|t| t.norms.iter())
        .map(|n| (n - 1.0).abs())
        .fold(0.0, f64::max);
    let modes = kept[0].mode_amplitudes[0].len();
    let mean_mode_amplitudes = (0..estimate.times.len())
        .map(|k| {
            (0..modes)
                .map(|j| kept.iter().map(|t| t.mode_amplitudes[k][j]).sum::<Complex64>() / kept.len() as f64)
                .collect()
        })
        .collect();
    Ok(EnsembleRun {
        estimate,
        excluded,
        max_norm_deviation,
        mean_mode_amplitudes,
        coarse_noise_grid: noise.coarse,
    })
}
