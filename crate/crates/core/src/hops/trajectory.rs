use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::noise::NoisePath;
use crate::bcf::ExponentialBcf;
use crate::error::{Error, Result};
use crate::fock::{embed_system_operator, mode_lowering, number_operator, HilbertLayout, SparseMatrix};
use crate::integrate::{Integrator, Stepper};
use crate::linalg::{sqrt_principal, CMat, I};

/// Vacuum norms below this count as collapsed.
pub const NORM_COLLAPSE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopsVariant {
    Linear,
    Nonlinear,
    Nuhops,
}

impl std::str::FromStr for HopsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            "nuhops" => Ok(Self::Nuhops),
            other => Err(Error::InvalidInput(format!("unknown HOPS variant {other:?}"))),
        }
    }
}

/// Operators shared by all trajectories of one problem.
#[derive(Debug, Clone)]
pub struct HopsSystem {
    layout: HilbertLayout,
    amplitudes: Vec<Complex64>,
    lambdas: Vec<Complex64>,
    s_sys: CMat,
    s: SparseMatrix,
    /// `-i H - sum lambda_j N_j`.
    free: SparseMatrix,
    /// `sum sqrt(G_j) (b_j + b_j^H)`.
    ladder: SparseMatrix,
    /// `S * ladder`.
    s_ladder: SparseMatrix,
    /// `sum sqrt(G_j) b_j`.
    lowering: SparseMatrix,
    modes: Vec<SparseMatrix>,
}

impl HopsSystem {
    pub fn new(h_sys: &CMat, s_op: &CMat, bcf: &ExponentialBcf, layout: &HilbertLayout) -> Result<Self> {
        let d = layout.system_dim();
        if h_sys.shape() != (d, d) || s_op.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "H_sys {:?} and S {:?} must be {d}x{d}",
                h_sys.shape(),
                s_op.shape()
            )));
        }
        if layout.modes() != bcf.len() {
            return Err(Error::ShapeMismatch(format!(
                "layout has {} modes, bcf has {} terms",
                layout.modes(),
                bcf.len()
            )));
        }
        let dim = layout.dim();
        let s = embed_system_operator(layout, s_op)?.matrix;
        let mut free = embed_system_operator(layout, h_sys)?.matrix.scale(-I);
        let mut ladder = SparseMatrix::zeros(dim, dim);
        let mut lowering = SparseMatrix::zeros(dim, dim);
        let mut modes = Vec::with_capacity(bcf.len());
        for (j, (lambda, g)) in bcf.lambdas().iter().zip(bcf.amplitudes()).enumerate() {
            let sg = sqrt_principal(*g);
            let b = mode_lowering(layout, j)?.matrix;
            free = free.add(&number_operator(layout, j)?.matrix.scale(-*lambda));
            ladder = ladder.add(&b.add(&b.adjoint()).scale(sg));
            lowering = lowering.add(&b.scale(sg));
            modes.push(b);
        }
        Ok(Self {
            layout: layout.clone(),
            amplitudes: bcf.amplitudes().to_vec(),
            lambdas: bcf.lambdas().to_vec(),
            s_ladder: s.matmul(&ladder),
            s_sys: s_op.clone(),
            s,
            free,
            ladder,
            lowering,
            modes,
        })
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn vacuum(&self, psi: &CMat) -> Vec<Complex64> {
        let v = self.layout.vacuum_index();
        (0..self.layout.system_dim()).map(|a| psi[(self.layout.flat(a, v), 0)]).collect()
    }

    /// `<S>` in the normalized vacuum component.
    fn vacuum_expectation(&self, psi: &CMat, t: f64) -> Result<Complex64> {
        let v = self.layout.vacuum_index();
        let d = self.layout.system_dim();
        let vac: Vec<Complex64> = (0..d).map(|a| psi[(self.layout.flat(a, v), 0)]).collect();
        let norm: f64 = vac.iter().map(|z| z.norm_sqr()).sum();
        if norm.sqrt() < NORM_COLLAPSE_TOL {
            return Err(Error::NormCollapse { t, norm: norm.sqrt() });
        }
        let mut num = Complex64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                num += vac[a].conj() * self.s_sys[(a, b)] * vac[b];
            }
        }
        Ok(num / norm)
    }

    fn linear_rhs(&self, y: &CMat, z: Complex64) -> CMat {
        let mut out = self.free.mul_dense(y);
        let ladder = self.s_ladder.mul_dense(y);
        let s_y = self.s.mul_dense(y);
        out.zip_zip_apply(&ladder, &s_y, |o, l, s| *o += -I * l + z * s);
        out
    }
}

/// Per-trajectory record at the output times.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub variant: HopsVariant,
    pub times: Vec<f64>,
    /// Vacuum component `psi^(0)` at each output time.
    #[serde(skip)]
    pub vacuum: Vec<Vec<Complex64>>,
    /// Full state norm `<psi|psi>^(1/2)`.
    pub norms: Vec<f64>,
    /// `<b_k>` in the propagated state, per time and mode.
    #[serde(skip)]
    pub mode_amplitudes: Vec<Vec<Complex64>>,
    /// `<S>` in the normalized vacuum component.
    #[serde(skip)]
    pub coupling_expectation: Vec<Complex64>,
    /// Noise shift `z~* - z*` (nonlinear) or `mu_k` (nuHOPS); empty for linear.
    #[serde(skip)]
    pub registers: Vec<Vec<Complex64>>,
}

fn output_indices(noise: &NoisePath, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidInput("output stride must be positive".into()));
    }
    let n = noise.n_steps();
    let mut idx: Vec<usize> = (0..=n).step_by(stride).collect();
    if *idx.last().unwrap() != n {
        idx.push(n);
    }
    Ok(idx)
}

fn initial_state(system: &HopsSystem, psi0: &[Complex64]) -> Result<CMat> {
    let d = system.layout.system_dim();
    if psi0.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "initial state has length {}, system dimension is {d}",
            psi0.len()
        )));
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("initial state must be normalized, norm is {norm}")));
    }
    let n = system.modes.len();
    let mut y = CMat::zeros(system.dim() + n, 1);
    for (a, z) in psi0.iter().enumerate() {
        y[(system.layout.flat(a, system.layout.vacuum_index()), 0)] = *z;
    }
    Ok(y)
}

/// Splits `[psi; registers]`.
fn state_part(system: &HopsSystem, y: &CMat) -> CMat {
    y.rows(0, system.dim()).into_owned()
}

fn record(system: &HopsSystem, traj: &mut Trajectory, y: &CMat, t: f64) -> Result<()> {
    let psi = state_part(system, y);
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    traj.times.push(t);
    traj.vacuum.push(system.vacuum(&psi));
    traj.norms.push(norm2.sqrt());
    traj.mode_amplitudes.push(
        system
            .modes
            .iter()
            .map(|b| {
                let bpsi = b.mul_dense(&psi);
                psi.iter().zip(bpsi.iter()).map(|(p, q)| p.conj() * q).sum::<Complex64>() / norm2
            })
            .collect(),
    );
    traj.coupling_expectation.push(match traj.variant {
        HopsVariant::Linear => system.vacuum_expectation(&psi, t).unwrap_or(Complex64::new(f64::NAN, 0.0)),
        _ => system.vacuum_expectation(&psi, t)?,
    });
    let n = system.modes.len();
    traj.registers.push(match traj.variant {
        HopsVariant::Linear => Vec::new(),
        _ => (0..n).map(|k| y[(system.dim() + k, 0)]).collect(),
    });
    Ok(())
}

fn run<F>(
    system: &HopsSystem,
    psi0: &[Complex64],
    noise: &NoisePath,
    integrator: Integrator,
    stride: usize,
    variant: HopsVariant,
    mut rhs: F,
) -> Result<Trajectory>
where
    F: FnMut(f64, &CMat) -> Result<CMat>,
{
    let outputs = output_indices(noise, stride)?;
    let mut y = initial_state(system, psi0)?;
    let mut traj = Trajectory {
        variant,
        times: Vec::with_capacity(outputs.len()),
        vacuum: Vec::with_capacity(outputs.len()),
        norms: Vec::with_capacity(outputs.len()),
        mode_amplitudes: Vec::with_capacity(outputs.len()),
        coupling_expectation: Vec::with_capacity(outputs.len()),
        registers: Vec::with_capacity(outputs.len()),
    };
    record(system, &mut traj, &y, 0.0)?;
    let mut stepper = Stepper::new(integrator)?;
    let mut next_output = 1;
    for k in 0..noise.n_steps() {
        let (t0, t1) = (k as f64 * noise.dt, (k + 1) as f64 * noise.dt);
        // The noise derivative jumps at grid points.
        stepper.reset_derivative();
        y = stepper.advance(&mut rhs, y, t0, t1)?;
        if next_output < outputs.len() && outputs[next_output] == k + 1 {
            record(system, &mut traj, &y, t1)?;
            next_output += 1;
        }
    }
    Ok(traj)
}

/// `d phi = [-i H + S z_t^* - i sum S sqrt(G_j)(b_j + b_j^H) - sum lambda_j N_j] phi`.
pub fn propagate_linear_hops(
    system: &HopsSystem,
    psi0: &[Complex64],
    noise: &NoisePath,
    integrator: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    let dim = system.dim();
    let n = system.modes.len();
    run(system, psi0, noise, integrator, stride, HopsVariant::Linear, |t, y| {
        let psi = y.rows(0, dim).into_owned();
        let d = system.linear_rhs(&psi, noise.at(t));
        let mut out = CMat::zeros(dim + n, 1);
        out.rows_mut(0, dim).copy_from(&d);
        Ok(out)
    })
}

/// Nonlinear HOPS with the shifted process `z~* = z* + sum_k m_k`, where the
/// memory registers obey `dm_k = -conj(lambda_k) m_k + conj(G_k) <S>`.
pub fn propagate_nonlinear_hops(
    system: &HopsSystem,
    psi0: &[Complex64],
    noise: &NoisePath,
    integrator: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    let dim = system.dim();
    let n = system.modes.len();
    run(system, psi0, noise, integrator, stride, HopsVariant::Nonlinear, |t, y| {
        let psi = y.rows(0, dim).into_owned();
        let expect_s = system.vacuum_expectation(&psi, t)?;
        let memory: Complex64 = (0..n).map(|k| y[(dim + k, 0)]).sum();
        let mut d = system.linear_rhs(&psi, noise.at(t) + memory);
        let low = system.lowering.mul_dense(&psi);
        d.zip_apply(&low, |o, l| *o += I * expect_s * l);
        let mut out = CMat::zeros(dim + n, 1);
        out.rows_mut(0, dim).copy_from(&d);
        for k in 0..n {
            out[(dim + k, 0)] =
                -system.lambdas[k].conj() * y[(dim + k, 0)] + system.amplitudes[k].conj() * expect_s;
        }
        Ok(out)
    })
}

/// Near-unitary HOPS on the shifted state `psi = exp(-sum mu_k / sqrt(G_k) b_k^H) phi`
/// with `dmu_k = -lambda_k mu_k - i G_k <S>`:
///
/// ```text
/// K = -i [H + S sum (mu + mu^*) + (S - <S>) sum sqrt(G)(b + b^H) + Im(lambda) N]
///     + (S - <S>) z^* - Re(lambda) N
/// d psi = K psi - Re(<K>) psi
/// ```
pub fn propagate_nuhops(
    system: &HopsSystem,
    psi0: &[Complex64],
    noise: &NoisePath,
    integrator: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    let dim = system.dim();
    let n = system.modes.len();
    run(system, psi0, noise, integrator, stride, HopsVariant::Nuhops, |t, y| {
        let psi = y.rows(0, dim).into_owned();
        let expect_s = system.vacuum_expectation(&psi, t)?;
        let z = noise.at(t);
        let mu_sum: f64 = (0..n).map(|k| 2.0 * y[(dim + k, 0)].re).sum();
        let mut k_psi = system.free.mul_dense(&psi);
        let s_ladder = system.s_ladder.mul_dense(&psi);
        let ladder = system.ladder.mul_dense(&psi);
        let s_psi = system.s.mul_dense(&psi);
        let s_coef = z - I * mu_sum;
        for r in 0..dim {
            k_psi[(r, 0)] += -I * s_ladder[(r, 0)] + I * expect_s * ladder[(r, 0)] + s_coef * s_psi[(r, 0)]
                - z * expect_s * psi[(r, 0)];
        }
        let norm2: f64 = psi.iter().map(|p| p.norm_sqr()).sum();
        let mean: Complex64 = psi.iter().zip(k_psi.iter()).map(|(p, k)| p.conj() * k).sum::<Complex64>() / norm2;
        let mut out = CMat::zeros(dim + n, 1);
        for r in 0..dim {
            out[(r, 0)] = k_psi[(r, 0)] - mean.re * psi[(r, 0)];
        }
        for k in 0..n {
            out[(dim + k, 0)] = -system.lambdas[k] * y[(dim + k, 0)] - I * system.amplitudes[k] * expect_s;
        }
        Ok(out)
    })
}

pub fn propagate(
    variant: HopsVariant,
    system: &HopsSystem,
    psi0: &[Complex64],
    noise: &NoisePath,
    integrator: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    match variant {
        HopsVariant::Linear => propagate_linear_hops(system, psi0, noise, integrator, stride),
        HopsVariant::Nonlinear => propagate_nonlinear_hops(system, psi0, noise, integrator, stride),
        HopsVariant::Nuhops => propagate_nuhops(system, psi0, noise, integrator, stride),
    }
}
