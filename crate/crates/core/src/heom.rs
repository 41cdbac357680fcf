//! Hierarchical equations of motion as a single operator equation on the
//! system (x) dissipon space. The auxiliary matrices are the number-state blocks
//! `rho^(n,m) = <n| varrho |m>` and the physical state is the vacuum block.
//!
//! ```text
//! d varrho = L varrho + varrho L^H + i (B varrho S - S varrho B^H)
//! L = -i H - sum_j lambda_j b_j^H b_j - i S sum_j sqrt(G_j) (b_j + b_j^H)
//! B = sum_j sqrt(G_j) b_j
//! ```

use num_complex::Complex64;
use serde::Serialize;

use crate::bcf::ExponentialBcf;
use crate::error::{Error, Result};
use crate::fock::{
    boundary_weight, embed_system_operator, fock_block, mode_lowering, number_operator, vacuum_product,
    vacuum_project, HilbertLayout, SparseMatrix,
};
use crate::integrate::{check_times, Integrator, Stepper};
use crate::linalg::{frobenius, sqrt_principal, CMat, I};

/// Relative boundary-shell weight above which a run is flagged as under-truncated.
pub const TRUNCATION_WARNING_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct HeomGenerator {
    layout: HilbertLayout,
    h_sys: CMat,
    s_op: CMat,
    bcf: ExponentialBcf,
    l: SparseMatrix,
    l_adj: SparseMatrix,
    s_full: SparseMatrix,
    b: SparseMatrix,
    b_adj: SparseMatrix,
}

fn check_system(layout: &HilbertLayout, h_sys: &CMat, s_op: &CMat) -> Result<()> {
    let d = layout.system_dim();
    if h_sys.shape() != (d, d) || s_op.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "H_sys {:?} and S {:?} must be {d}x{d}",
            h_sys.shape(),
            s_op.shape()
        )));
    }
    Ok(())
}

pub fn build_generator(
    h_sys: &CMat,
    s_op: &CMat,
    bcf: &ExponentialBcf,
    layout: &HilbertLayout,
) -> Result<HeomGenerator> {
    check_system(layout, h_sys, s_op)?;
    if layout.modes() != bcf.len() {
        return Err(Error::ShapeMismatch(format!(
            "layout has {} modes, bcf has {} terms",
            layout.modes(),
            bcf.len()
        )));
    }
    let dim = layout.dim();
    let h_full = embed_system_operator(layout, h_sys)?.matrix;
    let s_full = embed_system_operator(layout, s_op)?.matrix;
    let mut l = h_full.scale(-I);
    let mut b = SparseMatrix::zeros(dim, dim);
    let mut ladder_sum = SparseMatrix::zeros(dim, dim);
    for (j, (lambda, g)) in bcf.lambdas().iter().zip(bcf.amplitudes()).enumerate() {
        let sg = sqrt_principal(*g);
        let bj = mode_lowering(layout, j)?.matrix;
        let nj = number_operator(layout, j)?.matrix;
        l = l.add(&nj.scale(-*lambda));
        b = b.add(&bj.scale(sg));
        ladder_sum = ladder_sum.add(&bj.add(&bj.adjoint()).scale(sg));
    }
    l = l.add(&s_full.matmul(&ladder_sum).scale(-I));
    Ok(HeomGenerator {
        layout: layout.clone(),
        h_sys: h_sys.clone(),
        s_op: s_op.clone(),
        bcf: bcf.clone(),
        l_adj: l.adjoint(),
        l,
        b_adj: b.adjoint(),
        b,
        s_full,
    })
}

impl HeomGenerator {
    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn bcf(&self) -> &ExponentialBcf {
        &self.bcf
    }

    pub fn system_hamiltonian(&self) -> &CMat {
        &self.h_sys
    }

    pub fn coupling_operator(&self) -> &CMat {
        &self.s_op
    }

    /// `d varrho / dt`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = self.l.mul_dense(rho);
        self.l_adj.dense_mul_into(rho, &mut out);
        let b_rho = self.b.mul_dense(rho);
        let b_rho_s = self.s_full.dense_mul(&b_rho);
        let rho_bd = self.b_adj.dense_mul(rho);
        let s_rho_bd = self.s_full.mul_dense(&rho_bd);
        out.zip_zip_apply(&b_rho_s, &s_rho_bd, |o, x, y| *o += I * (x - y));
        out
    }

    /// Dense superoperator in column-stacked `vec(rho)` convention, for diagnostics.
    pub fn to_dense_superoperator(&self) -> CMat {
        let n = self.layout.dim();
        let mut sup = CMat::zeros(n * n, n * n);
        for col in 0..n * n {
            let mut e = CMat::zeros(n, n);
            e[(col % n, col / n)] = Complex64::new(1.0, 0.0);
            let image = self.apply(&e);
            for (row, v) in image.iter().enumerate() {
                sup[(row, col)] = *v;
            }
        }
        sup
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyState {
    pub varrho: CMat,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_boundary_weight: f64,
    pub truncation_warning: bool,
}

#[derive(Debug, Clone)]
pub struct HeomRun {
    pub states: Vec<HierarchyState>,
    pub diagnostics: RunDiagnostics,
}

fn validate_density(rho: &CMat, d: usize) -> Result<()> {
    if rho.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!("initial state is {:?}, expected {d}x{d}", rho.shape())));
    }
    let scale = frobenius(rho).max(1.0);
    if frobenius(&(rho - rho.adjoint())) > 1e-10 * scale {
        return Err(Error::InvalidInput("initial state is not Hermitian".into()));
    }
    if (rho.trace().re - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("initial state must have unit trace".into()));
    }
    let (evals, _) = crate::linalg::hermitian_eigen(rho);
    if evals[0] < -1e-10 {
        return Err(Error::InvalidInput("initial state is not positive semi-definite".into()));
    }
    Ok(())
}

pub(crate) fn validate_initial_state(rho: &CMat, d: usize) -> Result<()> {
    validate_density(rho, d)
}

/// Propagates `rho0_sys (x) |vac><vac|` and returns the full hierarchy at each time.
pub fn propagate(gen: &HeomGenerator, rho0_sys: &CMat, times: &[f64], integrator: Integrator) -> Result<HeomRun> {
    validate_density(rho0_sys, gen.layout.system_dim())?;
    check_times(times)?;
    let mut stepper = Stepper::new(integrator)?;
    let mut rhs = |_t: f64, y: &CMat| Ok(gen.apply(y));
    let mut y = vacuum_product(&gen.layout, rho0_sys)?;
    let mut states = vec![HierarchyState {
        varrho: y.clone(),
        time: times[0],
    }];
    let mut max_boundary: f64 = 0.0;
    for w in times.windows(2) {
        y = stepper.advance(&mut rhs, y, w[0], w[1])?;
        max_boundary = max_boundary.max(boundary_weight(&gen.layout, &y));
        states.push(HierarchyState {
            varrho: y.clone(),
            time: w[1],
        });
    }
    Ok(HeomRun {
        states,
        diagnostics: RunDiagnostics {
            accepted_steps: stepper.stats.accepted,
            rejected_steps: stepper.stats.rejected,
            max_boundary_weight: max_boundary,
            truncation_warning: max_boundary > TRUNCATION_WARNING_THRESHOLD,
        },
    })
}

/// Raw vacuum block `<vac| varrho |vac>`.
pub fn root_block(layout: &HilbertLayout, state: &HierarchyState) -> CMat {
    vacuum_project(layout, &state.varrho).expect("state matches its layout")
}

#[derive(Debug, Clone)]
pub struct SystemReadout {
    pub rho: CMat,
    /// `||rho - rho^H||_F` before symmetrization.
    pub hermiticity_defect: f64,
}

/// Hermitized vacuum block.
pub fn extract_system(layout: &HilbertLayout, state: &HierarchyState) -> SystemReadout {
    let root = root_block(layout, state);
    SystemReadout {
        hermiticity_defect: frobenius(&(&root - root.adjoint())),
        rho: (&root + root.adjoint()).scale(0.5),
    }
}

/// `max_{n,m} ||<n|varrho|m> - <m|varrho|n>^H||_F`.
pub fn mirror_defect(layout: &HilbertLayout, varrho: &CMat) -> f64 {
    let k = layout.fock_dim();
    let mut worst: f64 = 0.0;
    for n in 0..k {
        for m in n..k {
            let a = fock_block(layout, varrho, n, m);
            let b = fock_block(layout, varrho, m, n);
            worst = worst.max(frobenius(&(a - b.adjoint())));
        }
    }
    worst
}

#[cfg(test)]
pub(crate) mod oracles {
    use crate::bcf::ExponentialBcf;

    /// `4 int_0^t ds int_0^s du Re alpha(u)` by nested composite Simpson rules:
    /// the dephasing exponent of the coherence for `S = sigma_z`.
    pub fn dephasing_exponent(bcf: &ExponentialBcf, t: f64) -> f64 {
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for k in 1..n {
                acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        let inner = |s: f64| simpson(&|u| bcf.eval(u).re, 0.0, s, 200);
        4.0 * simpson(&inner, 0.0, t, 200)
    }
}
