//! Pseudomode Lindblad master equation on system (x) truncated pseudomode space.
//!
//! `H = H_sys + S (x) sum_k (conj(g_k) a_k + g_k a_k^H) + sum h_kk' a_k^H a_k'`,
//! dissipators `L_k = sum_k' Gamma_kk' a_k'`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{
    boundary_weight, embed_system_operator, mode_lowering, partial_trace_modes, vacuum_product, HilbertLayout,
    SparseMatrix,
};
use crate::heom::{validate_initial_state, RunDiagnostics};
use crate::integrate::{check_times, Integrator, Stepper};
use crate::linalg::{CMat, I};
use crate::pseudomode::PseudomodeModel;

#[derive(Debug, Clone)]
pub struct LindbladProblem {
    pub h_sys: CMat,
    pub s_op: CMat,
    pub model: PseudomodeModel,
    pub layout: HilbertLayout,
}

impl LindbladProblem {
    pub fn validate(&self) -> Result<()> {
        self.model.validate_shapes()?;
        let d = self.layout.system_dim();
        if self.h_sys.shape() != (d, d) || self.s_op.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "H_sys {:?} and S {:?} must be {d}x{d}",
                self.h_sys.shape(),
                self.s_op.shape()
            )));
        }
        if self.layout.modes() != self.model.modes() {
            return Err(Error::ShapeMismatch(format!(
                "layout has {} modes, model has {}",
                self.layout.modes(),
                self.model.modes()
            )));
        }
        Ok(())
    }
}

/// `d rho = -i H_eff rho + i rho H_eff^H + sum L rho L^H` with `H_eff = H - (i/2) sum L^H L`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    minus_i_heff: SparseMatrix,
    plus_i_heff_adj: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    jumps_adj: Vec<SparseMatrix>,
    hamiltonian: SparseMatrix,
}

pub fn build_liouvillian(prob: &LindbladProblem) -> Result<Liouvillian> {
    prob.validate()?;
    let layout = &prob.layout;
    let dim = layout.dim();
    let model = &prob.model;
    let lowering: Vec<SparseMatrix> = (0..model.modes())
        .map(|k| mode_lowering(layout, k).map(|op| op.matrix))
        .collect::<Result<_>>()?;
    let raising: Vec<SparseMatrix> = lowering.iter().map(SparseMatrix::adjoint).collect();

    let mut field = SparseMatrix::zeros(dim, dim);
    for (k, g) in model.g.iter().enumerate() {
        field = field.add(&lowering[k].scale(g.conj())).add(&raising[k].scale(*g));
    }
    let s_full = embed_system_operator(layout, &prob.s_op)?.matrix;
    let mut h = embed_system_operator(layout, &prob.h_sys)?.matrix.add(&s_full.matmul(&field));
    for k in 0..model.modes() {
        for kp in 0..model.modes() {
            let hk = model.h[(k, kp)];
            if hk != Complex64::new(0.0, 0.0) {
                h = h.add(&raising[k].matmul(&lowering[kp]).scale(hk));
            }
        }
    }

    let mut jumps = Vec::new();
    for k in model.damped_rows() {
        let mut l = SparseMatrix::zeros(dim, dim);
        for kp in 0..model.modes() {
            let gk = model.gamma[(k, kp)];
            if gk != Complex64::new(0.0, 0.0) {
                l = l.add(&lowering[kp].scale(gk));
            }
        }
        jumps.push(l);
    }
    let jumps_adj: Vec<SparseMatrix> = jumps.iter().map(SparseMatrix::adjoint).collect();
    let mut heff = h.clone();
    for (l, ld) in jumps.iter().zip(&jumps_adj) {
        heff = heff.add(&ld.matmul(l).scale(Complex64::new(0.0, -0.5)));
    }
    Ok(Liouvillian {
        minus_i_heff: heff.scale(-I),
        plus_i_heff_adj: heff.adjoint().scale(I),
        jumps,
        jumps_adj,
        hamiltonian: h,
    })
}

impl Liouvillian {
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = self.minus_i_heff.mul_dense(rho);
        self.plus_i_heff_adj.dense_mul_into(rho, &mut out);
        for (l, ld) in self.jumps.iter().zip(&self.jumps_adj) {
            let l_rho = l.mul_dense(rho);
            ld.dense_mul_into(&l_rho, &mut out);
        }
        out
    }

    /// Number of non-trivial dissipators.
    pub fn dissipator_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn hamiltonian(&self) -> &SparseMatrix {
        &self.hamiltonian
    }
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub times: Vec<f64>,
    pub reduced: Vec<CMat>,
    /// `<a_k^H a_k>` per output time and mode.
    pub occupations: Vec<Vec<f64>>,
    pub diagnostics: RunDiagnostics,
}

/// Evolves `rho_sys (x) |vac><vac|` and reduces by partial trace over the pseudomodes.
pub fn propagate_and_reduce(
    prob: &LindbladProblem,
    rho0_sys: &CMat,
    times: &[f64],
    integrator: Integrator,
) -> Result<LindbladRun> {
    let liouvillian = build_liouvillian(prob)?;
    validate_initial_state(rho0_sys, prob.layout.system_dim())?;
    check_times(times)?;
    let numbers: Vec<SparseMatrix> = (0..prob.model.modes())
        .map(|k| crate::fock::number_operator(&prob.layout, k).map(|op| op.matrix))
        .collect::<Result<_>>()?;
    let occupation = |rho: &CMat| -> Vec<f64> {
        numbers
            .iter()
            .map(|n| n.mul_dense(rho).trace().re)
            .collect()
    };
    let mut stepper = Stepper::new(integrator)?;
    let mut rhs = |_t: f64, y: &CMat| Ok(liouvillian.apply(y));
    let mut y = vacuum_product(&prob.layout, rho0_sys)?;
    let mut reduced = vec![partial_trace_modes(&prob.layout, &y)?];
    let mut occupations = vec![occupation(&y)];
    let mut max_boundary: f64 = 0.0;
    for w in times.windows(2) {
        y = stepper.advance(&mut rhs, y, w[0], w[1])?;
        max_boundary = max_boundary.max(boundary_weight(&prob.layout, &y));
        reduced.push(partial_trace_modes(&prob.layout, &y)?);
        occupations.push(occupation(&y));
    }
    Ok(LindbladRun {
        times: times.to_vec(),
        reduced,
        occupations,
        diagnostics: RunDiagnostics {
            accepted_steps: stepper.stats.accepted,
            rejected_steps: stepper.stats.rejected,
            max_boundary_weight: max_boundary,
            truncation_warning: max_boundary > crate::heom::TRUNCATION_WARNING_THRESHOLD,
        },
    })
}

/// Two-time correlation `<A(t) A^H(0)>` with `A = sum conj(g_k) a_k`, from the
/// regression theorem on the truncated pseudomode space (system decoupled).
pub fn regression_bcf(
    model: &PseudomodeModel,
    mode_caps: Vec<usize>,
    times: &[f64],
    integrator: Integrator,
) -> Result<Vec<Complex64>> {
    let layout = HilbertLayout::boxed(1, mode_caps)?;
    let prob = LindbladProblem {
        h_sys: CMat::zeros(1, 1),
        s_op: CMat::zeros(1, 1),
        model: model.clone(),
        layout: layout.clone(),
    };
    let liouvillian = build_liouvillian(&prob)?;
    let dim = layout.dim();
    let mut a = SparseMatrix::zeros(dim, dim);
    for (k, g) in model.g.iter().enumerate() {
        a = a.add(&mode_lowering(&layout, k)?.matrix.scale(g.conj()));
    }
    let vac = vacuum_product(&layout, &CMat::from_element(1, 1, Complex64::new(1.0, 0.0)))?;
    let x0 = a.adjoint().mul_dense(&vac);
    let (xs, _) = crate::integrate::integrate(|_t, y: &CMat| Ok(liouvillian.apply(y)), x0, times, integrator)?;
    Ok(xs.iter().map(|x| a.mul_dense(x).trace()).collect())
}

/// `0.5 ||a - b||_1` for Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let herm = (&d + d.adjoint()).scale(0.5);
    let (evals, _) = crate::linalg::hermitian_eigen(&herm);
    0.5 * evals.iter().map(|e| e.abs()).sum::<f64>()
}
