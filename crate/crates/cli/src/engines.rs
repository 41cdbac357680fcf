//! Runs one engine on a problem and collects reduced states.

use dissipon_core::fock::HilbertLayout;
use dissipon_core::heom::{self, build_generator, extract_system, mirror_defect};
use dissipon_core::hops::{self, run_ensemble, EnsembleConfig, HopsSystem, NoiseGenerator};
use dissipon_core::lindblad::{propagate_and_reduce, LindbladProblem};
use dissipon_core::linalg::{frobenius, CMat};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{Engine, ProblemConfig};
use crate::CliError;

pub struct EngineResult {
    pub engine: Engine,
    pub times: Vec<f64>,
    pub rho: Vec<CMat>,
    /// Entry-wise standard errors `(re, im)` for Monte-Carlo engines.
    pub stderr: Option<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
    pub diagnostics: Value,
}

pub fn run(engine: Engine, cfg: &ProblemConfig) -> Result<EngineResult, CliError> {
    match engine {
        Engine::Heom => run_heom(cfg),
        Engine::Lindblad => run_lindblad(cfg),
        Engine::Hops => run_hops(cfg),
    }
}

fn run_heom(cfg: &ProblemConfig) -> Result<EngineResult, CliError> {
    let bcf = cfg.bcf()?;
    let layout = HilbertLayout::excitation(cfg.system_dim(), bcf.len(), cfg.truncation.heom_depth)?;
    let gen = build_generator(&cfg.system.hamiltonian, &cfg.system.coupling, &bcf, &layout)?;
    let times = cfg.time.times();
    let run = heom::propagate(&gen, &cfg.rho0(), &times, cfg.integrator)?;
    let mut mirror = 0.0f64;
    let mut herm = 0.0f64;
    let rho = run
        .states
        .iter()
        .map(|st| {
            mirror = mirror.max(mirror_defect(&layout, &st.varrho));
            let r = extract_system(&layout, st);
            herm = herm.max(r.hermiticity_defect);
            r.rho
        })
        .collect();
    Ok(EngineResult {
        engine: Engine::Heom,
        times,
        rho,
        stderr: None,
        diagnostics: json!({
            "hierarchy_dimension": layout.dim(),
            "accepted_steps": run.diagnostics.accepted_steps,
            "rejected_steps": run.diagnostics.rejected_steps,
            "max_boundary_weight": run.diagnostics.max_boundary_weight,
            "truncation_warning": run.diagnostics.truncation_warning,
            "max_mirror_defect": mirror,
            "max_hermiticity_defect": herm,
        }),
    })
}

fn run_lindblad(cfg: &ProblemConfig) -> Result<EngineResult, CliError> {
    let model = cfg.model()?;
    let layout = HilbertLayout::boxed(cfg.system_dim(), vec![cfg.truncation.fock_cap; model.modes()])?;
    let prob = LindbladProblem {
        h_sys: cfg.system.hamiltonian.clone(),
        s_op: cfg.system.coupling.clone(),
        model,
        layout,
    };
    let times = cfg.time.times();
    let run = propagate_and_reduce(&prob, &cfg.rho0(), &times, cfg.integrator)?;
    Ok(EngineResult {
        engine: Engine::Lindblad,
        times: run.times,
        rho: run.reduced,
        stderr: None,
        diagnostics: json!({
            "total_dimension": prob.layout.dim(),
            "accepted_steps": run.diagnostics.accepted_steps,
            "rejected_steps": run.diagnostics.rejected_steps,
            "max_boundary_weight": run.diagnostics.max_boundary_weight,
            "truncation_warning": run.diagnostics.truncation_warning,
            "final_occupations": run.occupations.last(),
        }),
    })
}

pub fn hops_parts(cfg: &ProblemConfig) -> Result<(HopsSystem, NoiseGenerator, EnsembleConfig), CliError> {
    let bcf = cfg.bcf()?;
    let p = cfg.parametrization()?;
    let layout = HilbertLayout::excitation(cfg.system_dim(), bcf.len(), cfg.truncation.hops_depth)?;
    let system = HopsSystem::new(&cfg.system.hamiltonian, &cfg.system.coupling, &bcf, &layout)?;
    let noise = NoiseGenerator::new(&p, cfg.hops.dt)?;
    let (n_steps, stride) = cfg.hops_grid()?;
    let config = EnsembleConfig {
        variant: cfg.hops.variant,
        trajectories: cfg.hops.trajectories,
        seed: cfg.hops.seed,
        dt: cfg.hops.dt,
        n_steps,
        stride,
        integrator: cfg.integrator,
    };
    Ok((system, noise, config))
}

fn run_hops(cfg: &ProblemConfig) -> Result<EngineResult, CliError> {
    let (system, noise, config) = hops_parts(cfg)?;
    let ens = run_ensemble(&system, &noise, &cfg.system.initial_state, &config)?;
    let est = ens.estimate;
    let stderr = est.stderr_re.into_iter().zip(est.stderr_im).collect();
    Ok(EngineResult {
        engine: Engine::Hops,
        times: est.times,
        rho: est.mean,
        stderr: Some(stderr),
        diagnostics: json!({
            "variant": config.variant,
            "trajectories": est.trajectories,
            "excluded": ens.excluded,
            "max_norm_deviation": ens.max_norm_deviation,
            "coarse_noise_grid": ens.coarse_noise_grid,
            "max_mean_mode_amplitude": ens.mean_mode_amplitudes.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max),
            "averaging": format!("{:?}", hops::AverageMode::for_variant(config.variant)),
        }),
    })
}

/// `t`, entries of `rho`, optional standard errors, then `<H>`, `<S>`, trace and purity.
pub fn observables_table(cfg: &ProblemConfig, r: &EngineResult) -> (Vec<String>, Vec<Vec<f64>>) {
    let d = cfg.system_dim();
    let mut header = vec!["t".to_string()];
    for a in 0..d {
        for b in 0..d {
            header.push(format!("rho_{a}{b}_re"));
            header.push(format!("rho_{a}{b}_im"));
        }
    }
    if r.stderr.is_some() {
        for a in 0..d {
            for b in 0..d {
                header.push(format!("se_{a}{b}_re"));
                header.push(format!("se_{a}{b}_im"));
            }
        }
    }
    header.extend(["exp_h", "exp_s", "trace", "purity", "hermiticity_defect"].map(String::from));
    let rows = r
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let rho = &r.rho[k];
            let mut row = vec![t];
            for a in 0..d {
                for b in 0..d {
                    row.push(rho[(a, b)].re);
                    row.push(rho[(a, b)].im);
                }
            }
            if let Some(se) = &r.stderr {
                let (re, im) = &se[k];
                for a in 0..d {
                    for b in 0..d {
                        row.push(re[(a, b)]);
                        row.push(im[(a, b)]);
                    }
                }
            }
            row.push((rho * &cfg.system.hamiltonian).trace().re);
            row.push((rho * &cfg.system.coupling).trace().re);
            row.push(rho.trace().re);
            row.push((rho * rho).trace().re);
            row.push(frobenius(&(rho - rho.adjoint())));
            row
        })
        .collect();
    (header, rows)
}
