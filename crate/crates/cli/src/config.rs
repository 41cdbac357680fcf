//! Problem files: system, bath, truncation, time grid and engine settings.

use std::path::Path;

use dissipon_core::bcf::{amplitudes_from_residues, spectral_factorization};
use dissipon_core::hops::HopsVariant;
use dissipon_core::integrate::uniform_grid;
use dissipon_core::linalg::CMat;
use dissipon_core::pseudomode::assemble_pseudomode;
use dissipon_core::serde_c64;
use dissipon_core::{ExponentialBcf, Integrator, PositiveParametrization, PseudomodeModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(with = "serde_c64::matrix")]
    pub hamiltonian: CMat,
    #[serde(with = "serde_c64::matrix")]
    pub coupling: CMat,
    /// Pure initial system state; the bath starts in its vacuum.
    #[serde(with = "serde_c64::vec")]
    pub initial_state: Vec<Complex64>,
}

/// Exactly one of the three fields must be present.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcf: Option<ExponentialBcf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametrization: Option<PositiveParametrization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PseudomodeModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truncation {
    /// Total excitation cap of the HEOM hierarchy.
    pub heom_depth: usize,
    /// Per-mode occupation cap of the Lindblad pseudomodes.
    pub fock_cap: usize,
    /// Total excitation cap of the HOPS hierarchy.
    pub hops_depth: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            heom_depth: 8,
            fock_cap: 6,
            hops_depth: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    /// Number of output intervals; outputs at `t_end * k / steps`.
    pub steps: usize,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.t_end, self.steps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopsSettings {
    pub variant: HopsVariant,
    pub trajectories: usize,
    pub seed: u64,
    /// Noise grid spacing; must divide the output spacing.
    pub dt: f64,
}

impl Default for HopsSettings {
    fn default() -> Self {
        Self {
            variant: HopsVariant::Nuhops,
            trajectories: 1000,
            seed: 0,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Heom,
    Lindblad,
    Hops,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Heom => "heom",
            Engine::Lindblad => "lindblad",
            Engine::Hops => "hops",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "heom" => Ok(Engine::Heom),
            "lindblad" => Ok(Engine::Lindblad),
            "hops" => Ok(Engine::Hops),
            other => Err(format!("unknown engine '{other}' (heom, lindblad, hops)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemSpec,
    pub bath: BathSpec,
    #[serde(default)]
    pub truncation: Truncation,
    pub time: TimeGrid,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub hops: HopsSettings,
    #[serde(default)]
    pub engines: Vec<Engine>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = self.system.hamiltonian.nrows();
        if d == 0 || self.system.hamiltonian.ncols() != d {
            return bad(format!("hamiltonian must be square, got {:?}", self.system.hamiltonian.shape()));
        }
        if self.system.coupling.shape() != (d, d) {
            return bad(format!("coupling is {:?}, expected {d}x{d}", self.system.coupling.shape()));
        }
        if self.system.initial_state.len() != d {
            return bad(format!("initial_state has length {}, expected {d}", self.system.initial_state.len()));
        }
        let norm: f64 = self.system.initial_state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return bad(format!("initial_state must be normalized, has norm {norm}"));
        }
        let present = [
            self.bath.bcf.is_some(),
            self.bath.parametrization.is_some(),
            self.bath.model.is_some(),
        ]
        .iter()
        .filter(|x| **x)
        .count();
        if present != 1 {
            return bad(format!("bath needs exactly one of bcf, parametrization, model; found {present}"));
        }
        if let Some(m) = &self.bath.model {
            m.validate_shapes().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.time.t_end > 0.0 && self.time.t_end.is_finite()) || self.time.steps == 0 {
            return bad("time grid needs t_end > 0 and steps >= 1".into());
        }
        self.integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.truncation.fock_cap == 0 {
            return bad("fock_cap must be at least 1".into());
        }
        if !(self.hops.dt > 0.0) {
            return bad("hops.dt must be positive".into());
        }
        self.hops_grid()?;
        Ok(())
    }

    /// `(n_steps, stride)` of the HOPS noise grid that hits every output time.
    pub fn hops_grid(&self) -> Result<(usize, usize), CliError> {
        let per_output = self.time.t_end / self.time.steps as f64 / self.hops.dt;
        let stride = per_output.round();
        if stride < 1.0 || (per_output - stride).abs() > 1e-9 * per_output.max(1.0) {
            return Err(CliError::Config(format!(
                "hops.dt = {} must divide the output spacing {}",
                self.hops.dt,
                self.time.t_end / self.time.steps as f64
            )));
        }
        let stride = stride as usize;
        Ok((stride * self.time.steps, stride))
    }

    pub fn system_dim(&self) -> usize {
        self.system.hamiltonian.nrows()
    }

    pub fn rho0(&self) -> CMat {
        let v = &self.system.initial_state;
        CMat::from_fn(v.len(), v.len(), |a, b| v[a] * v[b].conj())
    }

    /// Bath as an exponential BCF; needed by HEOM and HOPS.
    pub fn bcf(&self) -> Result<ExponentialBcf, CliError> {
        match (&self.bath.bcf, &self.bath.parametrization) {
            (Some(b), _) => Ok(b.clone()),
            (None, Some(p)) => Ok(amplitudes_from_residues(p)),
            _ => Err(CliError::Config(
                "this engine needs the bath as a bcf or parametrization, not a pseudomode model".into(),
            )),
        }
    }

    /// Residue parametrization; factorizes the BCF when necessary.
    pub fn parametrization(&self) -> Result<PositiveParametrization, CliError> {
        match (&self.bath.bcf, &self.bath.parametrization) {
            (_, Some(p)) => Ok(p.clone()),
            (Some(b), None) => Ok(spectral_factorization(b)?),
            _ => Err(CliError::Config(
                "this engine needs the bath as a bcf or parametrization, not a pseudomode model".into(),
            )),
        }
    }

    pub fn model(&self) -> Result<PseudomodeModel, CliError> {
        match &self.bath.model {
            Some(m) => Ok(m.clone()),
            None => Ok(assemble_pseudomode(&self.parametrization()?)?),
        }
    }
}

/// A bath file: either residues (`lambdas`, `residues`) or amplitudes (`lambdas`, `amplitudes`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BathInput {
    Parametrization(PositiveParametrization),
    Bcf(ExponentialBcf),
}

impl BathInput {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let value: serde_json::Value = read_json(path)?;
        if value.get("residues").is_some() {
            serde_json::from_value(value.clone()).map(BathInput::Parametrization)
        } else {
            serde_json::from_value(value).map(BathInput::Bcf)
        }
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn bcf(&self) -> ExponentialBcf {
        match self {
            BathInput::Parametrization(p) => amplitudes_from_residues(p),
            BathInput::Bcf(b) => b.clone(),
        }
    }

    pub fn parametrization(&self) -> Result<PositiveParametrization, CliError> {
        match self {
            BathInput::Parametrization(p) => Ok(p.clone()),
            BathInput::Bcf(b) => Ok(spectral_factorization(b)?),
        }
    }
}
