use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hermiticity violated: |sum Im G_j| = {defect:e} exceeds tolerance {tolerance:e}")]
    HermiticityViolation { defect: f64, tolerance: f64 },

    #[error("decay rates {i} and {j} coincide within tolerance")]
    DegenerateLambdas { i: usize, j: usize },

    #[error("odd-multiplicity root cluster at {root} lies within tolerance of the real axis")]
    NumericallyAmbiguous { root: String },

    #[error("bath correlation function is not physical (min J = {min_spectral_value:e} at omega = {witness_frequency})")]
    NotPhysical {
        min_spectral_value: f64,
        witness_frequency: f64,
    },

    #[error("complex roots could not be paired into conjugates: {0}")]
    RootPairingFailure(String),

    #[error("number of exponential terms must be at least 1, got {0}")]
    InvalidN(usize),

    #[error("amplitude G_{index} vanishes (|G| = {magnitude:e})")]
    ZeroAmplitude { index: usize, magnitude: f64 },

    #[error("drift matrix is not stable: eigenvalue with real part {0:e}")]
    UnstableDrift(f64),

    #[error("stationary covariance is singular: eigenvalue ratio {0:e}")]
    SingularP(f64),

    #[error("matrix is not unitary: |u^H u - 1| = {0:e}")]
    NotUnitary(f64),

    #[error("mode index {index} out of range for {modes} modes")]
    IndexOutOfRange { index: usize, modes: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("integrator failure at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },

    #[error("vacuum component collapsed at t = {t} (norm {norm:e})")]
    NormCollapse { t: f64, norm: f64 },

    #[error("Cholesky factorization failed: {0}")]
    CholeskyFailure(String),

    #[error("ensemble needs at least 2 trajectories, got {0}")]
    InsufficientTrajectories(usize),

    #[error("too many trajectories excluded: {excluded} of {total}")]
    ExcessiveExclusions { excluded: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Variant name, for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::HermiticityViolation { .. } => "HermiticityViolation",
            Error::DegenerateLambdas { .. } => "DegenerateLambdas",
            Error::NumericallyAmbiguous { .. } => "NumericallyAmbiguous",
            Error::NotPhysical { .. } => "NotPhysical",
            Error::RootPairingFailure(_) => "RootPairingFailure",
            Error::InvalidN(_) => "InvalidN",
            Error::ZeroAmplitude { .. } => "ZeroAmplitude",
            Error::UnstableDrift(_) => "UnstableDrift",
            Error::SingularP(_) => "SingularP",
            Error::NotUnitary(_) => "NotUnitary",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::IntegratorFailure { .. } => "IntegratorFailure",
            Error::NormCollapse { .. } => "NormCollapse",
            Error::CholeskyFailure(_) => "CholeskyFailure",
            Error::InsufficientTrajectories(_) => "InsufficientTrajectories",
            Error::ExcessiveExclusions { .. } => "ExcessiveExclusions",
        }
    }
}
