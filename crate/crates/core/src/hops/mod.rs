//! Hierarchy of pure states: coloured-noise generation, linear, nonlinear and
//! near-unitary trajectory propagation, and ensemble averaging.

pub mod ensemble;
pub mod noise;
pub mod trajectory;

pub use ensemble::{ensemble_average, run_ensemble, AverageMode, EnsembleConfig, EnsembleEstimate, EnsembleRun};
pub use noise::{generate_noise, noise_statistics, NoiseGenerator, NoisePath, NoiseStatistics};
pub use trajectory::{
    propagate, propagate_linear_hops, propagate_nonlinear_hops, propagate_nuhops, HopsSystem, HopsVariant,
    Trajectory,
};
