pub mod bcf;
pub mod error;
pub mod fitter;
pub mod fixtures;
pub mod fock;
pub mod heom;
pub mod hops;
pub mod integrate;
pub mod lindblad;
pub mod linalg;
pub mod poly;
pub mod pseudomode;
pub mod serde_c64;

pub use bcf::{ExponentialBcf, PositiveParametrization};
pub use error::{Error, Result};
pub use fock::HilbertLayout;
pub use integrate::Integrator;
pub use pseudomode::PseudomodeModel;
