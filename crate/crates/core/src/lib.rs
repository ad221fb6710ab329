//! Quantum denoising diffusion on dense statevectors.
//!
//! The crate covers the full pipeline: target ensembles ([`datasets`]),
//! forward scrambling ([`diffusion`]), measurement-based denoising steps
//! ([`denoise`]), ensemble distances ([`distance`]), step-by-step training
//! ([`training`]) and the single-circuit and adversarial baselines
//! ([`baselines`]).
//!
//! Basis convention everywhere: qubit 0 is the most significant bit of an
//! amplitude index, and ancillas occupy the trailing qubit positions.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod baselines;
pub mod datasets;
pub mod denoise;
pub mod density;
pub mod diffusion;
pub mod distance;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod statevector;
pub mod stats;
pub mod training;

pub use num_complex::Complex64 as C64;

pub use ensemble::Ensemble;
pub use error::{Error, Result};
pub use rng::RandomStream;
pub use statevector::{Axis, Pauli, PauliString, StateVector};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
