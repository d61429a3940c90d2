//! Heat-bath dynamics and their Langevin reduction.
//!
//! The crate couples a slow heavy particle to a fast environment in two ways:
//! a linear harmonic bath ([`bath`], [`zwanzig`]) and an X-dependent
//! matrix Hamiltonian with a normalized wave function ([`ehrenfest`]).
//! Both are compared against Itô Langevin dynamics ([`langevin`]) through
//! Monte Carlo ensembles ([`harness`]).
//!
//! All models are immutable after construction and every random draw comes
//! from a counter-based stream keyed by `(seed, stream)` ([`rng`]), so
//! ensembles are reproducible regardless of how many workers run them.

pub mod bath;
pub mod config;
pub mod ehrenfest;
mod error;
pub mod harness;
pub mod io;
pub mod langevin;
pub mod linalg;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod zwanzig;

pub use bath::{MemoryKernel, SpectralBathModel};
pub use config::ExperimentConfig;
pub use ehrenfest::{EhrenfestModel, EhrenfestState, GroundState};
pub use error::{Error, Result};
pub use harness::{EnsembleResult, ObservableSpec};
pub use langevin::{FrictionModel, LangevinState};
pub use potential::{HeavyModel, Potential};
pub use rng::StreamRng;
pub use sampler::{GibbsSpec, WaveVector};
pub use zwanzig::{FullState, TrajectoryRecord};

/// Complex scalar used for all wave amplitudes.
pub type C64 = num_complex::Complex64;
