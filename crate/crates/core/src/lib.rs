//! Deterministic interface dynamics in quenched random environments.
//!
//! A surface `S: Z^{d-1} -> Z ∪ {-∞}` moves upward through a random energy
//! landscape `ω` on `Z^d`. At each time step every site is updated
//! simultaneously by a monotone update function that reads the discrete
//! gradients of the surface and the energy at the current height.
//!
//! The crate is organised by subsystem:
//!
//! * [`environment`]: lazily evaluated, reproducible energy landscapes and a
//!   mixing estimator.
//! * [`dynamics`]: surfaces, update rules, synchronous evolution and velocity
//!   estimates.
//! * [`criterion`]: the finite-size blocking criterion (box geometry, crossing
//!   times, blocking probabilities, an exhaustive oracle).
//! * [`renorm`]: log-space bookkeeping of the multi-scale renormalization.
//! * [`percolation`]: the d = 2 oriented percolation correspondence.
//! * [`soft`]: analytical companions of the soft Laplacian dynamics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual `f64` instantiation.

pub mod criterion;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod lattice;
pub mod percolation;
pub mod renorm;
pub mod rng;
pub mod scalar;
pub mod soft;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{Height, LatticeBox};
pub use scalar::Scalar;

/// Site energy with `f64` values.
pub type Energy = environment::SiteEnergy<f64>;
/// Energy landscape with `f64` values.
pub type Field = environment::EnergyField<f64>;
/// Environment law with `f64` parameters.
pub type Law = environment::LawSpec<f64>;
/// Update rule with `f64` thresholds.
pub type Rule = dynamics::UpdateRule<f64>;
/// Renormalization parameters with `f64` exponents.
pub type Params = renorm::ScaleParams<f64>;
/// Single precision landscape, mostly useful for memory-bound sweeps.
pub type Field32 = environment::EnergyField<f32>;
/// Exact probabilities produced by the enumeration oracle.
pub type ExactProbability = num_rational::BigRational;
