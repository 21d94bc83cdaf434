//! Numerical laboratory for a 2-D incompressible fluid coupled to inertial
//! particles through Stokes drag, together with its kinetic (Vlasov-Fokker-
//! Planck) mean-field limit.
//!
//! The crate simulates four systems on the unit torus:
//! * the particle system: pseudo-spectral Navier-Stokes driven by a mollified
//!   particle drag, with particle SDEs driven by per-particle Brownian noise;
//! * its velocity-cut-off variant;
//! * the limit PDE system: Navier-Stokes coupled to a Vlasov-Fokker-Planck
//!   density on a truncated velocity domain;
//! * its cut-off variant.
//!
//! Diagnostics cover energy balances, velocity moments, sup-norm bounds,
//! cut-off activity and Wasserstein-1 distances between the empirical
//! particle measure and the kinetic density.

pub mod config;
pub mod coupled;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod kinetic;
pub mod metrics;
pub mod mollifier;
pub mod particles;
pub mod rng;
pub mod spectral;

pub use error::{Result, VnsError};
