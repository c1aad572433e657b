//! Two-scale Lorenz '96 testbed.
//!
//! Implements the full (coupled) and reduced (parameterized) models, four
//! subgrid-closure families (deterministic cubic, polynomial + AR(1) noise,
//! Bayesian polynomial regression, conditional normalizing flows), ensemble
//! construction with hierarchical seeding, a variance decomposition that
//! separates internal variability, initial-condition uncertainty, and model
//! uncertainty, and the forecast-verification diagnostics used to compare
//! closures (climatological distances, ensemble skill, correlation structure).

// Index loops mirror the k/j/m subscripts of the underlying equations;
// iterator rewrites would obscure the stencils.
#![allow(clippy::needless_range_loop)]

pub mod closures;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod flows;
pub mod io;
pub mod metrics;
pub mod seed;
pub mod uncertainty;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
