//! Coupled PCA learning rules derived by Newton descent on the Lagrangian of
//! the Rayleigh-quotient numerator under a unit-length constraint.
//!
//! The crate is split into four layers:
//!
//! - [`linmodel`]: ground-truth spectral models, a Jacobi eigen-oracle,
//!   deflation and the JSON matrix interchange format.
//! - [`rules`]: the Lagrangian, its gradient and Hessian, the approximated
//!   inverse Hessians and every learning-rule right-hand side.
//! - [`dynamics`]: Euler integration, sequential/parallel chains and
//!   trajectory recording.
//! - [`stability`]: analytic and numeric Jacobian spectra at fixed points and
//!   the perturbation probe.
//!
//! Eigenpair ranks (`p`, `q`, `i`, `j`) are 1-based throughout the public API:
//! rank 1 is the principal eigenpair.

pub mod dynamics;
pub mod error;
pub mod linmodel;
pub mod rules;
pub mod stability;

pub use error::{Error, Result};
pub use linmodel::{EigenPair, SpectralModel};
pub use rules::{ChainState, EigenState, KnownPairs, RuleKind};
