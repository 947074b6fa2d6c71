//! Quasi-stationary behaviour of absorbed continuous-time Markov chains on
//! `{0, 1, 2, ...}` with state `0` absorbing.
//!
//! The crate is organised around a truncated rate matrix ([`AbsorbedChain`])
//! and the computations that can be run on it:
//!
//! - [`exact`]: uniformization-based evolution, conditioned semigroups,
//!   quasi-stationary distributions and Yaglom-limit traces.
//! - [`certifier`]: the four constants of the fast-return hypothesis and the
//!   resulting mixing bound `2 (1 - c1 c2 c3 / (2 c4))^floor(t)`.
//! - [`criterion`]: rate-matrix criteria that imply the hypothesis.
//! - [`birth_death`]: closed-form birth-death analytics (hitting times,
//!   exponential moments, the logistic certificate).
//! - [`monte_carlo`]: exact-jump simulation and a Fleming-Viot particle system.

pub mod birth_death;
pub mod certifier;
pub mod chain;
pub mod criterion;
mod error;
pub mod exact;
pub mod format;
mod linalg;
pub mod monte_carlo;

pub use chain::{
    AbsorbedChain, BirthDeathSpec, BoundaryMode, CatastropheSpec, RateFamily, StateDistribution,
};
pub use error::{Error, Result};
