//! Simulation and numerical verification toolkit for distorted Brownian
//! motions on weighted spaces `m = ρφ dx`.
//!
//! The crate is organised around the objects a numerical experiment needs:
//!
//! * [`weights`]: the weight `ψ = ρφ`, its logarithmic drift, the skew
//!   interfaces induced by jumps of `φ`, state spaces and volume / A2
//!   diagnostics.
//! * [`sde`]: tamed Euler–Maruyama path simulation with skew interfaces,
//!   normal reflection and killing, plus a deterministic parallel batch engine.
//! * [`localtime`]: Tanaka, occupation and ledger estimators of local times and
//!   discounted additive functionals.
//! * [`potentials`]: Riesz potentials, resolvent envelopes, Monte-Carlo
//!   resolvents and the potential-smoothness check.
//! * [`semigroup`]: Monte-Carlo semigroups, kernel density estimates and the
//!   Feller / symmetry / heat-kernel / Nash / moment checks.
//! * [`cli`]: config-driven experiment runner behind the `skewflow` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod localtime;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod sde;
pub mod semigroup;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use functions::{Bump, FnSpec, Shape};
pub use report::{CheckReport, Comparison};
pub use sde::{Engine, Mode, Path, SimConfig, Status};
pub use weights::{DomainSpec, Interface, PhiSpec, RhoSpec, WeightSpec};

/// Library version embedded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
