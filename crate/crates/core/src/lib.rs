//! Simulation and numerical analysis of random load resampling and migration
//! in parallel processor-sharing server systems.
//!
//! Two migration policies are modelled:
//!
//! * **RLS** (random local search): at rate β each client samples a uniformly
//!   random server and moves there only if its service rate strictly improves.
//! * **RLO** (random load-oblivious): at rate β each client jumps to a server
//!   drawn from a fixed irreducible transition matrix, ignoring loads.
//!
//! The crate is organised as
//!
//! ```text
//! model        domain types, decision rules, measure transforms
//! ctmc         exact event-driven simulation (closed, open, coupled)
//! balance      balance predicates, phase observables, time-to-balance runs
//! meanfield    large-system ODEs, RK4 integration, RLO fixed point
//! experiments  stability probes, drift enumeration, Kurtz deviation, sweeps
//! ```
//!
//! Numerical routines that do not depend on simulation time are generic over
//! the scalar type (see [`scalar`]); the aliases below fix the common choices.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod balance;
pub mod ctmc;
pub mod error;
pub mod experiments;
pub mod meanfield;
pub mod model;
pub mod output;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Policy, SystemConfig, SystemState};
pub use scalar::{Real, Scalar};

/// Exact rational scalar used for balance diagnostics and drift enumeration.
pub type Rational = num_rational::Ratio<i64>;

/// Empirical occupancy measure in double precision.
pub type EmpiricalMeasure64 = model::EmpiricalMeasure<f64>;
/// Mean-field state in double precision.
pub type OdeState64 = meanfield::OdeState<f64>;
/// Mean-field state in single precision.
pub type OdeState32 = meanfield::OdeState<f32>;
/// RLO fixed point in double precision.
pub type FixedPoint64 = meanfield::FixedPoint<f64>;
/// Balance observables over exact rationals.
pub type BalanceDiagnostics = balance::BalanceDiagnostics;
