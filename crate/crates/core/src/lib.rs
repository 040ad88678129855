//! Distributionally robust dynamic microgrid formation.
//!
//! Given a distribution network, grid-forming DGs, and time-dependent
//! line-failure-probability bounds along a hazard trajectory, this crate
//! computes microgrid boundaries per time step that minimize worst-case
//! expected weighted load shedding, and evaluates the resulting boundary
//! policies against Monte Carlo contingency scenarios.
//!
//! Module map:
//! - [`netdata`] — case-data model, JSON ingestion, validation, and the
//!   built-in modified 37-node study case generator.
//! - [`model`] — variable indexing, the first-stage topology polytope,
//!   the second-stage dispatch system in affine form, the dispatch
//!   evaluator, and graph-theoretic radiality oracles.
//! - [`dro`] — ambiguity set, dualized worst-case subproblem with exact
//!   product linearization, the cut-generation loop, and brute-force
//!   oracles plus the static/pure-robust baseline modes.
//! - [`scenario`] — Monte Carlo contingency sampling, fixed-policy
//!   evaluation, and method comparison statistics.
//! - [`solver`] — a pluggable abstraction over MILP/LP backends.

pub mod dro;
pub mod error;
pub mod model;
pub mod netdata;
pub mod scenario;
pub mod solver;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use error::{Error, Result};
