//! Stabilized linear time stepping for Cahn-Hilliard dynamics with
//! reaction-rate-dependent dynamic boundary conditions on rectangles.
//!
//! The bulk order parameter `phi` and its boundary trace `psi` evolve as a
//! coupled H^-1 gradient flow of bulk plus surface free energy. The
//! relaxation parameter `K` interpolates between the case of equal bulk and
//! surface chemical potentials (`K = 0`) and the case without mass exchange
//! (`K = infinity`); all three variants share one linear step
//! ([`scheme::assemble`] / [`scheme::advance`]).

pub mod cli;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod linsolve;
pub mod operators;
pub mod oracle;
pub mod potentials;
pub mod scheme;

pub use domain::{trace, scatter_trace, BoundaryField, BulkField, Coupling, Grid, ModelParams, SimState};
pub use error::{Error, Result};
pub use potentials::PotentialSpec;
