//! Renewable energy community toolkit: configuration, billing with optimal
//! reallocation, the control simulator, exogenous scenario sampling,
//! control policies and policy evaluation.

pub mod billing;
pub mod config;
pub mod env;
pub mod eval;
pub mod exogenous;
pub mod policy;
pub mod sim;

/// The solver the billing and MPC programs are built for.
pub use rec_optim as optim;
