//! Steady-state queue-length approximations for redundancy-d systems with
//! cancel-on-complete, together with a discrete-event simulator and exact
//! small-system solvers used to validate them.

pub mod analysis;
pub mod dist;
pub mod error;
pub mod exact;
pub mod meanfield;
pub mod ode;
pub mod pair_ps;
pub mod params;
pub mod positional;
pub mod sim;
pub mod solution;
pub mod triplet;

pub use dist::{dist_mean, QueueDist};
pub use error::{Error, Result};
pub use ode::{euler_integrate, solve_fixed_point, IntegratorConfig, OdeSystem};
pub use params::{validate_params, Discipline, ModelParams};
pub use solution::Solved;
