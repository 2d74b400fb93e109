//! Finite-horizon tabular MDP lab for conservative policy iteration with
//! random resets versus credit-assignment resets.

pub mod bounds;
pub mod constructions;
pub mod cpi;
pub mod error;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod sampling;
pub mod thought;

pub use cpi::{cpi_step, run_cpi, CpiConfig, CpiStepReport, StepStatus, Variant};
pub use error::{Error, Result};
pub use mdp::Mdp;
pub use oracle::{compute_values, expected_return, improvable_stats, visitation, ImprovableStats, ValueTables, Visitation};
pub use policy::Policy;
pub use rng::SeedTree;
