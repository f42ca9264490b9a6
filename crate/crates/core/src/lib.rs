//! Membership tests for behaviours in joint measurement scenarios: joint
//! probability measures, joint quantum measures and their semidefinite
//! relaxations.

pub mod behaviour;
pub mod branching;
pub mod conditions;
pub mod error;
pub mod io;
pub mod quantum;
pub mod scenario;
pub mod solvers;
pub mod symmetry;

pub use error::{Error, Result};
