//! Tabular MDP families under dynamics shift: exact solvers, state-regularized
//! policy optimization, bound verification and density tools.

pub mod density;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod rng;
pub mod solvers;
pub mod srpo;
pub mod theory;
pub mod transport;

pub use error::{Error, Result};
pub use mdp::{HipMdpFamily, LipschitzConstants, TabularMdp};
pub use solvers::{OccupancyVector, PolicyTable, ValueTable};
