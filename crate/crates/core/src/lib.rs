//! Heavy-traffic analysis of multiclass queueing networks under static
//! buffer priority, with simulators for the pre-limit network and the
//! limiting SRBM, an exact CTMC oracle for exponential networks, and
//! numerical checks of the adjoint relations that link them.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analyzer;
pub mod checks;
pub mod dist;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod netfile;
pub mod network;
pub mod oracle;
pub mod pilot;
mod quad;
pub mod sim;
pub mod srbm;
pub mod stats;
pub mod transforms;
pub mod verify;

pub use analyzer::{analyze, Analysis, ReflectionData};
pub use dist::DistributionModel;
pub use error::{Error, Result, Violation};
pub use netfile::NetworkFile;
pub use network::{solve_traffic, validate_spec, HeavyTrafficFamily, NetworkSpec, PriorityStructure, TrafficSolution, ValidatedNetwork};
pub use sim::{simulate, SimConfig, SimState, SteadyStats};
pub use srbm::SrbmData;
pub use stats::{BatchSeries, Estimate};
