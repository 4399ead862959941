//! Discrete-event simulation and mean-field/diffusion analysis of
//! large-scale load-balancing systems.
// `!(x >= 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod meanfield;
pub mod metrics;
pub mod policies;
pub mod rng;
pub mod sampling;
pub mod sim;
pub mod state;
pub mod stats;
pub mod topology;

pub use engine::{run, EventQueue, EventTrace, Model};
pub use error::{Error, Result};
pub use policies::{Decision, PolicyConfig, PolicyKind};
pub use rng::RngStream;
pub use sampling::{exp_sample, ServiceDist};
pub use state::{OccupancyVector, SystemState};
pub use topology::Topology;
