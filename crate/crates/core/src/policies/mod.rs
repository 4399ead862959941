//! Task-assignment rules and the server power-state machines.

pub mod delayedoff;
mod dispatch;
pub mod graph;
pub mod tabs;

pub use dispatch::*;
pub use graph::{assign_graph_jsq, assign_graph_jsq_d, tie_weight};
