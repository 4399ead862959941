//! Event-driven models built on the engine: dispatcher farms (single-server
//! queues or infinite-server pools), TABS, delayed-off and graph-constrained
//! assignment.

mod delayedoff;
mod dispatch;
mod graph;
mod observer;
mod tabs;

pub use delayedoff::{DelayedOffModel, DelayedOffSpec};
pub use dispatch::{Discipline, DispatchEvent, DispatchModel, DispatchSpec};
pub use graph::{ArrivalMode, GraphModel, GraphSpec};
pub use observer::{OccupancyObserver, Snapshot, TaskRecord, TimeIntegral, WaitStats};
pub use tabs::{RateFn, TabsEvent, TabsModel, TabsSpec, TabsStart};
