//! Shared fixtures for the benchmarks.

use lbmesh_core::sim::{DispatchModel, DispatchSpec};
use lbmesh_core::{run, PolicyConfig, PolicyKind, RngStream};

/// A dispatch model at per-server load `lambda` under `policy`.
pub fn dispatch(n: usize, lambda: f64, policy: PolicyConfig) -> DispatchModel {
    let mut spec = DispatchSpec::new(n, lambda, policy);
    spec.window_start = 0.0;
    DispatchModel::new(spec).expect("valid bench spec")
}

/// Simulates `horizon` time units and returns the number of arrivals.
pub fn simulate(n: usize, lambda: f64, kind: PolicyKind, d: usize, horizon: f64, seed: u64) -> u64 {
    let mut policy = PolicyConfig::new(kind);
    policy.d = d;
    let mut model = dispatch(n, lambda, policy);
    run(&mut model, horizon, &mut RngStream::new(seed, 0), false).expect("bench run").arrivals
}
