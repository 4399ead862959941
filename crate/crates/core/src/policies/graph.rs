use rand::{Rng, RngCore};

use super::dispatch::{sample_distinct, uniform_argmin};
use crate::state::SystemState;
use crate::topology::Topology;

/// Shortest queue over the closed neighbourhood of `v`, ties uniform.
pub fn assign_graph_jsq<R: RngCore + ?Sized>(state: &SystemState, topo: &Topology, v: usize, rng: &mut R) -> usize {
    let cands = std::iter::once(v).chain(topo.neighbors(v).iter().copied());
    uniform_argmin(cands, |s| state.queue(s), rng).expect("v is a candidate")
}

/// `v` plus `d-1` distinct uniformly chosen neighbours; shortest queue wins.
/// With fewer than `d-1` neighbours the task stays at `v` when
/// `sub_degree_self` is set, otherwise all neighbours are polled.
pub fn assign_graph_jsq_d<R: RngCore + ?Sized>(
    state: &SystemState,
    topo: &Topology,
    v: usize,
    d: usize,
    sub_degree_self: bool,
    rng: &mut R,
) -> usize {
    let nb = topo.neighbors(v);
    let k = d.saturating_sub(1);
    if nb.len() < k {
        if sub_degree_self || nb.is_empty() {
            return v;
        }
        let cands = std::iter::once(v).chain(nb.iter().copied());
        return uniform_argmin(cands, |s| state.queue(s), rng).expect("nonempty");
    }
    if k == 1 {
        let u = nb[rng.random_range(0..nb.len())];
        return uniform_argmin([v, u], |s| state.queue(s), rng).expect("nonempty");
    }
    let picks = sample_distinct(nb.len(), k, rng);
    let cands = std::iter::once(v).chain(picks.into_iter().map(|i| nb[i]));
    uniform_argmin(cands, |s| state.queue(s), rng).expect("nonempty")
}

/// Probability that the first coordinate receives the task under uniform
/// tie-breaking: 1/k if it attains the minimum together with k-1 others.
pub fn tie_weight(x: &[u32]) -> f64 {
    let Some(&first) = x.first() else { return 0.0 };
    let m = *x.iter().min().expect("nonempty");
    if first > m {
        return 0.0;
    }
    1.0 / x.iter().filter(|&&y| y == m).count() as f64
}
