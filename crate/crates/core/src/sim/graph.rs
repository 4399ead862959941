use rand::Rng;

use crate::engine::{Ctx, EventKind, Model};
use crate::error::{invalid, Result};
use crate::policies::{assign_graph_jsq, assign_graph_jsq_d, PolicyConfig, PolicyKind};
use crate::sampling::{exp_unchecked, ServiceDist};
use crate::state::SystemState;
use crate::topology::Topology;

use super::observer::{OccupancyObserver, WaitStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalMode {
    /// One rate-λN stream, origin vertex uniform (equal in law to `PerVertex`).
    Aggregate,
    /// An independent rate-λ stream at every vertex.
    PerVertex,
}

#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub lambda: f64,
    pub policy: PolicyConfig,
    pub buffer: Option<u32>,
    pub service: ServiceDist,
    pub arrivals: ArrivalMode,
    pub initial: Vec<u32>,
    pub window_start: f64,
    pub sample_interval: Option<f64>,
}

impl GraphSpec {
    pub fn new(lambda: f64, policy: PolicyConfig) -> Self {
        Self {
            lambda,
            policy,
            buffer: None,
            service: ServiceDist::Exp,
            arrivals: ArrivalMode::Aggregate,
            initial: Vec::new(),
            window_start: 0.0,
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphEvent {
    /// `Some(v)` for per-vertex streams, `None` for the aggregate stream.
    Arrival(Option<usize>),
    Departure(usize),
}

/// Single-server FCFS queues on the vertices of a graph; tasks may only
/// move to a neighbour of the vertex where they appear.
pub struct GraphModel<'g> {
    pub spec: GraphSpec,
    pub topo: &'g Topology,
    pub state: SystemState,
    pub obs: OccupancyObserver,
    pub waits: WaitStats,
}

impl<'g> GraphModel<'g> {
    pub fn new(topo: &'g Topology, spec: GraphSpec) -> Result<Self> {
        if !matches!(spec.policy.kind, PolicyKind::GraphJsq | PolicyKind::GraphJsqD | PolicyKind::Random) {
            return invalid(format!("policy {} is not a graph policy", spec.policy.kind.name()));
        }
        spec.policy.validate(topo.n(), spec.buffer)?;
        let n = topo.n();
        if n == 0 {
            return invalid("graph has no vertices");
        }
        if !spec.initial.is_empty() && spec.initial.len() != n {
            return invalid("initial queue vector must have length N");
        }
        Ok(Self {
            obs: OccupancyObserver::new(n, spec.window_start, spec.sample_interval, false),
            waits: WaitStats::new(spec.window_start),
            state: SystemState::empty(n, spec.buffer)?,
            topo,
            spec,
        })
    }

    fn pick(&self, v: usize, rng: &mut crate::rng::RngStream) -> usize {
        match self.spec.policy.kind {
            PolicyKind::GraphJsq => assign_graph_jsq(&self.state, self.topo, v, rng),
            PolicyKind::GraphJsqD => {
                assign_graph_jsq_d(&self.state, self.topo, v, self.spec.policy.d, self.spec.policy.sub_degree_self, rng)
            }
            // no load balancing: every task stays where it arrived
            _ => v,
        }
    }
}

impl Model for GraphModel<'_> {
    type Event = GraphEvent;

    fn init(&mut self, ctx: &mut Ctx<'_, GraphEvent>) -> Result<()> {
        self.obs.advance(0.0);
        let initial = self.spec.initial.clone();
        for (s, &q) in initial.iter().enumerate() {
            for _ in 0..q {
                let k = self.state.queue(s);
                self.obs.inc(0.0, k);
                let (_, finish) = self.state.admit_fcfs(s, self.spec.service.sample(ctx.rng));
                ctx.queue.schedule(finish, GraphEvent::Departure(s))?;
            }
        }
        if self.spec.lambda > 0.0 {
            match self.spec.arrivals {
                ArrivalMode::Aggregate => {
                    let dt = exp_unchecked(self.spec.lambda * self.topo.n() as f64, ctx.rng);
                    ctx.queue.schedule(dt, GraphEvent::Arrival(None))?;
                }
                ArrivalMode::PerVertex => {
                    for v in 0..self.topo.n() {
                        let dt = exp_unchecked(self.spec.lambda, ctx.rng);
                        ctx.queue.schedule(dt, GraphEvent::Arrival(Some(v)))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn handle(&mut self, ev: GraphEvent, ctx: &mut Ctx<'_, GraphEvent>) -> Result<()> {
        let now = ctx.now();
        self.obs.advance(now);
        self.state.now = now;
        match ev {
            GraphEvent::Arrival(origin) => {
                let v = match origin {
                    Some(v) => {
                        let dt = exp_unchecked(self.spec.lambda, ctx.rng);
                        ctx.queue.schedule_in(dt, GraphEvent::Arrival(Some(v)))?;
                        v
                    }
                    None => {
                        let dt = exp_unchecked(self.spec.lambda * self.topo.n() as f64, ctx.rng);
                        ctx.queue.schedule_in(dt, GraphEvent::Arrival(None))?;
                        ctx.rng.random_range(0..self.topo.n())
                    }
                };
                ctx.trace.log(now, EventKind::Arrival, Some(v), String::new);
                self.waits.arrival(now);
                let s = self.pick(v, ctx.rng);
                if self.state.is_full(s) {
                    self.state.losses += 1;
                    self.waits.lost(now);
                    ctx.trace.log(now, EventKind::Loss, Some(s), || "full".into());
                    return Ok(());
                }
                let k = self.state.queue(s);
                self.obs.inc(now, k);
                let (start, finish) = self.state.admit_fcfs(s, self.spec.service.sample(ctx.rng));
                self.waits.admitted(now, start - now, finish - now, k > 0);
                ctx.trace.log(now, EventKind::Admit, Some(s), || format!("q={}", k + 1));
                ctx.queue.schedule(finish, GraphEvent::Departure(s))?;
            }
            GraphEvent::Departure(s) => {
                let k = self.state.queue(s);
                self.obs.dec(now, k);
                self.state.depart(s);
                ctx.trace.log(now, EventKind::Departure, Some(s), || format!("q={}", k - 1));
            }
        }
        Ok(())
    }

    fn finish(&mut self, horizon: f64) {
        self.obs.finish(horizon, self.state.queues());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::rng::RngStream;
    use crate::topology::gen_clique;

    #[test]
    fn clique_graph_jsq_close_to_jsq() {
        let g = gen_clique(200);
        let mut spec = GraphSpec::new(0.9, PolicyConfig::new(PolicyKind::GraphJsq));
        spec.window_start = 50.0;
        let mut m = GraphModel::new(&g, spec).unwrap();
        let mut rng = RngStream::new(1, 0);
        run(&mut m, 200.0, &mut rng, false).unwrap();
        assert!(m.obs.q_avg(2, 200.0) < 0.05);
    }

    #[test]
    fn arrival_modes_agree_in_mean() {
        let g = crate::topology::gen_ring(100);
        let mut out = [0.0; 2];
        for (i, mode) in [ArrivalMode::Aggregate, ArrivalMode::PerVertex].into_iter().enumerate() {
            let mut acc = 0.0;
            for seed in 0..8 {
                let mut spec = GraphSpec::new(0.7, PolicyConfig::new(PolicyKind::GraphJsq));
                spec.arrivals = mode;
                spec.window_start = 50.0;
                let mut m = GraphModel::new(&g, spec).unwrap();
                let mut rng = RngStream::new(seed, i as u64);
                run(&mut m, 500.0, &mut rng, false).unwrap();
                acc += m.obs.mean_tasks(500.0) / 100.0;
            }
            out[i] = acc / 8.0;
        }
        assert!((out[0] - out[1]).abs() < 0.03, "{out:?}");
    }
}
