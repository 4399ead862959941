use crate::engine::{Ctx, EventKind, Model};
use crate::error::{invalid, Error, Result};
use crate::policies::{
    assign_batch_jsq_d, assign_cjsq, assign_jiq, assign_jsq, assign_jsq_d, assign_jsw, assign_mjsq, assign_pi_class,
    assign_random, assign_round_robin, Decision, PolicyConfig, PolicyKind,
};
use crate::rng::RngStream;
use crate::sampling::{exp_unchecked, ServiceDist};
use crate::state::SystemState;

use super::observer::{OccupancyObserver, TaskRecord, WaitStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    /// One FCFS server per queue.
    Fcfs,
    /// Every task in a pool is served in parallel (infinite-server pool).
    Pool,
}

#[derive(Debug, Clone)]
pub struct DispatchSpec {
    pub n: usize,
    /// Arrival rate per server; the aggregate rate is `lambda * n`.
    pub lambda: f64,
    pub buffer: Option<u32>,
    pub policy: PolicyConfig,
    pub service: ServiceDist,
    pub discipline: Discipline,
    /// Initial tasks per server (empty means all zero).
    pub initial: Vec<u32>,
    pub window_start: f64,
    pub sample_interval: Option<f64>,
    pub state_law: bool,
    pub record_tasks: bool,
}

impl DispatchSpec {
    pub fn new(n: usize, lambda: f64, policy: PolicyConfig) -> Self {
        Self {
            n,
            lambda,
            buffer: None,
            policy,
            service: ServiceDist::Exp,
            discipline: Discipline::Fcfs,
            initial: Vec::new(),
            window_start: 0.0,
            sample_interval: None,
            state_law: false,
            record_tasks: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchEvent {
    Arrival,
    Departure(usize),
}

/// Central dispatcher in front of `n` queues or pools.
pub struct DispatchModel {
    pub spec: DispatchSpec,
    pub state: SystemState,
    pub obs: OccupancyObserver,
    pub waits: WaitStats,
    /// Probe and token messages exchanged with servers.
    pub messages: u64,
    pub tasks: Vec<TaskRecord>,
    batch_rate: f64,
}

impl DispatchModel {
    pub fn new(spec: DispatchSpec) -> Result<Self> {
        if spec.n == 0 {
            return invalid("need at least one server");
        }
        if !(spec.lambda >= 0.0) || !spec.lambda.is_finite() {
            return invalid(format!("arrival rate must be >= 0, got {}", spec.lambda));
        }
        if spec.discipline == Discipline::Pool && spec.buffer.is_none() {
            return invalid("server pools need a finite capacity");
        }
        match spec.policy.kind {
            PolicyKind::Tabs | PolicyKind::DelayedOff | PolicyKind::GraphJsq | PolicyKind::GraphJsqD => {
                return invalid(format!("policy {} is not a dispatcher policy", spec.policy.kind.name()));
            }
            PolicyKind::Jsw if spec.discipline == Discipline::Pool => {
                return invalid("jsw needs single-server queues");
            }
            _ => {}
        }
        spec.policy.validate(spec.n, spec.buffer)?;
        if !spec.initial.is_empty() && spec.initial.len() != spec.n {
            return invalid("initial queue vector must have length N");
        }
        let mut state = SystemState::empty(spec.n, spec.buffer)?;
        if spec.policy.kind == PolicyKind::Jsw {
            state.track_workloads();
        }
        let batch = if spec.policy.kind == PolicyKind::BatchJsqD { spec.policy.batch } else { 1 };
        let batch_rate = spec.lambda * spec.n as f64 / batch as f64;
        Ok(Self {
            obs: OccupancyObserver::new(spec.n, spec.window_start, spec.sample_interval, spec.state_law),
            waits: WaitStats::new(spec.window_start),
            state,
            messages: 0,
            tasks: Vec::new(),
            batch_rate,
            spec,
        })
    }

    fn choose(&mut self, rng: &mut RngStream, out: &mut Vec<Decision>) -> Result<()> {
        let p = &self.spec.policy;
        let st = &mut self.state;
        let d = match p.kind {
            PolicyKind::Random => Decision::Server(assign_random(st, rng)),
            PolicyKind::RoundRobin => Decision::Server(assign_round_robin(st)),
            PolicyKind::Jsq => Decision::Server(assign_jsq(st, rng)),
            PolicyKind::JsqD => Decision::Server(assign_jsq_d(st, p.d, p.with_replacement, rng)?),
            PolicyKind::Jiq => Decision::Server(assign_jiq(st, rng)),
            PolicyKind::PiClass => assign_pi_class(st, &p.d_vector, rng)?,
            PolicyKind::Jsw => Decision::Server(assign_jsw(st, rng)),
            PolicyKind::CjsqN => Decision::Server(assign_cjsq(st, p.n, rng)),
            PolicyKind::MjsqN => Decision::Server(assign_mjsq(st, p.n)),
            PolicyKind::BatchJsqD => {
                for s in assign_batch_jsq_d(st, p.batch, p.d, rng)? {
                    out.push(Decision::Server(s));
                }
                self.messages += 2 * p.d as u64;
                return Ok(());
            }
            _ => unreachable!("rejected at construction"),
        };
        if p.kind == PolicyKind::PiClass {
            let k = st.levels.min_level() as usize;
            if k > 0 && k < p.d_vector.len() {
                self.messages += 2 * p.d_vector[k] as u64;
            }
        } else {
            self.messages += p.probes_per_task(st.n());
        }
        out.push(d);
        Ok(())
    }

    fn admit(&mut self, s: usize, arrival: f64, ctx: &mut Ctx<'_, DispatchEvent>) -> Result<()> {
        let service = self.spec.service.sample(ctx.rng);
        let k = self.state.queue(s);
        self.obs.inc(arrival, k);
        let finish = match self.spec.discipline {
            Discipline::Fcfs => {
                let (start, finish) = self.state.admit_fcfs(s, service);
                self.waits.admitted(arrival, start - arrival, finish - arrival, k > 0);
                if self.spec.record_tasks {
                    self.tasks.push(TaskRecord { arrival, start, service, server: s });
                }
                finish
            }
            Discipline::Pool => {
                self.state.admit_pool(s);
                self.waits.admitted(arrival, 0.0, service, false);
                arrival + service
            }
        };
        ctx.trace.log(arrival, EventKind::Admit, Some(s), || format!("q={}", k + 1));
        ctx.queue.schedule(finish, DispatchEvent::Departure(s))
    }
}

impl Model for DispatchModel {
    type Event = DispatchEvent;

    fn init(&mut self, ctx: &mut Ctx<'_, DispatchEvent>) -> Result<()> {
        self.obs.advance(0.0);
        let initial = std::mem::take(&mut self.spec.initial);
        for (s, &q) in initial.iter().enumerate() {
            if self.spec.buffer.is_some_and(|b| q > b) {
                return invalid("initial queue exceeds buffer");
            }
            for _ in 0..q {
                let service = self.spec.service.sample(ctx.rng);
                let k = self.state.queue(s);
                self.obs.inc(0.0, k);
                let finish = match self.spec.discipline {
                    Discipline::Fcfs => self.state.admit_fcfs(s, service).1,
                    Discipline::Pool => {
                        self.state.admit_pool(s);
                        service
                    }
                };
                ctx.queue.schedule(finish, DispatchEvent::Departure(s))?;
            }
        }
        self.spec.initial = initial;
        if self.batch_rate > 0.0 {
            let dt = exp_unchecked(self.batch_rate, ctx.rng);
            ctx.queue.schedule(dt, DispatchEvent::Arrival)?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: DispatchEvent, ctx: &mut Ctx<'_, DispatchEvent>) -> Result<()> {
        let now = ctx.now();
        self.obs.advance(now);
        self.state.now = now;
        if self.obs.tracks_law() {
            self.obs.law_step(now, self.state.queues());
        }
        match ev {
            DispatchEvent::Arrival => {
                let mut decisions = Vec::with_capacity(1);
                self.choose(ctx.rng, &mut decisions)?;
                for d in decisions {
                    ctx.trace.log(now, EventKind::Arrival, None, String::new);
                    self.waits.arrival(now);
                    match d {
                        Decision::Server(s) if !self.state.is_full(s) => self.admit(s, now, ctx)?,
                        Decision::Server(s) => {
                            self.state.losses += 1;
                            self.waits.lost(now);
                            ctx.trace.log(now, EventKind::Loss, Some(s), || "full".into());
                        }
                        Decision::Discard => {
                            self.state.losses += 1;
                            self.waits.lost(now);
                            ctx.trace.log(now, EventKind::Loss, None, || "discard".into());
                        }
                    }
                }
                let dt = exp_unchecked(self.batch_rate, ctx.rng);
                ctx.queue.schedule(now + dt, DispatchEvent::Arrival)?;
            }
            DispatchEvent::Departure(s) => {
                let k = self.state.queue(s);
                if k == 0 {
                    return Err(Error::SimulationFault {
                        time: now,
                        detail: format!("departure from empty server {}", s + 1),
                    });
                }
                self.obs.dec(now, k);
                self.state.depart(s);
                if k == 1 && matches!(self.spec.policy.kind, PolicyKind::Jiq | PolicyKind::PiClass) {
                    // idle server reports to the dispatcher
                    self.messages += 1;
                }
                ctx.trace.log(now, EventKind::Departure, Some(s), || format!("q={}", k - 1));
            }
        }
        Ok(())
    }

    fn finish(&mut self, horizon: f64) {
        self.obs.finish(horizon, self.state.queues());
    }
}
