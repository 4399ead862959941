use rand::Rng;

use crate::engine::{Ctx, EventKind, Model};
use crate::error::{invalid, Result};
use crate::policies::tabs::{ServerMode, TabsState};
use crate::sampling::{exp_unchecked, ServiceDist};

use super::observer::{OccupancyObserver, TimeIntegral, WaitStats};

/// Per-server arrival rate, possibly time-varying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFn {
    Constant(f64),
    /// `base + amplitude * sin(t / period)`
    Periodic {
        base: f64,
        amplitude: f64,
        period: f64,
    },
}

impl RateFn {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            RateFn::Constant(l) => l,
            RateFn::Periodic { base, amplitude, period } => base + amplitude * (t / period).sin(),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            RateFn::Constant(l) => l,
            RateFn::Periodic { base, amplitude, .. } => base + amplitude.abs(),
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            RateFn::Constant(l) => l,
            RateFn::Periodic { base, amplitude, .. } => base - amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabsStart {
    AllIdleOn,
    AllIdleOff,
}

#[derive(Debug, Clone)]
pub struct TabsSpec {
    pub n: usize,
    pub lambda: RateFn,
    pub mu: f64,
    pub nu: f64,
    pub buffer: Option<u32>,
    pub service: ServiceDist,
    pub start: TabsStart,
    pub window_start: f64,
    pub sample_interval: Option<f64>,
    pub p_full: f64,
    pub p_idle: f64,
}

impl TabsSpec {
    pub fn new(n: usize, lambda: f64, mu: f64, nu: f64) -> Self {
        Self {
            n,
            lambda: RateFn::Constant(lambda),
            mu,
            nu,
            buffer: None,
            service: ServiceDist::Exp,
            start: TabsStart::AllIdleOn,
            window_start: 0.0,
            sample_interval: None,
            p_full: 200.0,
            p_idle: 140.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("need at least one server");
        }
        if !(self.mu > 0.0 && self.nu > 0.0) {
            return invalid("standby and setup rates must be positive");
        }
        if !(self.lambda.min() >= 0.0) || !(self.lambda.max() > 0.0) {
            return invalid("arrival rate must be nonnegative and not identically zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabsEvent {
    /// Candidate arrival from the dominating Poisson stream (thinned).
    Arrival,
    Departure(usize),
    Standby(usize, u64),
    SetupDone(usize),
}

/// Mode occupation counts: busy, idle-on, idle-off, setup.
pub type ModeCounts = [usize; 4];

fn mode_index(m: ServerMode) -> usize {
    match m {
        ServerMode::Busy => 0,
        ServerMode::IdleOn => 1,
        ServerMode::IdleOff => 2,
        ServerMode::Setup => 3,
    }
}

pub struct TabsModel {
    pub spec: TabsSpec,
    pub tabs: TabsState,
    pub obs: OccupancyObserver,
    pub waits: WaitStats,
    /// Time integrals of the number of servers in each mode.
    pub modes: [TimeIntegral; 4],
    pub mode_samples: Vec<ModeCounts>,
    next_sample: f64,
}

impl TabsModel {
    pub fn new(spec: TabsSpec) -> Result<Self> {
        spec.validate()?;
        let all_on = spec.start == TabsStart::AllIdleOn;
        let tabs = TabsState::new(spec.n, spec.buffer, all_on)?;
        let n = spec.n as f64;
        let modes = [
            TimeIntegral::new(spec.window_start, 0.0),
            TimeIntegral::new(spec.window_start, if all_on { n } else { 0.0 }),
            TimeIntegral::new(spec.window_start, if all_on { 0.0 } else { n }),
            TimeIntegral::new(spec.window_start, 0.0),
        ];
        Ok(Self {
            obs: OccupancyObserver::new(spec.n, spec.window_start, spec.sample_interval, false),
            waits: WaitStats::new(spec.window_start),
            tabs,
            modes,
            mode_samples: Vec::new(),
            next_sample: 0.0,
            spec,
        })
    }

    fn counts(&self) -> ModeCounts {
        [
            self.tabs.count(ServerMode::Busy),
            self.tabs.count(ServerMode::IdleOn),
            self.tabs.count(ServerMode::IdleOff),
            self.tabs.count(ServerMode::Setup),
        ]
    }

    fn sample_modes(&mut self, t: f64) {
        if let Some(dt) = self.spec.sample_interval.filter(|&d| d > 0.0) {
            while self.next_sample <= t {
                let c = self.counts();
                self.mode_samples.push(c);
                self.next_sample = self.mode_samples.len() as f64 * dt;
            }
        }
    }

    fn transition(&mut self, t: f64, from: ServerMode, to: ServerMode) {
        self.modes[mode_index(from)].add(t, -1.0);
        self.modes[mode_index(to)].add(t, 1.0);
    }

    fn arm_standby(&self, s: usize, epoch: u64, ctx: &mut Ctx<'_, TabsEvent>) -> Result<()> {
        let dt = exp_unchecked(self.spec.mu, ctx.rng);
        ctx.queue.schedule_in(dt, TabsEvent::Standby(s, epoch))
    }

    /// Time-averaged power per server.
    pub fn mean_power(&mut self, horizon: f64) -> f64 {
        let n = self.spec.n as f64;
        let busy = self.modes[0].average(horizon);
        let idle = self.modes[1].average(horizon);
        let setup = self.modes[3].average(horizon);
        (self.spec.p_full * (busy + setup) + self.spec.p_idle * idle) / n
    }

    /// Fraction of servers in `m`, time-averaged over the window.
    pub fn mode_fraction(&mut self, m: ServerMode, horizon: f64) -> f64 {
        self.modes[mode_index(m)].average(horizon) / self.spec.n as f64
    }
}

impl Model for TabsModel {
    type Event = TabsEvent;

    fn init(&mut self, ctx: &mut Ctx<'_, TabsEvent>) -> Result<()> {
        self.sample_modes(0.0);
        self.obs.advance(0.0);
        if self.spec.start == TabsStart::AllIdleOn {
            for s in 0..self.spec.n {
                self.arm_standby(s, self.tabs.epoch(s), ctx)?;
            }
        }
        let dt = exp_unchecked(self.spec.lambda.max() * self.spec.n as f64, ctx.rng);
        ctx.queue.schedule(dt, TabsEvent::Arrival)
    }

    fn handle(&mut self, ev: TabsEvent, ctx: &mut Ctx<'_, TabsEvent>) -> Result<()> {
        let now = ctx.now();
        self.sample_modes(now);
        self.obs.advance(now);
        self.tabs.sys.now = now;
        match ev {
            TabsEvent::Arrival => {
                let lmax = self.spec.lambda.max();
                let next = now + exp_unchecked(lmax * self.spec.n as f64, ctx.rng);
                ctx.queue.schedule(next, TabsEvent::Arrival)?;
                if let RateFn::Periodic { .. } = self.spec.lambda {
                    let u: f64 = ctx.rng.random();
                    if u * lmax > self.spec.lambda.at(now) {
                        return Ok(());
                    }
                }
                ctx.trace.log(now, EventKind::Arrival, None, String::new);
                self.waits.arrival(now);
                // a server taken via its green token is busy with an empty queue
                let was_green = |t: &TabsState, s: usize| t.mode(s) == ServerMode::Busy && t.sys.queue(s) == 0;
                let a = self.tabs.on_arrival(ctx.rng)?;
                if let Some(r) = a.setup {
                    self.transition(now, ServerMode::IdleOff, ServerMode::Setup);
                    ctx.trace.log(now, EventKind::ModeChange, Some(r), || "setup".into());
                    let dt = exp_unchecked(self.spec.nu, ctx.rng);
                    ctx.queue.schedule_in(dt, TabsEvent::SetupDone(r))?;
                }
                match a.server {
                    Some(s) => {
                        if was_green(&self.tabs, s) {
                            self.transition(now, ServerMode::IdleOn, ServerMode::Busy);
                        }
                        let k = self.tabs.sys.queue(s);
                        let service = self.spec.service.sample(ctx.rng);
                        self.obs.inc(now, k);
                        let (start, finish) = self.tabs.sys.admit_fcfs(s, service);
                        self.waits.admitted(now, start - now, finish - now, k > 0);
                        ctx.trace.log(now, EventKind::Admit, Some(s), || format!("q={}", k + 1));
                        ctx.queue.schedule(finish, TabsEvent::Departure(s))?;
                    }
                    None => {
                        self.tabs.sys.losses += 1;
                        self.waits.lost(now);
                        ctx.trace.log(now, EventKind::Loss, None, || "no server on".into());
                    }
                }
            }
            TabsEvent::Departure(s) => {
                let k = self.tabs.sys.queue(s);
                self.obs.dec(now, k);
                self.tabs.sys.depart(s);
                ctx.trace.log(now, EventKind::Departure, Some(s), || format!("q={}", k - 1));
                if let Some(epoch) = self.tabs.on_departure(s)? {
                    self.transition(now, ServerMode::Busy, ServerMode::IdleOn);
                    ctx.trace.log(now, EventKind::ModeChange, Some(s), || "idle-on".into());
                    self.arm_standby(s, epoch, ctx)?;
                }
            }
            TabsEvent::Standby(s, epoch) => {
                if self.tabs.on_standby_expiry(s, epoch) {
                    self.transition(now, ServerMode::IdleOn, ServerMode::IdleOff);
                    ctx.trace.log(now, EventKind::ModeChange, Some(s), || "idle-off".into());
                }
            }
            TabsEvent::SetupDone(s) => {
                let epoch = self.tabs.on_setup_complete(s)?;
                self.transition(now, ServerMode::Setup, ServerMode::IdleOn);
                ctx.trace.log(now, EventKind::ModeChange, Some(s), || "idle-on".into());
                self.arm_standby(s, epoch, ctx)?;
            }
        }
        Ok(())
    }

    fn finish(&mut self, horizon: f64) {
        self.sample_modes(horizon);
        self.obs.finish(horizon, self.tabs.sys.queues());
        for m in &mut self.modes {
            m.average(horizon);
        }
    }
}
