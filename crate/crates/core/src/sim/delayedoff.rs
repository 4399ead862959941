use crate::engine::{Ctx, EventKind, Model};
use crate::error::Result;
use crate::policies::delayedoff::{DelayedOffArrival, DelayedOffState, NextWork};
use crate::policies::tabs::ServerMode;
use crate::sampling::exp_unchecked;

use super::observer::{OccupancyObserver, TimeIntegral, WaitStats};
use super::tabs::{TabsSpec, TabsStart};

/// Same knobs as TABS; only the `Constant` arrival rate is used.
pub type DelayedOffSpec = TabsSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayedOffEvent {
    Arrival,
    Completion(usize),
    Standby(usize, u64),
    SetupDone(usize, u64),
}

pub struct DelayedOffModel {
    pub spec: DelayedOffSpec,
    pub st: DelayedOffState,
    pub obs: OccupancyObserver,
    pub waits: WaitStats,
    pub modes: [TimeIntegral; 4],
    pub max_waiting: usize,
}

const MODES: [ServerMode; 4] = [ServerMode::Busy, ServerMode::IdleOn, ServerMode::IdleOff, ServerMode::Setup];

impl DelayedOffModel {
    pub fn new(spec: DelayedOffSpec) -> Result<Self> {
        spec.validate()?;
        let st = DelayedOffState::new(spec.n, spec.start == TabsStart::AllIdleOn);
        let modes = MODES.map(|m| TimeIntegral::new(spec.window_start, st.count(m) as f64));
        Ok(Self {
            obs: OccupancyObserver::new(spec.n, spec.window_start, spec.sample_interval, false),
            waits: WaitStats::new(spec.window_start),
            st,
            modes,
            max_waiting: 0,
            spec,
        })
    }

    fn refresh_modes(&mut self, t: f64) {
        for (i, m) in MODES.iter().enumerate() {
            self.modes[i].set(t, self.st.count(*m) as f64);
        }
    }

    fn start_service(&mut self, s: usize, arrival: f64, ctx: &mut Ctx<'_, DelayedOffEvent>) -> Result<()> {
        let now = ctx.now();
        let service = self.spec.service.sample(ctx.rng);
        self.obs.inc(now, 0);
        self.waits.admitted(arrival, now - arrival, now - arrival + service, now > arrival);
        ctx.queue.schedule_in(service, DelayedOffEvent::Completion(s))
    }

    fn go_idle(&mut self, s: usize, epoch: u64, ctx: &mut Ctx<'_, DelayedOffEvent>) -> Result<()> {
        let dt = exp_unchecked(self.spec.mu, ctx.rng);
        ctx.queue.schedule_in(dt, DelayedOffEvent::Standby(s, epoch))
    }

    pub fn mean_power(&mut self, horizon: f64) -> f64 {
        let n = self.spec.n as f64;
        let busy = self.modes[0].average(horizon);
        let idle = self.modes[1].average(horizon);
        let setup = self.modes[3].average(horizon);
        (self.spec.p_full * (busy + setup) + self.spec.p_idle * idle) / n
    }
}

impl Model for DelayedOffModel {
    type Event = DelayedOffEvent;

    fn init(&mut self, ctx: &mut Ctx<'_, DelayedOffEvent>) -> Result<()> {
        self.obs.advance(0.0);
        if self.spec.start == TabsStart::AllIdleOn {
            for s in 0..self.spec.n {
                self.go_idle(s, self.st.epoch(s), ctx)?;
            }
        }
        let rate = self.spec.lambda.max() * self.spec.n as f64;
        ctx.queue.schedule(exp_unchecked(rate, ctx.rng), DelayedOffEvent::Arrival)
    }

    fn handle(&mut self, ev: DelayedOffEvent, ctx: &mut Ctx<'_, DelayedOffEvent>) -> Result<()> {
        let now = ctx.now();
        self.obs.advance(now);
        match ev {
            DelayedOffEvent::Arrival => {
                let rate = self.spec.lambda.max() * self.spec.n as f64;
                ctx.queue.schedule_in(exp_unchecked(rate, ctx.rng), DelayedOffEvent::Arrival)?;
                ctx.trace.log(now, EventKind::Arrival, None, String::new);
                self.waits.arrival(now);
                match self.st.on_arrival(now, ctx.rng) {
                    DelayedOffArrival::ServeNow(s) => {
                        ctx.trace.log(now, EventKind::Admit, Some(s), String::new);
                        self.start_service(s, now, ctx)?;
                    }
                    DelayedOffArrival::Queued { setup } => {
                        ctx.trace.log(now, EventKind::Admit, None, || "queued".into());
                        self.max_waiting = self.max_waiting.max(self.st.waiting.len());
                        if let Some(s) = setup {
                            let dt = exp_unchecked(self.spec.nu, ctx.rng);
                            ctx.queue.schedule_in(dt, DelayedOffEvent::SetupDone(s, self.st.epoch(s)))?;
                        }
                    }
                }
            }
            DelayedOffEvent::Completion(s) => {
                self.obs.dec(now, 1);
                ctx.trace.log(now, EventKind::Departure, Some(s), String::new);
                match self.st.on_completion(s, ctx.rng) {
                    NextWork::Take { arrival, .. } => self.start_service(s, arrival, ctx)?,
                    NextWork::Idle { epoch } => self.go_idle(s, epoch, ctx)?,
                }
            }
            DelayedOffEvent::Standby(s, epoch) => {
                if self.st.on_standby_expiry(s, epoch) {
                    ctx.trace.log(now, EventKind::ModeChange, Some(s), || "idle-off".into());
                }
            }
            DelayedOffEvent::SetupDone(s, epoch) => match self.st.on_setup_complete(s, epoch) {
                Some(NextWork::Take { arrival, .. }) => self.start_service(s, arrival, ctx)?,
                Some(NextWork::Idle { epoch }) => self.go_idle(s, epoch, ctx)?,
                None => {}
            },
        }
        self.refresh_modes(now);
        Ok(())
    }

    fn finish(&mut self, horizon: f64) {
        let q: Vec<u32> = (0..self.spec.n).map(|s| (self.st.mode(s) == ServerMode::Busy) as u32).collect();
        self.obs.finish(horizon, &q);
        for m in &mut self.modes {
            m.average(horizon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::rng::RngStream;

    #[test]
    fn conservation_and_low_wait_at_scale() {
        let mut spec = DelayedOffSpec::new(1000, 0.3, 0.1, 0.1);
        spec.window_start = 100.0;
        let mut m = DelayedOffModel::new(spec).unwrap();
        let mut rng = RngStream::new(1, 0);
        let t = run(&mut m, 300.0, &mut rng, false).unwrap();
        assert_eq!(t.arrivals, t.admitted);
        assert!(m.waits.mean_wait() < 0.5, "{}", m.waits.mean_wait());
        assert!((m.obs.q_avg(1, 300.0) - 0.3).abs() < 0.03);
        let p = m.mean_power(300.0);
        assert!((0.3 * 200.0 - 5.0..140.0).contains(&p), "{p}");
    }
}
