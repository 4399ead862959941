//! Centralised M/M/N with setup times and delayed turn-off.

use std::collections::VecDeque;

use rand::RngCore;

use super::tabs::ServerMode;
use crate::state::IndexedSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayedOffArrival {
    ServeNow(usize),
    Queued { setup: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextWork {
    /// Serve the head-of-line task that arrived at the given time.
    Take { arrival: f64, aborted: Option<usize> },
    /// Nothing waiting: idle-on, standby timer with this epoch.
    Idle { epoch: u64 },
}

#[derive(Debug, Clone)]
pub struct DelayedOffState {
    mode: Vec<ServerMode>,
    idle_on: IndexedSet,
    off: IndexedSet,
    setup: IndexedSet,
    busy: usize,
    epoch: Vec<u64>,
    pub waiting: VecDeque<f64>,
    pub setups_started: u64,
    pub setups_aborted: u64,
}

impl DelayedOffState {
    pub fn new(n: usize, all_on: bool) -> Self {
        let m = if all_on { ServerMode::IdleOn } else { ServerMode::IdleOff };
        Self {
            mode: vec![m; n],
            idle_on: if all_on { IndexedSet::full(n) } else { IndexedSet::new(n) },
            off: if all_on { IndexedSet::new(n) } else { IndexedSet::full(n) },
            setup: IndexedSet::new(n),
            busy: 0,
            epoch: vec![0; n],
            waiting: VecDeque::new(),
            setups_started: 0,
            setups_aborted: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.mode.len()
    }

    pub fn mode(&self, s: usize) -> ServerMode {
        self.mode[s]
    }

    pub fn epoch(&self, s: usize) -> u64 {
        self.epoch[s]
    }

    pub fn count(&self, m: ServerMode) -> usize {
        match m {
            ServerMode::Busy => self.busy,
            ServerMode::IdleOn => self.idle_on.len(),
            ServerMode::IdleOff => self.off.len(),
            ServerMode::Setup => self.setup.len(),
        }
    }

    fn set_mode(&mut self, s: usize, m: ServerMode) {
        match self.mode[s] {
            ServerMode::Busy => self.busy -= 1,
            ServerMode::IdleOn => {
                self.idle_on.remove(s);
            }
            ServerMode::IdleOff => {
                self.off.remove(s);
            }
            ServerMode::Setup => {
                self.setup.remove(s);
            }
        }
        match m {
            ServerMode::Busy => self.busy += 1,
            ServerMode::IdleOn => {
                self.idle_on.insert(s);
            }
            ServerMode::IdleOff => {
                self.off.insert(s);
            }
            ServerMode::Setup => {
                self.setup.insert(s);
            }
        }
        self.mode[s] = m;
        self.epoch[s] += 1;
    }

    pub fn on_arrival<R: RngCore + ?Sized>(&mut self, now: f64, rng: &mut R) -> DelayedOffArrival {
        if let Some(s) = self.idle_on.pick(rng) {
            self.set_mode(s, ServerMode::Busy);
            return DelayedOffArrival::ServeNow(s);
        }
        self.waiting.push_back(now);
        let setup = self.off.pick(rng);
        if let Some(s) = setup {
            self.set_mode(s, ServerMode::Setup);
            self.setups_started += 1;
        }
        DelayedOffArrival::Queued { setup }
    }

    /// Server `s` finished a task. A pending setup becomes redundant when
    /// the freed server absorbs the task it was started for.
    pub fn on_completion<R: RngCore + ?Sized>(&mut self, s: usize, rng: &mut R) -> NextWork {
        debug_assert_eq!(self.mode[s], ServerMode::Busy);
        match self.waiting.pop_front() {
            Some(arrival) => {
                let mut aborted = None;
                if self.setup.len() > self.waiting.len() {
                    let a = self.setup.pick(rng).expect("nonempty");
                    self.set_mode(a, ServerMode::IdleOff);
                    self.setups_aborted += 1;
                    aborted = Some(a);
                }
                NextWork::Take { arrival, aborted }
            }
            None => {
                self.set_mode(s, ServerMode::IdleOn);
                NextWork::Idle { epoch: self.epoch[s] }
            }
        }
    }

    /// Returns `None` for a stale timer (setup aborted meanwhile).
    pub fn on_setup_complete(&mut self, s: usize, epoch: u64) -> Option<NextWork> {
        if self.mode[s] != ServerMode::Setup || self.epoch[s] != epoch {
            return None;
        }
        match self.waiting.pop_front() {
            Some(arrival) => {
                self.set_mode(s, ServerMode::Busy);
                Some(NextWork::Take { arrival, aborted: None })
            }
            None => {
                self.set_mode(s, ServerMode::IdleOn);
                Some(NextWork::Idle { epoch: self.epoch[s] })
            }
        }
    }

    pub fn on_standby_expiry(&mut self, s: usize, epoch: u64) -> bool {
        if self.mode[s] != ServerMode::IdleOn || self.epoch[s] != epoch {
            return false;
        }
        self.set_mode(s, ServerMode::IdleOff);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn idle_on_server_serves_immediately() {
        let mut rng = RngStream::new(1, 0);
        let mut st = DelayedOffState::new(1, true);
        assert_eq!(st.on_arrival(0.0, &mut rng), DelayedOffArrival::ServeNow(0));
        assert_eq!(st.setups_started, 0);
    }

    #[test]
    fn all_off_queues_and_starts_one_setup() {
        let mut rng = RngStream::new(2, 0);
        let mut st = DelayedOffState::new(3, false);
        match st.on_arrival(0.5, &mut rng) {
            DelayedOffArrival::Queued { setup: Some(_) } => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(st.count(ServerMode::Setup), 1);
        assert_eq!(st.waiting.len(), 1);
    }

    #[test]
    fn completion_aborts_surplus_setup() {
        let mut rng = RngStream::new(3, 0);
        let mut st = DelayedOffState::new(2, false);
        // server 0 busy by a setup that consumed the first task
        st.on_arrival(0.0, &mut rng);
        let s0 = (0..2).find(|&s| st.mode(s) == ServerMode::Setup).unwrap();
        let e = st.epoch(s0);
        assert!(matches!(st.on_setup_complete(s0, e), Some(NextWork::Take { .. })));
        // second arrival waits and starts the other server's setup
        st.on_arrival(1.0, &mut rng);
        assert_eq!(st.count(ServerMode::Setup), 1);
        // server 0 finishes and takes the waiting task: the setup is now surplus
        match st.on_completion(s0, &mut rng) {
            NextWork::Take { arrival, aborted } => {
                assert_eq!(arrival, 1.0);
                assert_eq!(aborted, Some(1 - s0));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(st.count(ServerMode::Setup), 0);
        assert_eq!(st.on_setup_complete(1 - s0, e), None);
    }
}
