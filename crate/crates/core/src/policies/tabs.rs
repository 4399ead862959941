//! Token-based auto-scaling: servers advertise their power state to the
//! dispatcher with coloured tokens (green idle-on, yellow busy, red off,
//! orange in setup).

use rand::RngCore;

use crate::error::{Error, Result};
use crate::state::{IndexedSet, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServerMode {
    Busy,
    IdleOn,
    IdleOff,
    Setup,
}

impl ServerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ServerMode::Busy => "busy",
            ServerMode::IdleOn => "idle-on",
            ServerMode::IdleOff => "idle-off",
            ServerMode::Setup => "setup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Green,
    Yellow,
    Red,
    Orange,
}

pub fn token_for(mode: ServerMode) -> Token {
    match mode {
        ServerMode::Busy => Token::Yellow,
        ServerMode::IdleOn => Token::Green,
        ServerMode::IdleOff => Token::Red,
        ServerMode::Setup => Token::Orange,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabsArrival {
    /// Server that receives the task, `None` if it is lost.
    pub server: Option<usize>,
    /// Server whose setup was initiated by this arrival.
    pub setup: Option<usize>,
}

/// Per-server modes, token pools and timer epochs.
///
/// Every mode change bumps the server's epoch; timers carry the epoch they
/// were armed with and are ignored when it no longer matches.
#[derive(Debug, Clone)]
pub struct TabsState {
    pub sys: SystemState,
    mode: Vec<ServerMode>,
    green: IndexedSet,
    red: IndexedSet,
    orange: IndexedSet,
    busy: IndexedSet,
    epoch: Vec<u64>,
    /// Green tokens sent on completions that empty a queue.
    pub greens_on_empty: u64,
    /// Green tokens sent when a setup finishes.
    pub greens_on_setup: u64,
    pub reds: u64,
    pub setups_started: u64,
}

impl TabsState {
    /// All servers empty, each either idle-on or idle-off.
    pub fn new(n: usize, buffer: Option<u32>, all_on: bool) -> Result<Self> {
        let sys = SystemState::empty(n, buffer)?;
        let m = if all_on { ServerMode::IdleOn } else { ServerMode::IdleOff };
        Ok(Self {
            sys,
            mode: vec![m; n],
            green: if all_on { IndexedSet::full(n) } else { IndexedSet::new(n) },
            red: if all_on { IndexedSet::new(n) } else { IndexedSet::full(n) },
            orange: IndexedSet::new(n),
            busy: IndexedSet::new(n),
            epoch: vec![0; n],
            greens_on_empty: 0,
            greens_on_setup: 0,
            reds: 0,
            setups_started: 0,
        })
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

    pub fn token(&self, s: usize) -> Token {
        token_for(self.mode[s])
    }

    pub fn count(&self, m: ServerMode) -> usize {
        match m {
            ServerMode::Busy => self.busy.len(),
            ServerMode::IdleOn => self.green.len(),
            ServerMode::IdleOff => self.red.len(),
            ServerMode::Setup => self.orange.len(),
        }
    }

    pub fn messages(&self) -> u64 {
        self.greens_on_empty + self.greens_on_setup + self.reds
    }

    fn pool(&mut self, m: ServerMode) -> &mut IndexedSet {
        match m {
            ServerMode::Busy => &mut self.busy,
            ServerMode::IdleOn => &mut self.green,
            ServerMode::IdleOff => &mut self.red,
            ServerMode::Setup => &mut self.orange,
        }
    }

    fn set_mode(&mut self, s: usize, m: ServerMode) {
        let old = self.mode[s];
        self.pool(old).remove(s);
        self.pool(m).insert(s);
        self.mode[s] = m;
        self.epoch[s] += 1;
    }

    /// Put server `s` into a mode directly (used to build arbitrary states).
    pub fn force_mode(&mut self, s: usize, m: ServerMode) {
        self.set_mode(s, m);
    }

    /// Dispatch decision for one arrival. The caller performs the admission
    /// (queue increment) on the returned server and arms the setup timer.
    pub fn on_arrival<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<TabsArrival> {
        if let Some(s) = self.green.pick(rng) {
            self.set_mode(s, ServerMode::Busy);
            return Ok(TabsArrival { server: Some(s), setup: None });
        }
        let server = match self.busy.pick(rng) {
            Some(s) if !self.sys.is_full(s) => Some(s),
            _ => None,
        };
        let setup = self.red.pick(rng);
        if let Some(r) = setup {
            self.set_mode(r, ServerMode::Setup);
            self.setups_started += 1;
        }
        Ok(TabsArrival { server, setup })
    }

    /// After a task leaves `s` (queue already decremented). Returns the epoch
    /// for a standby timer when the server just became idle.
    pub fn on_departure(&mut self, s: usize) -> Result<Option<u64>> {
        if self.mode[s] != ServerMode::Busy {
            return Err(Error::SimulationFault {
                time: self.sys.now,
                detail: format!("departure from non-busy server {}", s + 1),
            });
        }
        if self.sys.queue(s) > 0 {
            return Ok(None);
        }
        self.set_mode(s, ServerMode::IdleOn);
        self.greens_on_empty += 1;
        Ok(Some(self.epoch[s]))
    }

    /// Returns whether the timer was live (server turned off).
    pub fn on_standby_expiry(&mut self, s: usize, epoch: u64) -> bool {
        if self.mode[s] != ServerMode::IdleOn || self.epoch[s] != epoch {
            return false;
        }
        self.set_mode(s, ServerMode::IdleOff);
        self.reds += 1;
        true
    }

    /// Setup finished: server goes idle-on; returns the new standby epoch.
    pub fn on_setup_complete(&mut self, s: usize) -> Result<u64> {
        if self.mode[s] != ServerMode::Setup {
            return Err(Error::SimulationFault {
                time: self.sys.now,
                detail: format!("setup completion for server {} in mode {}", s + 1, self.mode[s].as_str()),
            });
        }
        self.set_mode(s, ServerMode::IdleOn);
        self.greens_on_setup += 1;
        Ok(self.epoch[s])
    }

    /// Mode/queue/token agreement; returns a description of the first breach.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        for s in 0..self.n() {
            let q = self.sys.queue(s);
            let m = self.mode[s];
            if (m == ServerMode::Busy) != (q > 0) {
                return Err(format!("server {} mode {} with queue {q}", s + 1, m.as_str()));
            }
            let in_pool = match m {
                ServerMode::Busy => self.busy.contains(s),
                ServerMode::IdleOn => self.green.contains(s),
                ServerMode::IdleOff => self.red.contains(s),
                ServerMode::Setup => self.orange.contains(s),
            };
            if !in_pool {
                return Err(format!("server {} missing from its token pool", s + 1));
            }
            if let Some(b) = self.sys.buffer {
                if q > b {
                    return Err(format!("server {} over buffer", s + 1));
                }
            }
        }
        let total = self.busy.len() + self.green.len() + self.red.len() + self.orange.len();
        if total != self.n() {
            return Err("token pools do not partition the servers".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn state(queues: &[u32], modes: &[ServerMode]) -> TabsState {
        let mut t = TabsState::new(queues.len(), None, false).unwrap();
        for (s, (&q, &m)) in queues.iter().zip(modes).enumerate() {
            t.force_mode(s, m);
            for _ in 0..q {
                t.sys.admit_fcfs(s, 1.0);
            }
        }
        t.check_consistency().unwrap();
        t
    }

    use ServerMode::*;

    #[test]
    fn green_token_takes_task() {
        let mut rng = RngStream::new(1, 0);
        let mut t = state(&[1, 2, 0], &[Busy, Busy, IdleOn]);
        let a = t.on_arrival(&mut rng).unwrap();
        assert_eq!(a, TabsArrival { server: Some(2), setup: None });
        assert_eq!(t.token(2), Token::Yellow);
    }

    #[test]
    fn red_token_starts_setup() {
        let mut rng = RngStream::new(2, 0);
        let mut hits = [0u32; 3];
        for _ in 0..200 {
            let mut t = state(&[1, 0, 3], &[Busy, IdleOff, Busy]);
            let a = t.on_arrival(&mut rng).unwrap();
            assert_eq!(a.setup, Some(1));
            assert_eq!(t.token(1), Token::Orange);
            hits[a.server.unwrap()] += 1;
        }
        assert_eq!(hits[1], 0);
        assert!(hits[0] > 50 && hits[2] > 50);
    }

    #[test]
    fn all_busy_no_tokens() {
        let mut rng = RngStream::new(3, 0);
        let mut t = state(&[1, 1], &[Busy, Busy]);
        let a = t.on_arrival(&mut rng).unwrap();
        assert!(a.server.is_some());
        assert_eq!(a.setup, None);
    }

    #[test]
    fn nobody_on_loses_task() {
        let mut rng = RngStream::new(4, 0);
        let mut t = state(&[0, 0], &[IdleOff, IdleOff]);
        let a = t.on_arrival(&mut rng).unwrap();
        assert_eq!(a.server, None);
        assert!(a.setup.is_some());
    }

    #[test]
    fn lifecycle_transitions() {
        let mut t = state(&[1], &[Busy]);
        t.sys.depart(0);
        let e = t.on_departure(0).unwrap().expect("became idle");
        assert_eq!(t.mode(0), IdleOn);
        assert_eq!(t.token(0), Token::Green);
        assert!(t.on_standby_expiry(0, e));
        assert_eq!(t.token(0), Token::Red);
        // stale timers are void
        assert!(!t.on_standby_expiry(0, e));
        t.force_mode(0, Setup);
        let e2 = t.on_setup_complete(0).unwrap();
        assert_eq!(t.token(0), Token::Green);
        assert_eq!(t.epoch(0), e2);
        assert!(t.on_setup_complete(0).is_err());
    }
}
