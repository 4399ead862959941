use rand::seq::index;
use rand::{Rng, RngCore};

use crate::error::{invalid, Result};
use crate::state::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Random,
    RoundRobin,
    Jsq,
    JsqD,
    PiClass,
    Jiq,
    Jsw,
    BatchJsqD,
    CjsqN,
    MjsqN,
    Tabs,
    DelayedOff,
    GraphJsq,
    GraphJsqD,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 14] = [
        PolicyKind::Random,
        PolicyKind::RoundRobin,
        PolicyKind::Jsq,
        PolicyKind::JsqD,
        PolicyKind::PiClass,
        PolicyKind::Jiq,
        PolicyKind::Jsw,
        PolicyKind::BatchJsqD,
        PolicyKind::CjsqN,
        PolicyKind::MjsqN,
        PolicyKind::Tabs,
        PolicyKind::DelayedOff,
        PolicyKind::GraphJsq,
        PolicyKind::GraphJsqD,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::Jsq => "jsq",
            PolicyKind::JsqD => "jsq_d",
            PolicyKind::PiClass => "pi_class",
            PolicyKind::Jiq => "jiq",
            PolicyKind::Jsw => "jsw",
            PolicyKind::BatchJsqD => "batch_jsq_d",
            PolicyKind::CjsqN => "cjsq_n",
            PolicyKind::MjsqN => "mjsq_n",
            PolicyKind::Tabs => "tabs",
            PolicyKind::DelayedOff => "delayedoff",
            PolicyKind::GraphJsq => "graph_jsq",
            PolicyKind::GraphJsqD => "graph_jsq_d",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub d: usize,
    pub d_vector: Vec<usize>,
    pub n: usize,
    pub batch: usize,
    /// Standby (turn-off) rate.
    pub mu: f64,
    /// Setup rate.
    pub nu: f64,
    pub with_replacement: bool,
    /// Graph JSQ(d): a vertex with fewer than d-1 neighbours keeps its own task.
    pub sub_degree_self: bool,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            d: 2,
            d_vector: Vec::new(),
            n: 0,
            batch: 1,
            mu: 0.1,
            nu: 0.1,
            with_replacement: false,
            sub_degree_self: true,
        }
    }

    pub fn jsq_d(d: usize) -> Self {
        Self { d, ..Self::new(PolicyKind::JsqD) }
    }

    pub fn pi_class(d_vector: Vec<usize>) -> Self {
        Self { d_vector, ..Self::new(PolicyKind::PiClass) }
    }

    pub fn batch(batch: usize, d: usize) -> Self {
        Self { batch, d, ..Self::new(PolicyKind::BatchJsqD) }
    }

    pub fn tabs(mu: f64, nu: f64) -> Self {
        Self { mu, nu, ..Self::new(PolicyKind::Tabs) }
    }

    /// Checks the parameters against a system of `n_servers` with buffer `buffer`.
    pub fn validate(&self, n_servers: usize, buffer: Option<u32>) -> Result<()> {
        match self.kind {
            PolicyKind::JsqD => {
                if self.d == 0 || (!self.with_replacement && self.d > n_servers) {
                    return invalid(format!("jsq_d needs 1 <= d <= N, got d={}", self.d));
                }
            }
            PolicyKind::PiClass => {
                let Some(b) = buffer else {
                    return invalid("pi_class requires a finite buffer");
                };
                if self.d_vector.len() != b as usize {
                    return invalid(format!("pi_class needs B={b} sample sizes, got {}", self.d_vector.len()));
                }
                if self.d_vector[0] != n_servers {
                    return invalid(format!("pi_class requires d_0 = N = {n_servers}"));
                }
                if self.d_vector.iter().any(|&d| d == 0 || d > n_servers) {
                    return invalid("pi_class sample sizes must lie in 1..=N");
                }
            }
            PolicyKind::BatchJsqD => {
                if self.batch == 0 || self.d < self.batch {
                    return invalid(format!("batch_jsq_d needs d >= l >= 1, got d={} l={}", self.d, self.batch));
                }
                if self.d > n_servers {
                    return invalid("batch_jsq_d needs d <= N");
                }
            }
            PolicyKind::CjsqN | PolicyKind::MjsqN => {
                if self.n >= n_servers {
                    return invalid(format!("n must be < N, got n={}", self.n));
                }
            }
            PolicyKind::Tabs | PolicyKind::DelayedOff => {
                if !(self.mu > 0.0 && self.nu > 0.0) {
                    return invalid("standby and setup rates must be positive");
                }
            }
            PolicyKind::GraphJsqD if self.d < 2 => {
                return invalid("graph_jsq_d needs d >= 2");
            }
            _ => {}
        }
        Ok(())
    }

    /// Probe messages exchanged per dispatching decision (excluding server-initiated tokens).
    pub fn probes_per_task(&self, n_servers: usize) -> u64 {
        match self.kind {
            PolicyKind::JsqD | PolicyKind::GraphJsqD => 2 * self.d as u64,
            PolicyKind::Jsq | PolicyKind::Jsw | PolicyKind::CjsqN | PolicyKind::MjsqN => 2 * n_servers as u64,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Server(usize),
    Discard,
}

/// Uniform argmin of `key` over `cands`, ties broken uniformly at random.
#[inline]
pub(crate) fn uniform_argmin<R, K>(cands: impl IntoIterator<Item = usize>, key: K, rng: &mut R) -> Option<usize>
where
    R: RngCore + ?Sized,
    K: Fn(usize) -> u32,
{
    let mut best = None;
    let mut best_key = u32::MAX;
    let mut ties = 0u32;
    for c in cands {
        let k = key(c);
        if best.is_none() || k < best_key {
            best = Some(c);
            best_key = k;
            ties = 1;
        } else if k == best_key {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best = Some(c);
            }
        }
    }
    best
}

/// `d` distinct indices from `0..n` in uniformly random order.
pub(crate) fn sample_distinct<R: RngCore + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<usize> {
    if d == 2 && n >= 2 {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        return vec![a, b];
    }
    index::sample(rng, n, d).into_vec()
}

pub(crate) fn sample_indices<R: RngCore + ?Sized>(
    n: usize,
    d: usize,
    with_replacement: bool,
    rng: &mut R,
) -> Vec<usize> {
    if with_replacement {
        (0..d).map(|_| rng.random_range(0..n)).collect()
    } else {
        sample_distinct(n, d, rng)
    }
}

pub fn assign_random<R: RngCore + ?Sized>(state: &SystemState, rng: &mut R) -> usize {
    rng.random_range(0..state.n())
}

pub fn assign_round_robin(state: &mut SystemState) -> usize {
    let s = state.rr_cursor;
    state.rr_cursor = (s + 1) % state.n();
    s
}

pub fn assign_jsq<R: RngCore + ?Sized>(state: &SystemState, rng: &mut R) -> usize {
    state.levels.pick_min(rng)
}

pub fn assign_jsq_d<R: RngCore + ?Sized>(
    state: &SystemState,
    d: usize,
    with_replacement: bool,
    rng: &mut R,
) -> Result<usize> {
    let n = state.n();
    if d == 0 || (!with_replacement && d > n) {
        return invalid(format!("jsq_d needs 1 <= d <= N, got d={d}"));
    }
    if d == 1 {
        return Ok(rng.random_range(0..n));
    }
    let cands = sample_indices(n, d, with_replacement, rng);
    Ok(uniform_argmin(cands, |s| state.queue(s), rng).expect("d >= 1"))
}

/// JIQ: an idle server if any, otherwise a uniformly random one.
pub fn assign_jiq<R: RngCore + ?Sized>(state: &SystemState, rng: &mut R) -> usize {
    state.levels.pick_at(0, rng).unwrap_or_else(|| rng.random_range(0..state.n()))
}

pub fn assign_pi_class<R: RngCore + ?Sized>(state: &SystemState, dvec: &[usize], rng: &mut R) -> Result<Decision> {
    let n = state.n();
    let Some(b) = state.buffer else {
        return invalid("pi_class requires a finite buffer");
    };
    if dvec.first() != Some(&n) {
        return invalid(format!("pi_class requires d_0 = N = {n}"));
    }
    let k = state.levels.min_level();
    if k >= b {
        return Ok(Decision::Discard);
    }
    let dk = *dvec
        .get(k as usize)
        .ok_or_else(|| crate::error::Error::InvalidParameter("d-vector shorter than buffer".into()))?;
    if dk >= n {
        return Ok(Decision::Server(state.levels.pick_min(rng)));
    }
    let s = assign_jsq_d(state, dk, false, rng)?;
    Ok(Decision::Server(s))
}

/// Smallest residual workload; idle servers (zero work) tie uniformly.
pub fn assign_jsw<R: RngCore + ?Sized>(state: &SystemState, rng: &mut R) -> usize {
    if let Some(s) = state.levels.pick_at(0, rng) {
        return s;
    }
    state.least_loaded_busy().expect("some server is busy")
}

pub fn assign_batch_jsq_d<R: RngCore + ?Sized>(
    state: &SystemState,
    l: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if l == 0 || d < l {
        return invalid(format!("batch assignment needs d >= l >= 1, got d={d} l={l}"));
    }
    if d > state.n() {
        return invalid("batch assignment needs d <= N");
    }
    let mut cands = sample_distinct(state.n(), d, rng);
    // stable: equal queues keep their sampled order
    cands.sort_by_key(|&s| state.queue(s));
    cands.truncate(l);
    Ok(cands)
}

/// The server at 0-based rank `r` when servers are ordered by (queue, id).
pub fn ordered_server(state: &SystemState, r: usize) -> usize {
    let mut keys: Vec<(u32, usize)> = (0..state.n()).map(|s| (state.queue(s), s)).collect();
    let (_, &mut (_, s), _) = keys.select_nth_unstable(r);
    s
}

pub fn assign_cjsq<R: RngCore + ?Sized>(state: &SystemState, n: usize, rng: &mut R) -> usize {
    let r = rng.random_range(0..=n.min(state.n() - 1));
    ordered_server(state, r)
}

pub fn assign_mjsq(state: &SystemState, n: usize) -> usize {
    ordered_server(state, n.min(state.n() - 1))
}
