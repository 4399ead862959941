//! Pathwise couplings of two dispatching policies on shared randomness,
//! and checkers for the orderings they are known to preserve.
//!
//! Both systems are kept as ascending height vectors ("ordered servers");
//! ties are irrelevant because only the occupancy vector is observed.
//! The S-coupling (single-server queues) shares the arrival clock and one
//! departure clock of rate N that fires at a uniform ordered position. The
//! T-coupling (server pools) shares arrivals and a departure clock at rate
//! max(total tasks), splitting departures into common (green) and
//! system-specific (blue/red) tasks.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_distr::Open01;

use crate::error::{invalid, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledPolicy {
    Jsq,
    /// Always the (n+1)-th ordered server.
    Mjsq(usize),
    /// Uniform among the n+1 lowest ordered servers.
    Cjsq(usize),
    JsqD(usize),
    /// JSQ(d) when its pick is among the n+1 lowest, else uniform there.
    JsqND {
        n: usize,
        d: usize,
    },
}

impl CoupledPolicy {
    pub fn name(&self) -> String {
        match *self {
            CoupledPolicy::Jsq => "jsq".into(),
            CoupledPolicy::Mjsq(n) => format!("mjsq({n})"),
            CoupledPolicy::Cjsq(n) => format!("cjsq({n})"),
            CoupledPolicy::JsqD(d) => format!("jsq_d({d})"),
            CoupledPolicy::JsqND { n, d } => format!("jsq_nd({n},{d})"),
        }
    }

    fn d(&self) -> usize {
        match *self {
            CoupledPolicy::JsqD(d) | CoupledPolicy::JsqND { d, .. } => d,
            _ => 0,
        }
    }

    /// Sloppiness n of the policy (0 for JSQ and JSQ(d)).
    pub fn sloppiness(&self) -> usize {
        match *self {
            CoupledPolicy::Mjsq(n) | CoupledPolicy::Cjsq(n) | CoupledPolicy::JsqND { n, .. } => n,
            _ => 0,
        }
    }

    fn validate(&self, servers: usize) -> Result<()> {
        let n = self.sloppiness();
        if n >= servers {
            return invalid(format!("{}: need n < N", self.name()));
        }
        let d = self.d();
        if matches!(self, CoupledPolicy::JsqD(_) | CoupledPolicy::JsqND { .. }) && !(1..=servers).contains(&d) {
            return invalid(format!("{}: need 1 <= d <= N", self.name()));
        }
        Ok(())
    }

    /// 1-based ordered position chosen for this arrival.
    fn rank(&self, draws: &Draws) -> usize {
        let low = |n: usize| ((draws.u * (n + 1) as f64) as usize).min(n) + 1;
        match *self {
            CoupledPolicy::Jsq => 1,
            CoupledPolicy::Mjsq(n) => n + 1,
            CoupledPolicy::Cjsq(n) => low(n),
            CoupledPolicy::JsqD(d) => draws.positions[..d].iter().min().copied().unwrap() + 1,
            CoupledPolicy::JsqND { n, d } => {
                let k = draws.positions[..d].iter().min().copied().unwrap() + 1;
                if k <= n + 1 {
                    k
                } else {
                    low(n)
                }
            }
        }
    }
}

/// Randomness shared by both systems at one arrival.
struct Draws {
    u: f64,
    positions: Vec<usize>,
}

fn draw<R: Rng + ?Sized>(rng: &mut R, servers: usize, d: usize) -> Draws {
    let u = rng.random::<f64>();
    let positions = if d > 0 { index::sample(rng, servers, d).into_vec() } else { Vec::new() };
    Draws { u, positions }
}

fn exp<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln() / rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub n: usize,
    /// Queue buffer (S-coupling) or pool capacity (T-coupling).
    pub buffer: Option<u32>,
    /// Arrival rate per server or pool.
    pub lambda: f64,
    pub horizon: f64,
    /// Initial heights of system A (empty = all zero).
    pub initial: Vec<u32>,
    /// Initial heights of system B when different from A.
    pub initial_b: Option<Vec<u32>>,
}

impl CouplingSpec {
    pub fn new(n: usize, buffer: Option<u32>, lambda: f64, horizon: f64) -> Self {
        CouplingSpec { n, buffer, lambda, horizon, initial: Vec::new(), initial_b: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledKind {
    Start,
    Arrival,
    Departure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEvent {
    pub time: f64,
    pub kind: CoupledKind,
    /// Q_1, Q_2, ... (index 0 is Q_1).
    pub occ_a: Vec<u64>,
    pub occ_b: Vec<u64>,
    pub loss_a: u64,
    pub loss_b: u64,
    pub delta: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrace {
    pub policy_a: CoupledPolicy,
    pub policy_b: CoupledPolicy,
    pub n: usize,
    pub buffer: Option<u32>,
    pub horizon: f64,
    pub events: Vec<CoupledEvent>,
    pub arrivals: u64,
    /// Time-averaged tasks per server, per system.
    pub mean_tasks: [f64; 2],
}

impl CoupledTrace {
    pub fn loss_fraction(&self) -> [f64; 2] {
        let last = self.events.last().unwrap();
        let a = self.arrivals.max(1) as f64;
        [last.loss_a as f64 / a, last.loss_b as f64 / a]
    }

    pub fn to_csv(&self) -> String {
        let levels = self.events.iter().map(|e| e.occ_a.len().max(e.occ_b.len())).max().unwrap_or(0);
        let mut out = String::from("time,kind");
        for sys in ["a", "b"] {
            for i in 1..=levels {
                let _ = write!(out, ",q{i}_{sys}");
            }
        }
        out.push_str(",loss_a,loss_b,delta\n");
        for e in &self.events {
            let kind = match e.kind {
                CoupledKind::Start => "start",
                CoupledKind::Arrival => "arrival",
                CoupledKind::Departure => "departure",
            };
            let _ = write!(out, "{:.17e},{kind}", e.time);
            for occ in [&e.occ_a, &e.occ_b] {
                for i in 0..levels {
                    let _ = write!(out, ",{}", occ.get(i).copied().unwrap_or(0));
                }
            }
            let _ = writeln!(out, ",{},{},{}", e.loss_a, e.loss_b, e.delta);
        }
        out
    }
}

/// Ascending server heights plus loss count.
#[derive(Debug, Clone)]
struct Ensemble {
    h: Vec<u32>,
    lost: u64,
    cap: Option<u32>,
}

impl Ensemble {
    fn new(mut h: Vec<u32>, cap: Option<u32>) -> Self {
        h.sort_unstable();
        Ensemble { h, lost: 0, cap }
    }

    fn total(&self) -> u64 {
        self.h.iter().map(|&v| v as u64).sum()
    }

    /// Add one task on the `pos`-th (1-based) ordered stack.
    fn add(&mut self, pos: usize) {
        let v = self.h[pos - 1];
        if self.cap.is_some_and(|b| v >= b) {
            self.lost += 1;
            return;
        }
        // rightmost stack of that height keeps the order
        let j = self.h.partition_point(|&x| x <= v) - 1;
        self.h[j] += 1;
    }

    /// Remove one task from the `pos`-th ordered stack, if nonempty.
    fn remove(&mut self, pos: usize) {
        let v = self.h[pos - 1];
        if v == 0 {
            return;
        }
        let j = self.h.partition_point(|&x| x < v);
        self.h[j] -= 1;
    }

    fn occupancy(&self) -> Vec<u64> {
        let top = self.h.last().copied().unwrap_or(0) as usize;
        let mut q = vec![0u64; top];
        for &v in &self.h {
            for qi in q.iter_mut().take(v as usize) {
                *qi += 1;
            }
        }
        q
    }
}

fn prepare(spec: &CouplingSpec, a: &CoupledPolicy, b: &CoupledPolicy) -> Result<(Ensemble, Ensemble)> {
    if spec.n == 0 {
        return invalid("need at least one server");
    }
    if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) || !(spec.horizon >= 0.0) {
        return invalid("need lambda >= 0 and horizon >= 0");
    }
    a.validate(spec.n)?;
    b.validate(spec.n)?;
    let init = |h: &Vec<u32>| -> Result<Vec<u32>> {
        if h.is_empty() {
            return Ok(vec![0; spec.n]);
        }
        if h.len() != spec.n {
            return invalid("initial heights must have length N");
        }
        if let Some(cap) = spec.buffer {
            if h.iter().any(|&v| v > cap) {
                return invalid("initial heights exceed the buffer");
            }
        }
        Ok(h.clone())
    };
    let ha = init(&spec.initial)?;
    let hb = match &spec.initial_b {
        Some(h) => init(h)?,
        None => ha.clone(),
    };
    let (ea, eb) = (Ensemble::new(ha, spec.buffer), Ensemble::new(hb, spec.buffer));
    if ea.h != eb.h {
        return invalid("coupled systems must start from the same occupancy state");
    }
    Ok((ea, eb))
}

struct Recorder {
    trace: CoupledTrace,
    integral: [f64; 2],
    last_t: f64,
}

impl Recorder {
    fn new(a: CoupledPolicy, b: CoupledPolicy, spec: &CouplingSpec) -> Self {
        Recorder {
            trace: CoupledTrace {
                policy_a: a,
                policy_b: b,
                n: spec.n,
                buffer: spec.buffer,
                horizon: spec.horizon,
                events: Vec::new(),
                arrivals: 0,
                mean_tasks: [0.0; 2],
            },
            integral: [0.0; 2],
            last_t: 0.0,
        }
    }

    fn advance(&mut self, t: f64, a: &Ensemble, b: &Ensemble) {
        let dt = t - self.last_t;
        self.integral[0] += dt * a.total() as f64;
        self.integral[1] += dt * b.total() as f64;
        self.last_t = t;
    }

    fn log(&mut self, time: f64, kind: CoupledKind, a: &Ensemble, b: &Ensemble, delta: u64) {
        self.trace.events.push(CoupledEvent {
            time,
            kind,
            occ_a: a.occupancy(),
            occ_b: b.occupancy(),
            loss_a: a.lost,
            loss_b: b.lost,
            delta,
        });
    }

    fn finish(mut self, horizon: f64, a: &Ensemble, b: &Ensemble) -> CoupledTrace {
        self.advance(horizon, a, b);
        let norm = horizon.max(f64::MIN_POSITIVE) * self.trace.n as f64;
        self.trace.mean_tasks = [self.integral[0] / norm, self.integral[1] / norm];
        self.trace
    }
}

/// S-coupled run of two single-server policies.
pub fn s_coupled_run(
    a: CoupledPolicy,
    b: CoupledPolicy,
    spec: &CouplingSpec,
    rng: &mut RngStream,
) -> Result<CoupledTrace> {
    let (mut ea, mut eb) = prepare(spec, &a, &b)?;
    let n = spec.n;
    let arrival_rate = spec.lambda * n as f64;
    let total_rate = arrival_rate + n as f64;
    let d = a.d().max(b.d());
    let mut rec = Recorder::new(a, b, spec);
    let mut delta = 0;
    rec.log(0.0, CoupledKind::Start, &ea, &eb, delta);
    let mut t = 0.0;
    loop {
        t += exp(rng, total_rate);
        if t > spec.horizon {
            break;
        }
        rec.advance(t, &ea, &eb);
        if rng.random::<f64>() * total_rate < arrival_rate {
            let draws = draw(rng, n, d);
            let (ra, rb) = (a.rank(&draws), b.rank(&draws));
            delta += (ra != rb) as u64;
            ea.add(ra);
            eb.add(rb);
            rec.trace.arrivals += 1;
            rec.log(t, CoupledKind::Arrival, &ea, &eb, delta);
        } else {
            let k = rng.random_range(1..=n);
            ea.remove(k);
            eb.remove(k);
            rec.log(t, CoupledKind::Departure, &ea, &eb, delta);
        }
    }
    Ok(rec.finish(spec.horizon, &ea, &eb))
}

/// Order in which system-specific (blue/red) task indices are enumerated.
/// An index is (ordered pool i, position j inside the pool).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskOrder {
    /// (i₁,j₁) < (i₂,j₂) iff i₁ < i₂, or i₁ = i₂ and j₁ < j₂.
    PoolFirst,
    /// Compare positions first, then pools.
    LevelFirst,
}

/// Pool holding the m-th (1-based) task of `mine` not covered by `other`.
fn mth_exclusive(mine: &[u32], other: &[u32], m: u64, order: TaskOrder) -> Option<usize> {
    let mut seen = 0u64;
    match order {
        TaskOrder::PoolFirst => {
            for (c, (&x, &y)) in mine.iter().zip(other).enumerate() {
                seen += x.saturating_sub(y) as u64;
                if seen >= m {
                    return Some(c);
                }
            }
        }
        TaskOrder::LevelFirst => {
            let top = mine.iter().copied().max().unwrap_or(0);
            for j in 1..=top {
                for (c, (&x, &y)) in mine.iter().zip(other).enumerate() {
                    if y < j && j <= x {
                        seen += 1;
                        if seen == m {
                            return Some(c);
                        }
                    }
                }
            }
        }
    }
    None
}

/// T-coupled run of two pool policies (`spec.buffer` is the pool size).
pub fn t_coupled_run(
    a: CoupledPolicy,
    b: CoupledPolicy,
    spec: &CouplingSpec,
    rng: &mut RngStream,
) -> Result<CoupledTrace> {
    t_coupled_run_with(a, b, spec, TaskOrder::PoolFirst, rng)
}

pub fn t_coupled_run_with(
    a: CoupledPolicy,
    b: CoupledPolicy,
    spec: &CouplingSpec,
    order: TaskOrder,
    rng: &mut RngStream,
) -> Result<CoupledTrace> {
    if spec.buffer.is_none() {
        return invalid("server pools need a finite capacity");
    }
    let (mut ea, mut eb) = prepare(spec, &a, &b)?;
    let n = spec.n;
    let arrival_rate = spec.lambda * n as f64;
    let d = a.d().max(b.d());
    let mut rec = Recorder::new(a, b, spec);
    let mut delta = 0;
    rec.log(0.0, CoupledKind::Start, &ea, &eb, delta);
    let mut t = 0.0;
    loop {
        let m_rate = ea.total().max(eb.total()) as f64;
        let total_rate = arrival_rate + m_rate;
        if total_rate <= 0.0 {
            break;
        }
        t += exp(rng, total_rate);
        if t > spec.horizon {
            break;
        }
        rec.advance(t, &ea, &eb);
        if rng.random::<f64>() * total_rate < arrival_rate {
            let draws = draw(rng, n, d);
            let (ra, rb) = (a.rank(&draws), b.rank(&draws));
            delta += (ra != rb) as u64;
            ea.add(ra);
            eb.add(rb);
            rec.trace.arrivals += 1;
            rec.log(t, CoupledKind::Arrival, &ea, &eb, delta);
            continue;
        }
        let m = m_rate as u64;
        let h: u64 = ea.h.iter().zip(&eb.h).map(|(&x, &y)| x.min(y) as u64).sum();
        let u = rng.random::<f64>();
        if u * (m as f64) < h as f64 {
            // common (green) task, uniform
            let g = rng.random_range(0..h);
            let mut acc = 0u64;
            let pool =
                ea.h.iter()
                    .zip(&eb.h)
                    .position(|(&x, &y)| {
                        acc += x.min(y) as u64;
                        acc > g
                    })
                    .unwrap();
            ea.remove(pool + 1);
            eb.remove(pool + 1);
        } else {
            let k = rng.random_range(1..=(m - h));
            let (ha, hb) = (ea.h.clone(), eb.h.clone());
            if let Some(c) = mth_exclusive(&ha, &hb, k, order) {
                ea.remove(c + 1);
            }
            if let Some(c) = mth_exclusive(&hb, &ha, k, order) {
                eb.remove(c + 1);
            }
        }
        rec.log(t, CoupledKind::Departure, &ea, &eb, delta);
    }
    Ok(rec.finish(spec.horizon, &ea, &eb))
}

// ---------------------------------------------------------------------------
// Ordering predicates

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    /// Σ_{i≥m} Q_i^A + L^A ≤ Σ_{i≥m} Q_i^B + L^B for every m.
    TailSum,
    /// Σ_i |Q_i^A − Q_i^B| ≤ 2Δ.
    AbsDiffDelta,
    /// Σ_{i≤k} Q_i^A − kn ≤ Σ_{i≤k} Q_i^B ≤ Σ_{i≤k} Q_i^A for every k ≤ B.
    PrefixSandwich,
    /// |Q_k^B − Q_k^A| ≤ kn for every k ≤ B.
    LevelBound,
}

impl Predicate {
    pub const ALL: [Predicate; 4] =
        [Predicate::TailSum, Predicate::AbsDiffDelta, Predicate::PrefixSandwich, Predicate::LevelBound];

    pub fn id(&self) -> &'static str {
        match self {
            Predicate::TailSum => "tailsum",
            Predicate::AbsDiffDelta => "absdiff-delta",
            Predicate::PrefixSandwich => "prefix-sandwich",
            Predicate::LevelBound => "level-bound",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.id() == id)
            .map_or_else(|| invalid(format!("unknown predicate '{id}'")), Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub event_index: usize,
    pub time: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub predicate: Predicate,
    pub events_checked: usize,
    pub violation: Option<Violation>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

fn q(occ: &[u64], i: usize) -> i64 {
    occ.get(i - 1).copied().unwrap_or(0) as i64
}

fn check_event(p: Predicate, e: &CoupledEvent, n: i64) -> Option<String> {
    let levels = e.occ_a.len().max(e.occ_b.len()).max(1);
    match p {
        Predicate::TailSum => {
            let (mut sa, mut sb) = (e.loss_a as i64, e.loss_b as i64);
            for m in (1..=levels).rev() {
                sa += q(&e.occ_a, m);
                sb += q(&e.occ_b, m);
                if sa > sb {
                    return Some(format!("tail sum from level {m}: {sa} > {sb}"));
                }
            }
            None
        }
        Predicate::AbsDiffDelta => {
            let diff: i64 = (1..=levels).map(|i| (q(&e.occ_a, i) - q(&e.occ_b, i)).abs()).sum();
            (diff > 2 * e.delta as i64).then(|| format!("l1 distance {diff} > 2*delta = {}", 2 * e.delta))
        }
        Predicate::PrefixSandwich => {
            let (mut sa, mut sb) = (0i64, 0i64);
            for k in 1..=levels {
                sa += q(&e.occ_a, k);
                sb += q(&e.occ_b, k);
                let kn = k as i64 * n;
                if sa - kn > sb || sb > sa {
                    return Some(format!("prefix sums to level {k}: A={sa}, B={sb}, kn={kn}"));
                }
            }
            None
        }
        Predicate::LevelBound => {
            for k in 1..=levels {
                let d = (q(&e.occ_b, k) - q(&e.occ_a, k)).abs();
                if d > k as i64 * n {
                    return Some(format!("level {k}: |dQ| = {d} > k*n = {}", k as i64 * n));
                }
            }
            None
        }
    }
}

/// Evaluates a predicate on every logged event, stopping at the first
/// violation. The sloppiness n is taken from policy B.
pub fn check_ordering(trace: &CoupledTrace, predicate_id: &str) -> Result<OrderingReport> {
    let predicate = Predicate::from_id(predicate_id)?;
    let n = trace.policy_b.sloppiness() as i64;
    for (idx, e) in trace.events.iter().enumerate() {
        if let Some(detail) = check_event(predicate, e, n) {
            return Ok(OrderingReport {
                predicate,
                events_checked: idx + 1,
                violation: Some(Violation { event_index: idx, time: e.time, detail }),
            });
        }
    }
    Ok(OrderingReport { predicate, events_checked: trace.events.len(), violation: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> CouplingSpec {
        CouplingSpec::new(50, Some(6), 0.95, 100.0)
    }

    #[test]
    fn identical_policies_give_identical_systems() {
        let mut rng = RngStream::new(1, 0);
        let tr = s_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Jsq, &spec(), &mut rng).unwrap();
        assert!(tr.events.iter().all(|e| e.occ_a == e.occ_b && e.loss_a == e.loss_b && e.delta == 0));
        let pools = CouplingSpec::new(50, Some(3), 2.5, 50.0);
        let tr = t_coupled_run(CoupledPolicy::Cjsq(3), CoupledPolicy::Cjsq(3), &pools, &mut rng).unwrap();
        assert!(tr.events.iter().all(|e| e.occ_a == e.occ_b && e.delta == 0));
        assert!(tr.arrivals > 0);
    }

    #[test]
    fn jsq_vs_mjsq_tail_sums() {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 0);
            let tr = s_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Mjsq(3), &spec(), &mut rng).unwrap();
            let r = check_ordering(&tr, "tailsum").unwrap();
            assert!(r.passed(), "seed {seed}: {:?}", r.violation);
            assert_eq!(r.events_checked, tr.events.len());
        }
    }

    #[test]
    fn jsq_d_vs_jsq_nd_l1_bound() {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 1);
            let tr =
                s_coupled_run(CoupledPolicy::JsqD(2), CoupledPolicy::JsqND { n: 3, d: 2 }, &spec(), &mut rng).unwrap();
            assert!(check_ordering(&tr, "absdiff-delta").unwrap().passed());
            assert!(tr.events.windows(2).all(|w| w[1].delta >= w[0].delta));
            assert!(tr.events.last().unwrap().delta > 0);
        }
    }

    #[test]
    fn jsq_vs_cjsq_pool_sandwich() {
        let pools = CouplingSpec::new(50, Some(3), 2.5, 100.0);
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 2);
            let tr = t_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Cjsq(3), &pools, &mut rng).unwrap();
            for p in ["prefix-sandwich", "level-bound", "absdiff-delta"] {
                let r = check_ordering(&tr, p).unwrap();
                assert!(r.passed(), "seed {seed} {p}: {:?}", r.violation);
            }
        }
    }

    #[test]
    fn constructed_violation_is_located() {
        let ok = CoupledEvent {
            time: 0.0,
            kind: CoupledKind::Start,
            occ_a: vec![2, 1],
            occ_b: vec![2, 1],
            loss_a: 0,
            loss_b: 0,
            delta: 0,
        };
        let bad = CoupledEvent { time: 1.0, kind: CoupledKind::Arrival, occ_a: vec![2, 2], ..ok.clone() };
        let tr = CoupledTrace {
            policy_a: CoupledPolicy::Jsq,
            policy_b: CoupledPolicy::Mjsq(1),
            n: 2,
            buffer: None,
            horizon: 1.0,
            events: vec![ok.clone(), ok, bad],
            arrivals: 1,
            mean_tasks: [0.0; 2],
        };
        let r = check_ordering(&tr, "tailsum").unwrap();
        assert_eq!(r.violation.as_ref().unwrap().event_index, 2);
        let r = check_ordering(&tr, "absdiff-delta").unwrap();
        assert_eq!(r.violation.unwrap().event_index, 2);
    }

    #[test]
    fn unknown_predicate_rejected() {
        let mut rng = RngStream::new(0, 0);
        let tr = s_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Jsq, &CouplingSpec::new(5, None, 0.5, 1.0), &mut rng)
            .unwrap();
        assert!(check_ordering(&tr, "majorization").is_err());
    }

    #[test]
    fn mismatched_start_rejected() {
        let mut s = CouplingSpec::new(3, Some(4), 0.5, 1.0);
        s.initial = vec![1, 0, 2];
        s.initial_b = Some(vec![0, 2, 1]);
        let mut rng = RngStream::new(0, 0);
        // same multiset of heights: accepted
        assert!(s_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Mjsq(1), &s, &mut rng).is_ok());
        s.initial_b = Some(vec![0, 0, 2]);
        assert!(s_coupled_run(CoupledPolicy::Jsq, CoupledPolicy::Mjsq(1), &s, &mut rng).is_err());
    }

    #[test]
    fn exclusive_task_enumeration() {
        // A = [1, 3, 3], B = [0, 1, 4]; A-only cells: (1,1), (2,2), (2,3), (3,...) none beyond B
        let a = [1, 3, 3];
        let b = [0, 1, 4];
        assert_eq!(mth_exclusive(&a, &b, 1, TaskOrder::PoolFirst), Some(0));
        assert_eq!(mth_exclusive(&a, &b, 2, TaskOrder::PoolFirst), Some(1));
        assert_eq!(mth_exclusive(&a, &b, 3, TaskOrder::PoolFirst), Some(1));
        assert_eq!(mth_exclusive(&a, &b, 4, TaskOrder::PoolFirst), None);
        assert_eq!(mth_exclusive(&b, &a, 1, TaskOrder::PoolFirst), Some(2));
        assert_eq!(mth_exclusive(&a, &b, 2, TaskOrder::LevelFirst), Some(1));
    }

    #[test]
    fn ensemble_keeps_order_and_losses() {
        let mut e = Ensemble::new(vec![2, 0, 2, 1], Some(2));
        e.add(1);
        assert_eq!(e.h, vec![1, 1, 2, 2]);
        e.add(4);
        assert_eq!(e.lost, 1);
        e.remove(3);
        assert_eq!(e.h, vec![1, 1, 1, 2]);
        assert_eq!(e.occupancy(), vec![4, 1]);
    }

    #[test]
    fn csv_has_one_row_per_event() {
        let mut rng = RngStream::new(3, 0);
        let tr = s_coupled_run(
            CoupledPolicy::Jsq,
            CoupledPolicy::Cjsq(2),
            &CouplingSpec::new(5, Some(3), 0.8, 5.0),
            &mut rng,
        )
        .unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), tr.events.len() + 1);
        assert!(csv.starts_with("time,kind,q1_a"));
    }
}
