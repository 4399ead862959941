//! Fluid-limit ODEs, their closed-form fixed points, and the tagged-server
//! McKean–Vlasov process driven by a fluid path.
//!
//! States are truncated to a finite number of levels: the length of `q0`
//! is the number of tracked levels (the buffer size for finite buffers,
//! typically [`TRUNCATION`] for infinite ones).

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Open01;

use crate::error::{invalid, Error, Result};
use crate::sim::RateFn;

/// Default number of levels kept when the buffer is unbounded.
pub const TRUNCATION: usize = 30;

/// Pre-projection invariant violation above this is a step-size error.
const STEP_TOL: f64 = 1e-6;
const MEMBER_TOL: f64 = 1e-12;
/// Upper bound on stored points per trajectory.
const MAX_RECORDS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    /// q_1..q_L (index 0 holds q_1).
    pub q: Vec<f64>,
    /// (δ0, δ1) for token-based auto-scaling.
    pub delta: Option<[f64; 2]>,
    /// q_{i,j} rows per level, for phase-type service.
    pub phase: Option<Vec<Vec<f64>>>,
}

impl FluidState {
    pub fn new(q: Vec<f64>) -> Self {
        FluidState { t: 0.0, q, delta: None, phase: None }
    }

    pub fn tabs(q: Vec<f64>, delta0: f64, delta1: f64) -> Self {
        FluidState { t: 0.0, q, delta: Some([delta0, delta1]), phase: None }
    }

    /// q_i with 1-based level; q_0 = 1 and levels past the truncation are 0.
    pub fn level(&self, i: usize) -> f64 {
        level(&self.q, i)
    }

    /// Fraction of idle-on servers.
    pub fn u(&self) -> Option<f64> {
        self.delta.map(|[d0, d1]| 1.0 - self.level(1) - d0 - d1)
    }

    pub fn total_mass(&self) -> f64 {
        self.q.iter().sum()
    }
}

fn level(q: &[f64], i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        q.get(i - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<FluidState>,
    /// Largest value reached by the last tracked level.
    pub max_tail_mass: f64,
    /// Largest correction applied by the projection step.
    pub max_projection: f64,
}

impl Trajectory {
    pub fn last(&self) -> &FluidState {
        self.points.last().expect("trajectory always holds the initial state")
    }

    fn interpolate(&self, t: f64, f: impl Fn(&FluidState) -> f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].t {
            return f(&pts[0]);
        }
        let k = pts.partition_point(|p| p.t <= t);
        if k >= pts.len() {
            return f(self.last());
        }
        let (a, b) = (&pts[k - 1], &pts[k]);
        let w = (t - a.t) / (b.t - a.t);
        f(a) + w * (f(b) - f(a))
    }

    /// Linear interpolation of q_i (1-based) at time t.
    pub fn q_at(&self, t: f64, i: usize) -> f64 {
        self.interpolate(t, |p| p.level(i))
    }

    /// Interpolated (δ0, δ1) at time t, for token-based auto-scaling paths.
    pub fn delta_at(&self, t: f64) -> Option<[f64; 2]> {
        self.points[0].delta?;
        let d = |j: usize| self.interpolate(t, |p| p.delta.map_or(0.0, |d| d[j]));
        Some([d(0), d(1)])
    }

    pub fn to_csv(&self) -> String {
        let levels = self.points.first().map_or(0, |p| p.q.len());
        let has_delta = self.points.first().is_some_and(|p| p.delta.is_some());
        let mut out = String::from("t");
        for i in 1..=levels {
            let _ = write!(out, ",q{i}");
        }
        if has_delta {
            out.push_str(",delta0,delta1");
        }
        out.push('\n');
        for p in &self.points {
            let _ = write!(out, "{}", p.t);
            for v in &p.q {
                let _ = write!(out, ",{v}");
            }
            if let Some([d0, d1]) = p.delta {
                let _ = write!(out, ",{d0},{d1}");
            }
            out.push('\n');
        }
        out
    }
}

struct Recorder {
    stride: usize,
    traj: Trajectory,
}

impl Recorder {
    fn new(first: FluidState, steps: usize) -> Self {
        let stride = steps.div_ceil(MAX_RECORDS).max(1);
        let tail = first.q.last().copied().unwrap_or(0.0);
        Recorder { stride, traj: Trajectory { points: vec![first], max_tail_mass: tail, max_projection: 0.0 } }
    }

    fn observe(&mut self, step: usize, last_step: bool, projection: f64, make: impl FnOnce() -> FluidState) {
        self.traj.max_projection = self.traj.max_projection.max(projection);
        if step.is_multiple_of(self.stride) || last_step {
            let s = make();
            self.traj.max_tail_mass = self.traj.max_tail_mass.max(s.q.last().copied().unwrap_or(0.0));
            self.traj.points.push(s);
        }
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid("dt must be positive");
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return invalid("horizon must be nonnegative");
    }
    Ok((horizon / dt).round() as usize)
}

fn check_occupancy(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return invalid("fluid state needs at least one level");
    }
    let mut prev = 1.0;
    for (i, &v) in q.iter().enumerate() {
        if !(v >= -MEMBER_TOL && v <= prev + MEMBER_TOL) {
            return invalid(format!("q{} = {v} breaks 1 >= q1 >= q2 >= ... >= 0", i + 1));
        }
        prev = v;
    }
    Ok(())
}

/// Largest violation of the ordering invariants in a raw state.
fn violation(q: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut prev = 1.0;
    for &v in q {
        worst = worst.max(v - prev).max(-v);
        prev = v;
    }
    worst
}

/// Clip to [0,1] and enforce monotonicity; returns the largest change.
fn project(q: &mut [f64]) -> f64 {
    let mut moved: f64 = 0.0;
    let mut prev = 1.0_f64;
    for v in q.iter_mut() {
        let p = v.clamp(0.0, prev);
        moved = moved.max((p - *v).abs());
        *v = p;
        prev = p;
    }
    moved
}

fn step_error(t: f64, amount: f64) -> Error {
    Error::StepSize(format!("invariant violated by {amount:.3e} at t={t:.6}; reduce dt"))
}

// ---------------------------------------------------------------------------
// JSQ(d)

/// Right-hand side of the JSQ(d) fluid system.
pub fn rhs_jsq_d(q: &[f64], lambda: f64, d: u32) -> Vec<f64> {
    let d = d as i32;
    (1..=q.len())
        .map(|i| {
            let (prev, cur, next) = (level(q, i - 1), level(q, i), level(q, i + 1));
            lambda * (prev.powi(d) - cur.powi(d)) - (cur - next)
        })
        .collect()
}

/// RK4 integration of the JSQ(d) fluid limit.
pub fn fluid_jsq_d(q0: &[f64], lambda: f64, d: u32, horizon: f64, dt: f64) -> Result<Trajectory> {
    check_occupancy(q0)?;
    if d < 1 {
        return invalid("d must be at least 1");
    }
    if !(lambda >= 0.0) {
        return invalid("lambda must be nonnegative");
    }
    let steps = step_count(horizon, dt)?;
    let mut q = q0.to_vec();
    let mut rec = Recorder::new(FluidState::new(q.clone()), steps);
    let axpy = |q: &[f64], k: &[f64], h: f64| -> Vec<f64> { q.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for step in 1..=steps {
        let k1 = rhs_jsq_d(&q, lambda, d);
        let k2 = rhs_jsq_d(&axpy(&q, &k1, dt / 2.0), lambda, d);
        let k3 = rhs_jsq_d(&axpy(&q, &k2, dt / 2.0), lambda, d);
        let k4 = rhs_jsq_d(&axpy(&q, &k3, dt), lambda, d);
        for i in 0..q.len() {
            q[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * dt;
        let v = violation(&q);
        if v > STEP_TOL {
            return Err(step_error(t, v));
        }
        let moved = project(&mut q);
        rec.observe(step, step == steps, moved, || FluidState { t, ..FluidState::new(q.clone()) });
    }
    Ok(rec.traj)
}

// ---------------------------------------------------------------------------
// JSQ, single-server and infinite-server (server pools)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Departures {
    /// One server per queue: level-j servers empty at rate 1.
    Single,
    /// Pools: a pool with j tasks loses one at rate j.
    PerTask,
}

impl Departures {
    fn rate(self, j: usize) -> f64 {
        match self {
            Departures::Single => (j >= 1) as u8 as f64,
            Departures::PerTask => j as f64,
        }
    }
}

fn jsq_probs(q: &[f64], lambda: f64, dep: Departures) -> Vec<f64> {
    // p[i] for i = 0..=L; p[L] is the lost fraction
    let l = q.len();
    let mut p = vec![0.0; l + 1];
    let m = (0..=l).find(|&i| level(q, i + 1) < 1.0).unwrap_or(l);
    if m == 0 || lambda == 0.0 {
        p[0] = 1.0;
        return p;
    }
    let gap = dep.rate(m) * (1.0 - level(q, m + 1));
    p[m - 1] = (gap / lambda).min(1.0);
    p[m] = 1.0 - p[m - 1];
    p
}

fn rhs_jsq_generic(q: &[f64], lambda: f64, dep: Departures) -> Vec<f64> {
    let p = jsq_probs(q, lambda, dep);
    (1..=q.len()).map(|i| lambda * p[i - 1] - dep.rate(i) * (level(q, i) - level(q, i + 1))).collect()
}

/// Right-derivative of the JSQ fluid system (single-server queues).
pub fn rhs_jsq(q: &[f64], lambda: f64) -> Vec<f64> {
    rhs_jsq_generic(q, lambda, Departures::Single)
}

/// Right-derivative of the JSQ fluid system for server pools.
pub fn rhs_infinite_server(q: &[f64], lambda: f64) -> Vec<f64> {
    rhs_jsq_generic(q, lambda, Departures::PerTask)
}

/// Arrival rates per level for one Euler step, filling the least-loaded
/// levels first. Returns (rates a_0..a_{L-1}, lost rate).
///
/// The capacity of level j over a step is what remains there after its own
/// departures plus what departures from level j+1 feed into it, so the
/// discrete update never drives a level fraction negative.
fn water_fill(x: &[f64], lambda: f64, dep: Departures, dt: f64) -> (Vec<f64>, f64) {
    let l = x.len() - 1;
    let mut a = vec![0.0; l];
    let mut left = lambda;
    for j in 0..l {
        if left <= 0.0 {
            break;
        }
        let cap = (x[j] * (1.0 / dt - dep.rate(j)) + dep.rate(j + 1) * x[j + 1]).max(0.0);
        let take = left.min(cap);
        a[j] = take;
        left -= take;
    }
    (a, left.max(0.0))
}

fn exact_levels(q: &[f64]) -> Vec<f64> {
    (0..=q.len()).map(|j| level(q, j) - level(q, j + 1)).collect()
}

fn euler_jsq(q0: &[f64], lambda: f64, horizon: f64, dt: f64, dep: Departures) -> Result<Trajectory> {
    check_occupancy(q0)?;
    if !(lambda >= 0.0) {
        return invalid("lambda must be nonnegative");
    }
    let steps = step_count(horizon, dt)?;
    if dep.rate(q0.len()) * dt > 1.0 {
        return Err(Error::StepSize(format!("dt * {} > 1", q0.len())));
    }
    let mut q = q0.to_vec();
    let mut rec = Recorder::new(FluidState::new(q.clone()), steps);
    for step in 1..=steps {
        let x = exact_levels(&q);
        let (a, _lost) = water_fill(&x, lambda, dep, dt);
        for i in 1..=q.len() {
            q[i - 1] += dt * (a[i - 1] - dep.rate(i) * x[i]);
        }
        let t = step as f64 * dt;
        let v = violation(&q);
        if v > STEP_TOL {
            return Err(step_error(t, v));
        }
        let moved = project(&mut q);
        rec.observe(step, step == steps, moved, || FluidState { t, ..FluidState::new(q.clone()) });
    }
    Ok(rec.traj)
}

/// Explicit Euler integration of the (non-smooth) JSQ fluid limit.
pub fn fluid_jsq(q0: &[f64], lambda: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    euler_jsq(q0, lambda, horizon, dt, Departures::Single)
}

/// JSQ fluid limit for N pools of B servers each; `q0.len()` must be B.
pub fn fluid_infinite_server(q0: &[f64], lambda: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    if lambda > q0.len() as f64 {
        return invalid(format!("lambda = {lambda} exceeds pool capacity {}", q0.len()));
    }
    euler_jsq(q0, lambda, horizon, dt, Departures::PerTask)
}

// ---------------------------------------------------------------------------
// Token-based auto-scaling

fn check_tabs_state(s: &FluidState) -> Result<[f64; 2]> {
    check_occupancy(&s.q)?;
    let Some([d0, d1]) = s.delta else {
        return invalid("auto-scaling state needs (delta0, delta1)");
    };
    if !(d0 >= 0.0 && d1 >= 0.0 && d0 <= 1.0 && d1 <= 1.0) {
        return invalid("delta0, delta1 must lie in [0, 1]");
    }
    if s.level(1) + d0 + d1 > 1.0 + MEMBER_TOL {
        return invalid("q1 + delta0 + delta1 exceeds 1");
    }
    Ok([d0, d1])
}

fn check_rates(lambda: &RateFn, mu: f64, nu: f64) -> Result<()> {
    if !(mu > 0.0 && nu > 0.0) {
        return invalid("standby and setup rates must be positive");
    }
    if !(lambda.min() >= 0.0) || !lambda.max().is_finite() {
        return invalid("arrival rate must be bounded and nonnegative");
    }
    Ok(())
}

/// Idealized right-hand side (dq_1..dq_L, dδ0, dδ1) of the auto-scaling fluid
/// system, with the setup initiation rate taken as λ(1−p0)·1{δ0>0}.
pub fn rhs_tabs(s: &FluidState, lambda: f64, mu: f64, nu: f64) -> Vec<f64> {
    let q = &s.q;
    let [d0, d1] = s.delta.unwrap_or([0.0, 0.0]);
    let q1 = level(q, 1);
    let u = 1.0 - q1 - d0 - d1;
    let p0 = if u > 0.0 || lambda == 0.0 { 1.0 } else { ((d1 * nu + q1 - level(q, 2)) / lambda).min(1.0) };
    let to_busy = |i: usize| -> f64 {
        if q1 > 0.0 {
            (1.0 - p0) * (level(q, i) - level(q, i + 1)) / q1
        } else {
            0.0
        }
    };
    let xi = if d0 > 0.0 { lambda * (1.0 - p0) } else { 0.0 };
    let mut out: Vec<f64> = (1..=q.len())
        .map(|i| {
            let p_prev = if i == 1 { p0 } else { to_busy(i - 1) };
            lambda * p_prev - (level(q, i) - level(q, i + 1))
        })
        .collect();
    out.push(mu * u - xi);
    out.push(xi - nu * d1);
    out
}

/// Every server counted in `q` receives Poisson(`mean`) extra tasks; tasks
/// beyond the last level are dropped. Exact for the busy-server arrival
/// stream over one step, and keeps the level fractions ordered even when
/// the per-server rate is huge (few busy servers absorbing the load).
fn poisson_shift(q: &mut [f64], mean: f64) {
    let l = q.len();
    let x = exact_levels(q);
    // log-space pmf avoids underflow of e^{-mean} for large means
    let mut pmf = Vec::with_capacity(l);
    let mut lp = -mean;
    for k in 0..l {
        if k > 0 {
            lp += (mean / k as f64).ln();
        }
        pmf.push(lp.exp());
    }
    let mut cdf = vec![0.0; l + 1];
    for k in 0..l {
        cdf[k + 1] = cdf[k] + pmf[k];
    }
    // new q_n = Σ_{i<n, i≥1} x_i P(K ≥ n−i) + q_n
    for n in (1..=l).rev() {
        let mut add = 0.0;
        for i in 1..n {
            add += x[i] * (1.0 - cdf[n - i]).max(0.0);
        }
        q[n - 1] = level(q, n) + add;
    }
}

/// Euler integration of the auto-scaling fluid limit.
///
/// Arrivals first fill idle-on servers (current ones, minus standby expiries,
/// plus servers freed by completions and finished setups during the step);
/// the remainder joins a uniformly chosen busy server and, while idle-off
/// servers remain, each such arrival starts one setup. With no busy server
/// the remainder is lost, so starts with q1 = 0 are accepted.
pub fn fluid_tabs(state0: &FluidState, lambda: &RateFn, mu: f64, nu: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    let [mut d0, mut d1] = check_tabs_state(state0)?;
    check_rates(lambda, mu, nu)?;
    let steps = step_count(horizon, dt)?;
    if (mu.max(nu)) * dt > 1.0 {
        return Err(Error::StepSize("dt * max(mu, nu) > 1".into()));
    }
    let mut q = state0.q.clone();
    let l = q.len();
    let mut rec = Recorder::new(FluidState { t: 0.0, ..state0.clone() }, steps);
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * dt;
        let lam = lambda.at(t0);
        let x = exact_levels(&q);
        let q1 = x[1..].iter().sum::<f64>();
        let u = (1.0 - q1 - d0 - d1).max(0.0);
        let freed = nu * d1 + x[1];
        let cap = u * (1.0 / dt - mu) + freed;
        let p0 = if lam > 0.0 { (cap / lam).min(1.0) } else { 1.0 };
        let rest = lam * (1.0 - p0);
        let xi = rest.min(d0 / dt + mu * u);
        q[0] += dt * (lam * p0 - x[1]);
        for i in 2..=l {
            q[i - 1] -= dt * x[i];
        }
        d0 += dt * (mu * u - xi);
        d1 += dt * (xi - nu * d1);
        let t = step as f64 * dt;
        let v = violation(&q).max(-d0).max(-d1).max(level(&q, 1) + d0 + d1 - 1.0);
        if v > STEP_TOL {
            return Err(step_error(t, v));
        }
        let mut moved = project(&mut q);
        if q1 > 0.0 && rest > 0.0 {
            poisson_shift(&mut q, rest * dt / q1);
        }
        let (c0, c1) = (d0.clamp(0.0, 1.0), d1.clamp(0.0, 1.0));
        moved = moved.max((c0 - d0).abs()).max((c1 - d1).abs());
        d0 = c0;
        d1 = c1;
        rec.observe(step, step == steps, moved, || FluidState { t, ..FluidState::tabs(q.clone(), d0, d1) });
    }
    Ok(rec.traj)
}

// ---------------------------------------------------------------------------
// Phase-type service under auto-scaling

/// Phase-type service: a task starts in phase j with probability `r[j]`,
/// spends Exp(`gamma[j]`) there, then moves to phase k with probability
/// `trans[j][k]` or completes with the remaining probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    pub r: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
}

impl PhaseType {
    pub fn new(r: Vec<f64>, trans: Vec<Vec<f64>>, gamma: Vec<f64>) -> Result<Self> {
        let k = r.len();
        if k == 0 || gamma.len() != k || trans.len() != k || trans.iter().any(|row| row.len() != k) {
            return invalid("phase-type dimensions do not match");
        }
        if gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return invalid("phase rates must be positive");
        }
        if r.iter().any(|&p| p < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("initial phase distribution must sum to 1");
        }
        for (j, row) in trans.iter().enumerate() {
            if row[j] != 0.0 {
                return invalid("self-transitions are not allowed");
            }
            if row.iter().any(|&p| p < 0.0) || row.iter().sum::<f64>() > 1.0 + 1e-12 {
                return invalid("transition rows must be sub-stochastic");
            }
        }
        let ph = PhaseType { r, trans, gamma };
        let mean = ph.mean()?;
        if (mean - 1.0).abs() > 1e-9 {
            return invalid(format!("phase-type mean is {mean}, must be 1"));
        }
        Ok(ph)
    }

    /// Two-phase hyper-exponential with branch probability `p`.
    pub fn hyperexp(p: f64, rate1: f64, rate2: f64) -> Result<Self> {
        Self::new(vec![p, 1.0 - p], vec![vec![0.0; 2]; 2], vec![rate1, rate2])
    }

    pub fn phases(&self) -> usize {
        self.r.len()
    }

    pub fn exit(&self, j: usize) -> f64 {
        (1.0 - self.trans[j].iter().sum::<f64>()).max(0.0)
    }

    /// Expected visits to each phase per task: v = r + vR.
    pub fn visits(&self) -> Result<Vec<f64>> {
        let k = self.phases();
        let mut v = self.r.clone();
        for _ in 0..100_000 {
            let mut next = self.r.clone();
            for (i, vi) in v.iter().enumerate() {
                for (j, nj) in next.iter_mut().enumerate() {
                    *nj += vi * self.trans[i][j];
                }
            }
            let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if diff < 1e-15 {
                return Ok(v);
            }
        }
        let _ = k;
        Err(Error::InvalidParameter("phase-type chain does not terminate".into()))
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.visits()?.iter().zip(&self.gamma).map(|(v, g)| v / g).sum())
    }
}

/// Initial phase-type state with all busy servers in phases drawn from `r`.
pub fn phase_state_from(q: &[f64], ph: &PhaseType, delta0: f64, delta1: f64) -> FluidState {
    let rows = q.iter().map(|&qi| ph.r.iter().map(|rj| qi * rj).collect()).collect();
    FluidState { t: 0.0, q: q.to_vec(), delta: Some([delta0, delta1]), phase: Some(rows) }
}

fn phase_totals(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().sum()).collect()
}

/// Euler integration of the auto-scaling fluid limit with phase-type
/// service. `q_{i,j}` counts servers with at least i tasks whose task in
/// service is in phase j; phase changes keep the server at level ≥ i, while
/// a completion at level ≥ i+1 starts the next task in phase j w.p. r_j.
pub fn fluid_tabs_phase_type(
    state0: &FluidState,
    lambda: &RateFn,
    mu: f64,
    nu: f64,
    ph: &PhaseType,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let [mut d0, mut d1] = check_tabs_state(state0)?;
    check_rates(lambda, mu, nu)?;
    if (ph.mean()? - 1.0).abs() > 1e-9 {
        return invalid("phase-type mean must be 1");
    }
    let k = ph.phases();
    let mut rows = match &state0.phase {
        Some(rows) => rows.clone(),
        None => phase_state_from(&state0.q, ph, d0, d1).phase.unwrap(),
    };
    let l = rows.len();
    if rows.iter().any(|r| r.len() != k) || l != state0.q.len() {
        return invalid("phase matrix shape does not match");
    }
    for j in 0..k {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        check_occupancy(&col)?;
    }
    let steps = step_count(horizon, dt)?;
    let gmax = ph.gamma.iter().copied().fold(mu.max(nu), f64::max);
    if gmax * dt > 1.0 {
        return Err(Error::StepSize("dt times the largest rate exceeds 1".into()));
    }
    let exit: Vec<f64> = (0..k).map(|j| ph.exit(j)).collect();
    let cell = |rows: &Vec<Vec<f64>>, i: usize, j: usize| -> f64 {
        if i == 0 || i > l {
            0.0
        } else {
            rows[i - 1][j]
        }
    };
    let snapshot = |rows: &Vec<Vec<f64>>, d0: f64, d1: f64, t: f64| FluidState {
        t,
        q: phase_totals(rows),
        delta: Some([d0, d1]),
        phase: Some(rows.clone()),
    };
    let mut rec = Recorder::new(snapshot(&rows, d0, d1, 0.0), steps);
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * dt;
        let lam = lambda.at(t0);
        let q1: f64 = rows[0].iter().sum();
        let u = (1.0 - q1 - d0 - d1).max(0.0);
        // servers with exactly one task finishing it
        let freed_busy: f64 = (0..k).map(|j| (cell(&rows, 1, j) - cell(&rows, 2, j)) * ph.gamma[j] * exit[j]).sum();
        let cap = u * (1.0 / dt - mu) + nu * d1 + freed_busy;
        let p0 = if lam > 0.0 { (cap / lam).min(1.0) } else { 1.0 };
        let rest = lam * (1.0 - p0);
        let xi = rest.min(d0 / dt + mu * u);
        let mut next = rows.clone();
        for i in 1..=l {
            let restart: f64 = (0..k).map(|kk| cell(&rows, i + 1, kk) * ph.gamma[kk] * exit[kk]).sum();
            for (j, slot) in next[i - 1].iter_mut().enumerate() {
                let arrivals = if i == 1 { lam * p0 * ph.r[j] } else { 0.0 };
                let moved_in: f64 = (0..k).map(|kk| cell(&rows, i, kk) * ph.gamma[kk] * ph.trans[kk][j]).sum();
                let d = arrivals + moved_in - ph.gamma[j] * cell(&rows, i, j) + restart * ph.r[j];
                *slot += dt * d;
            }
        }
        rows = next;
        d0 += dt * (mu * u - xi);
        d1 += dt * (xi - nu * d1);
        let t = step as f64 * dt;
        let mut v = (-d0).max(-d1).max(rows[0].iter().sum::<f64>() + d0 + d1 - 1.0);
        for j in 0..k {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            v = v.max(violation(&col));
        }
        if v > STEP_TOL {
            return Err(step_error(t, v));
        }
        let mut moved: f64 = 0.0;
        for j in 0..k {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            moved = moved.max(project(&mut col));
            if q1 > 0.0 && rest > 0.0 {
                poisson_shift(&mut col, rest * dt / q1);
            }
            for (i, c) in col.into_iter().enumerate() {
                rows[i][j] = c;
            }
        }
        d0 = d0.clamp(0.0, 1.0);
        d1 = d1.clamp(0.0, 1.0);
        rec.observe(step, step == steps, moved, || snapshot(&rows, d0, d1, t));
    }
    Ok(rec.traj)
}

/// Closed-form phase-type fixed point: q_{1,j} = λ v_j / γ_j, δ0 = 1−λ.
pub fn phase_type_fixed_point(lambda: f64, ph: &PhaseType, levels: usize) -> Result<FluidState> {
    if !(0.0..1.0).contains(&lambda) {
        return invalid("subcritical load lambda < 1 required");
    }
    let v = ph.visits()?;
    let mut rows = vec![vec![0.0; ph.phases()]; levels.max(1)];
    for j in 0..ph.phases() {
        rows[0][j] = lambda * v[j] / ph.gamma[j];
    }
    Ok(FluidState { t: 0.0, q: phase_totals(&rows), delta: Some([1.0 - lambda, 0.0]), phase: Some(rows) })
}

// ---------------------------------------------------------------------------
// Fixed points

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    JsqD {
        lambda: f64,
        d: u32,
    },
    Jsq {
        lambda: f64,
    },
    /// Pools of `buffer` servers.
    InfiniteServer {
        lambda: f64,
        buffer: usize,
    },
    Tabs {
        lambda: f64,
    },
}

/// Closed-form fixed point, truncated to `levels` levels (ignored for
/// pools, whose state has exactly `buffer` levels).
pub fn fixed_point(family: Family, levels: usize) -> Result<FluidState> {
    let levels = levels.max(1);
    let single = |lambda: f64| -> Result<()> {
        if !(0.0..1.0).contains(&lambda) {
            return invalid(format!("lambda = {lambda}: subcritical load lambda < 1 required"));
        }
        Ok(())
    };
    match family {
        Family::JsqD { lambda, d } => {
            single(lambda)?;
            if d < 1 {
                return invalid("d must be at least 1");
            }
            let q = (1..=levels)
                .map(|i| {
                    // exponent (d^i - 1)/(d - 1) = 1 + d + ... + d^{i-1}
                    let e: f64 = (0..i).map(|k| (d as f64).powi(k as i32)).sum();
                    lambda.powf(e)
                })
                .collect();
            Ok(FluidState::new(q))
        }
        Family::Jsq { lambda } => {
            single(lambda)?;
            let mut q = vec![0.0; levels];
            q[0] = lambda;
            Ok(FluidState::new(q))
        }
        Family::InfiniteServer { lambda, buffer } => {
            if buffer == 0 || !(lambda >= 0.0) || lambda > buffer as f64 {
                return invalid("pools need 0 <= lambda <= B");
            }
            let k = lambda.floor() as usize;
            let f = lambda - k as f64;
            let q = (1..=buffer)
                .map(|i| match i.cmp(&(k + 1)) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => f,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect();
            Ok(FluidState::new(q))
        }
        Family::Tabs { lambda } => {
            single(lambda)?;
            let mut q = vec![0.0; levels];
            q[0] = lambda;
            Ok(FluidState::tabs(q, 1.0 - lambda, 0.0))
        }
    }
}

// ---------------------------------------------------------------------------
// Tagged-server McKean–Vlasov process

/// Source of the population law μ_t[j, ∞) = q_j(t).
#[derive(Debug, Clone, Copy)]
pub enum MeanFieldSource<'a> {
    Fixed(&'a [f64]),
    Path(&'a Trajectory),
}

impl MeanFieldSource<'_> {
    fn q(&self, t: f64, j: usize) -> f64 {
        match self {
            MeanFieldSource::Fixed(q) => level(q, j),
            MeanFieldSource::Path(tr) => tr.q_at(t, j),
        }
    }
}

/// Piecewise-constant integer path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub states: Vec<u32>,
    pub horizon: f64,
}

impl JumpPath {
    pub fn state_at(&self, t: f64) -> u32 {
        let k = self.times.partition_point(|&s| s <= t);
        self.states[k.saturating_sub(1)]
    }

    /// Time-average of 1{x ≥ j} for j = 1..=levels.
    pub fn tail_occupancy(&self, levels: usize) -> Vec<f64> {
        let mut acc = vec![0.0; levels];
        for (k, &x) in self.states.iter().enumerate() {
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon);
            let len = end - self.times[k];
            for a in acc.iter_mut().take((x as usize).min(levels)) {
                *a += len;
            }
        }
        acc.iter().map(|a| a / self.horizon).collect()
    }
}

/// Birth rate of the tagged queue at length j−1.
fn birth_rate(src: &MeanFieldSource, t: f64, j: usize, lambda: f64, d: u32) -> f64 {
    let (hi, lo) = (src.q(t, j - 1), src.q(t, j));
    let gap = hi - lo;
    let di = d as i32;
    if gap.abs() < 1e-12 {
        lambda * d as f64 * hi.powi(di - 1)
    } else {
        lambda * (hi.powi(di) - lo.powi(di)) / gap
    }
}

/// Tagged queue driven by the fluid law: death at rate 1{x>0}, birth at
/// x = j−1 at rate λ(q_{j−1}^d − q_j^d)/(q_{j−1} − q_j). Simulated exactly
/// by thinning a Poisson clock of rate λd + 1.
pub fn simulate_mckean_vlasov<R: Rng + ?Sized>(
    x0: u32,
    lambda: f64,
    d: u32,
    horizon: f64,
    source: MeanFieldSource,
    rng: &mut R,
) -> Result<JumpPath> {
    if d < 1 || !(lambda >= 0.0) {
        return invalid("need d >= 1 and lambda >= 0");
    }
    let bound = lambda * d as f64 + 1.0;
    let mut path = JumpPath { times: vec![0.0], states: vec![x0], horizon };
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let u: f64 = rng.sample(Open01);
        t += -u.ln() / bound;
        if t >= horizon {
            break;
        }
        let birth = birth_rate(&source, t, x as usize + 1, lambda, d);
        let death = if x > 0 { 1.0 } else { 0.0 };
        let v: f64 = rng.random::<f64>() * bound;
        let next = if v < birth {
            x + 1
        } else if v < birth + death {
            x - 1
        } else {
            continue;
        };
        x = next;
        path.times.push(t);
        path.states.push(x);
    }
    Ok(path)
}
