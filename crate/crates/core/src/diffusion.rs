//! Halfin–Whitt diffusion limits: the reflected two-dimensional JSQ
//! diffusion, the Ornstein–Uhlenbeck limit of pools, the coupled f = 0
//! system, and regeneration-based estimators built on sampled paths.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Keep every k-th grid point (the endpoint is always kept).
    pub record_every: usize,
    /// Drop the Brownian term to obtain the deterministic skeleton.
    pub noise: bool,
}

impl SdeConfig {
    pub fn new(horizon: f64, dt: f64) -> Self {
        SdeConfig { horizon, dt, record_every: 1, noise: true }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt must be positive");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return invalid("horizon must be nonnegative");
        }
        Ok((self.horizon / self.dt).round() as usize)
    }

    fn dw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise {
            let z: f64 = rng.sample(StandardNormal);
            z * self.dt.sqrt()
        } else {
            0.0
        }
    }
}

/// One grid point of the JSQ diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionState {
    pub t: f64,
    /// Centered, scaled count of busy servers (≤ 0).
    pub q1: f64,
    /// Scaled count of servers with a waiting task (≥ 0).
    pub q2: f64,
    /// Accumulated local time pushing Q̄₁ back to 0.
    pub u1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JsqPath {
    pub t: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub u1: Vec<f64>,
    /// Total amount removed by flooring Q̄₂ at 0.
    pub floored: f64,
    /// Grid steps on which the local time increased while Q̄₁ sat more than
    /// 10·√(2dt) below the boundary at the start of the step.
    pub distant_pushes: usize,
}

impl JsqPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, k: usize) -> DiffusionState {
        DiffusionState { t: self.t[k], q1: self.q1[k], q2: self.q2[k], u1: self.u1[k] }
    }

    pub fn last(&self) -> DiffusionState {
        self.state(self.len() - 1)
    }

    fn push(&mut self, t: f64, q1: f64, q2: f64, u1: f64) {
        self.t.push(t);
        self.q1.push(q1);
        self.q2.push(q2);
        self.u1.push(u1);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Q1bar,Q2bar,U1\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{},{},{},{}", self.t[k], self.q1[k], self.q2[k], self.u1[k]);
        }
        out
    }
}

/// Result of one Euler–Maruyama step of the JSQ diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsqStep {
    pub q1: f64,
    pub q2: f64,
    pub du: f64,
    pub floored: f64,
}

/// One reflected step: Q̄₁ moves with drift −β − Q̄₁ + Q̄₂ and noise √2 dW;
/// any excess above 0 becomes local time and is fed into Q̄₂, which decays
/// at unit rate.
pub fn jsq_step(q1: f64, q2: f64, beta: f64, dt: f64, dw: f64) -> JsqStep {
    let tentative = q1 + (-beta - q1 + q2) * dt + std::f64::consts::SQRT_2 * dw;
    let du = tentative.max(0.0);
    let q1n = tentative - du;
    let raw = q2 + du - q2 * dt;
    let floored = (-raw).max(0.0);
    JsqStep { q1: q1n, q2: raw + floored, du, floored }
}

/// Euler–Maruyama simulation of the reflected JSQ diffusion.
pub fn sde_jsq<R: Rng + ?Sized>(q0: (f64, f64), beta: f64, cfg: &SdeConfig, rng: &mut R) -> Result<JsqPath> {
    let steps = cfg.steps()?;
    let (mut q1, mut q2) = q0;
    if !(q1 <= 0.0 && q2 >= 0.0) {
        return invalid("need Q1(0) <= 0 and Q2(0) >= 0");
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return invalid("beta must be nonnegative");
    }
    let far = -10.0 * (2.0 * cfg.dt).sqrt();
    let mut u1 = 0.0;
    let mut path = JsqPath::default();
    path.push(0.0, q1, q2, u1);
    for step in 1..=steps {
        let s = jsq_step(q1, q2, beta, cfg.dt, cfg.dw(rng));
        if s.du > 0.0 && q1 < far {
            path.distant_pushes += 1;
        }
        q1 = s.q1;
        q2 = s.q2;
        u1 += s.du;
        path.floored += s.floored;
        if step % cfg.record_every == 0 || step == steps {
            path.push(step as f64 * cfg.dt, q1, q2, u1);
        }
    }
    Ok(path)
}

/// Sampled scalar path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarPath {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

/// Ornstein–Uhlenbeck process dX = −X dt + √(2λ) dW, sampled with the exact
/// Gaussian transition.
pub fn sde_ou<R: Rng + ?Sized>(x0: f64, lambda: f64, cfg: &SdeConfig, rng: &mut R) -> Result<ScalarPath> {
    let steps = cfg.steps()?;
    if !(lambda >= 0.0) {
        return invalid("lambda must be nonnegative");
    }
    let decay = (-cfg.dt).exp();
    let sd = (lambda * (1.0 - (-2.0 * cfg.dt).exp())).sqrt();
    let mut x = x0;
    let mut path = ScalarPath { t: vec![0.0], x: vec![x0] };
    for step in 1..=steps {
        let z: f64 = if cfg.noise { rng.sample(StandardNormal) } else { 0.0 };
        x = x * decay + sd * z;
        if step % cfg.record_every == 0 || step == steps {
            path.t.push(step as f64 * cfg.dt);
            path.x.push(x);
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct F0Path {
    pub t: Vec<f64>,
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub v1: Vec<f64>,
}

/// Coupled f = 0 diffusion of pools at integer load K:
/// dζ₁ = √(2K) dW − (ζ₁ + Kζ₂) dt + β dt + dV₁ with V₁ keeping ζ₁ ≥ 0,
/// and dζ₂ = dV₁ − (K+1) ζ₂ dt.
pub fn sde_infinite_f0<R: Rng + ?Sized>(
    zeta0: (f64, f64),
    beta: f64,
    k: u32,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<F0Path> {
    let steps = cfg.steps()?;
    if k < 1 {
        return invalid("K must be a positive integer");
    }
    let (mut z1, mut z2) = zeta0;
    if !(z1 >= 0.0 && z2 >= 0.0) {
        return invalid("need zeta1(0) >= 0 and zeta2(0) >= 0");
    }
    let kf = k as f64;
    let sigma = (2.0 * kf).sqrt();
    let mut v1 = 0.0;
    let mut path = F0Path { t: vec![0.0], zeta1: vec![z1], zeta2: vec![z2], v1: vec![0.0] };
    for step in 1..=steps {
        let tentative = z1 + (beta - z1 - kf * z2) * cfg.dt + sigma * cfg.dw(rng);
        let dv = (-tentative).max(0.0);
        z1 = tentative + dv;
        z2 = (z2 + dv - (kf + 1.0) * z2 * cfg.dt).max(0.0);
        v1 += dv;
        if step % cfg.record_every == 0 || step == steps {
            path.t.push(step as f64 * cfg.dt);
            path.zeta1.push(z1);
            path.zeta2.push(z2);
            path.v1.push(v1);
        }
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Regeneration cycles

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegenPhase {
    WaitingForB,
    WaitingFor2B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationClock {
    pub level: f64,
    pub phase: RegenPhase,
    /// Boundaries Ξ_k, as times.
    pub cycle_starts: Vec<f64>,
    /// Boundaries as indices into the scanned series.
    pub start_indices: Vec<usize>,
}

impl RegenerationClock {
    pub fn new(level: f64) -> Self {
        RegenerationClock { level, phase: RegenPhase::WaitingForB, cycle_starts: Vec::new(), start_indices: Vec::new() }
    }

    /// Number of boundaries Ξ_k seen.
    pub fn cycles(&self) -> usize {
        self.cycle_starts.len()
    }

    /// Cycles bounded on both sides.
    pub fn complete_cycles(&self) -> usize {
        self.cycle_starts.len().saturating_sub(1)
    }

    pub fn cycle_lengths(&self) -> Vec<f64> {
        self.cycle_starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mean_cycle_length(&self) -> Option<f64> {
        let l = self.cycle_lengths();
        (!l.is_empty()).then(|| l.iter().sum::<f64>() / l.len() as f64)
    }

    fn feed(&mut self, idx: usize, t: f64, q2: f64) {
        match self.phase {
            RegenPhase::WaitingForB if q2 <= self.level => self.phase = RegenPhase::WaitingFor2B,
            RegenPhase::WaitingFor2B if q2 >= 2.0 * self.level => {
                self.phase = RegenPhase::WaitingForB;
                self.cycle_starts.push(t);
                self.start_indices.push(idx);
            }
            _ => {}
        }
    }
}

/// Default regeneration level max{β, 1/β}.
pub fn default_regen_level(beta: f64) -> f64 {
    beta.max(1.0 / beta)
}

/// Records every up-crossing of 2B that follows a down-crossing of B.
pub fn scan_regenerations(t: &[f64], q2: &[f64], level: f64) -> Result<RegenerationClock> {
    if !(level > 0.0) {
        return invalid("regeneration level must be positive");
    }
    let mut clock = RegenerationClock::new(level);
    for (k, (&tk, &x)) in t.iter().zip(q2).enumerate() {
        clock.feed(k, tk, x);
    }
    Ok(clock)
}

/// Like [`scan_regenerations`], but fewer than two cycles is an error.
pub fn detect_regenerations(path: &JsqPath, level: f64) -> Result<RegenerationClock> {
    let clock = scan_regenerations(&path.t, &path.q2, level)?;
    if clock.cycles() < 2 {
        return Err(Error::Estimation(format!("only {} regeneration cycles at level {level}", clock.cycles())));
    }
    Ok(clock)
}

// ---------------------------------------------------------------------------
// Stationary tails

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    /// log P(−Q̄₁ > x) against x².
    pub q1_gauss: LinearFit,
    /// log P(−Q̄₁ > x) against x (model-selection comparison).
    pub q1_linear: LinearFit,
    /// log P(Q̄₂ > y) against y.
    pub q2_exp: LinearFit,
    pub cycles: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailOptions {
    pub level: f64,
    pub min_cycles: usize,
    pub grid_points: usize,
    /// Quantile window of the level grid.
    pub lo: f64,
    pub hi: f64,
}

impl TailOptions {
    pub fn new(beta: f64) -> Self {
        TailOptions { level: default_regen_level(beta), min_cycles: 1000, grid_points: 20, lo: 0.9, hi: 0.999 }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Log-survival fit over a grid spanning the `lo`..`hi` quantiles.
fn survival_fit(mut xs: Vec<f64>, opt: &TailOptions, transform: impl Fn(f64) -> f64) -> Result<LinearFit> {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let (a, b) = (quantile(&xs, opt.lo), quantile(&xs, opt.hi));
    if !(b > a) {
        return Err(Error::Estimation("degenerate level window".into()));
    }
    let mut gx = Vec::with_capacity(opt.grid_points);
    let mut gy = Vec::with_capacity(opt.grid_points);
    for k in 0..opt.grid_points {
        let level = a + (b - a) * k as f64 / (opt.grid_points - 1) as f64;
        let above = xs.len() - xs.partition_point(|&v| v <= level);
        if above == 0 {
            continue;
        }
        gx.push(transform(level));
        gy.push((above as f64 / n).ln());
    }
    if gx.len() < 3 {
        return Err(Error::Estimation("too few populated tail levels".into()));
    }
    Ok(linear_fit(&gx, &gy))
}

/// Tail fits on the segment after the first regeneration boundary.
pub fn estimate_tails(path: &JsqPath, opt: &TailOptions) -> Result<TailFit> {
    let clock = detect_regenerations(path, opt.level)?;
    if clock.cycles() < opt.min_cycles.max(2) {
        return Err(Error::Estimation(format!("{} regeneration cycles, need {}", clock.cycles(), opt.min_cycles)));
    }
    let start = clock.start_indices[0];
    let end = *clock.start_indices.last().unwrap();
    let neg_q1: Vec<f64> = path.q1[start..end].iter().map(|v| -v).collect();
    let q2: Vec<f64> = path.q2[start..end].to_vec();
    Ok(TailFit {
        q1_gauss: survival_fit(neg_q1.clone(), opt, |x| x * x)?,
        q1_linear: survival_fit(neg_q1, opt, |x| x)?,
        q2_exp: survival_fit(q2, opt, |y| y)?,
        cycles: clock.cycles(),
        samples: end - start,
    })
}

// ---------------------------------------------------------------------------
// Extrema growth

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaRatio {
    pub t: f64,
    /// sup_{s≤t} Q̄₂(s) / ln t
    pub q2: f64,
    /// −inf_{s≤t} Q̄₁(s) / √(ln t)
    pub q1: f64,
}

/// Checkpoints 10, 100, …, up to the horizon.
pub fn decade_checkpoints(horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 10.0;
    while t <= horizon * (1.0 + 1e-12) {
        out.push(t);
        t *= 10.0;
    }
    out
}

pub fn extrema_growth(path: &JsqPath, checkpoints: &[f64]) -> Vec<ExtremaRatio> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let (mut sup2, mut inf1) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut k = 0;
    for &c in checkpoints {
        if c <= 1.0 {
            continue;
        }
        while k < path.len() && path.t[k] <= c + 1e-9 {
            sup2 = sup2.max(path.q2[k]);
            inf1 = inf1.min(path.q1[k]);
            k += 1;
        }
        let ln = c.ln();
        out.push(ExtremaRatio { t: c, q2: sup2 / ln, q1: -inf1 / ln.sqrt() });
    }
    out
}
