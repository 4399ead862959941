//! Performance measures derived from finished runs: waiting, occupancy on
//! fluid and diffusion scales, energy, signalling overhead and blocking.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::engine::EventTrace;
use crate::error::{invalid, Error, Result};
use crate::sim::{
    DelayedOffModel, DispatchModel, GraphModel, OccupancyObserver, RateFn, Snapshot, TabsModel, TaskRecord, WaitStats,
};

/// Little's law residual above which a window is not treated as stationary.
pub const LITTLE_TOL: f64 = 0.02;

/// Mean wait and fraction of tasks that waited, over tasks arriving at or
/// after `window_start`. Lost tasks never appear in the task log.
pub fn waiting_stats(tasks: &[TaskRecord], window_start: f64) -> (f64, f64) {
    let (mut count, mut sum, mut delayed) = (0usize, 0.0, 0usize);
    for t in tasks.iter().filter(|t| t.arrival >= window_start) {
        let w = (t.start - t.arrival).max(0.0);
        count += 1;
        sum += w;
        delayed += (w > 0.0) as usize;
    }
    if count == 0 {
        return (0.0, 0.0);
    }
    (sum / count as f64, delayed as f64 / count as f64)
}

/// |L̄ − λ_eff·W̄| / L̄ with L̄ the mean number in system and W̄ the mean sojourn.
pub fn littles_law_residual(mean_in_system: f64, lambda_eff: f64, mean_sojourn: f64) -> f64 {
    if mean_in_system <= 0.0 {
        return if lambda_eff * mean_sojourn == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (mean_in_system - lambda_eff * mean_sojourn).abs() / mean_in_system
}

/// Time-averaged fraction of servers in each power mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFractions {
    pub busy: f64,
    pub idle_on: f64,
    pub idle_off: f64,
    pub setup: f64,
}

impl ModeFractions {
    /// A system that never switches servers off.
    pub fn always_on(busy: f64) -> Self {
        ModeFractions { busy, idle_on: 1.0 - busy, idle_off: 0.0, setup: 0.0 }
    }

    pub fn from_tabs(model: &mut TabsModel, horizon: f64) -> Self {
        let n = model.spec.n as f64;
        let f = |i: usize, m: &mut TabsModel| m.modes[i].average(horizon) / n;
        ModeFractions { busy: f(0, model), idle_on: f(1, model), idle_off: f(2, model), setup: f(3, model) }
    }

    pub fn from_delayed_off(model: &mut DelayedOffModel, horizon: f64) -> Self {
        let n = model.spec.n as f64;
        let f = |i: usize, m: &mut DelayedOffModel| m.modes[i].average(horizon) / n;
        ModeFractions { busy: f(0, model), idle_on: f(1, model), idle_off: f(2, model), setup: f(3, model) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStats {
    pub mean_power: f64,
    /// Power above what the offered work strictly needs: E[P] − λ·P_full.
    pub wastage: f64,
}

/// Busy and setup draw `p_full`, idle-on `p_idle`, off nothing.
pub fn energy_stats(modes: Option<&ModeFractions>, lambda: f64, p_full: f64, p_idle: f64) -> Result<EnergyStats> {
    let m = modes.ok_or_else(|| Error::MetricUnavailable("energy needs a server power-mode trajectory".into()))?;
    let mean_power = p_full * (m.busy + m.setup) + p_idle * m.idle_on;
    Ok(EnergyStats { mean_power, wastage: mean_power - lambda * p_full })
}

pub fn messages_per_task(messages: u64, tasks: u64) -> f64 {
    if tasks == 0 {
        0.0
    } else {
        messages as f64 / tasks as f64
    }
}

/// Erlang loss probability with `servers` servers and offered load `load`.
pub fn erlang_b(servers: u64, load: f64) -> f64 {
    let mut b = 1.0;
    for c in 1..=servers {
        b = load * b / (c as f64 + load * b);
    }
    b
}

/// Loss bound from a pool system that drops a task upfront unless one of
/// the n+1 lowest of N pools is among its d samples:
/// p + (1 − p)·ErB(B(N − n), λ(1 − p)), p = (1 − (n+1)/N)^d.
pub fn modified_erlang_bound(pools: u64, capacity: u64, lambda_total: f64, d: u64, n: u64) -> Result<f64> {
    if n >= pools {
        return invalid("need n < N");
    }
    let p = (1.0 - (n + 1) as f64 / pools as f64).powf(d as f64);
    Ok(p + (1.0 - p) * erlang_b(capacity * (pools - n), lambda_total * (1.0 - p)))
}

/// Tightest modified Erlang bound over n.
pub fn best_modified_erlang_bound(pools: u64, capacity: u64, lambda_total: f64, d: u64) -> f64 {
    (0..pools).filter_map(|n| modified_erlang_bound(pools, capacity, lambda_total, d, n).ok()).fold(1.0, f64::min)
}

/// Limit of √N × loss for λ(N) = BN − β√N pools of capacity B. The
/// Erlang system has BN servers, so its own Halfin-Whitt parameter is β/√B.
pub fn halfin_whitt_blocking_limit(beta: f64, capacity: u32) -> f64 {
    let z = Normal::standard();
    let sb = (capacity as f64).sqrt();
    let b = beta / sb;
    z.pdf(b) / (sb * z.cdf(b))
}

/// (loss fraction, √N × loss fraction).
pub fn blocking_stats(waits: &WaitStats, n: usize) -> (f64, f64) {
    let loss = waits.loss_fraction();
    (loss, (n as f64).sqrt() * loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// q_i = Q_i / N.
    Fluid,
    /// Q̄_1 = −(N − Q_1)/√N, Q̄_i = Q_i/√N for i ≥ 2.
    Diffusion,
}

pub fn scale_occupancy(occ: &[u64], n: usize, levels: usize, regime: Regime) -> Vec<f64> {
    let nf = n as f64;
    (1..=levels)
        .map(|i| {
            let q = occ.get(i - 1).copied().unwrap_or(0) as f64;
            match regime {
                Regime::Fluid => q / nf,
                Regime::Diffusion if i == 1 => -(nf - q) / nf.sqrt(),
                Regime::Diffusion => q / nf.sqrt(),
            }
        })
        .collect()
}

pub fn occupancy_scalings(samples: &[Snapshot], n: usize, levels: usize, regime: Regime) -> Vec<(f64, Vec<f64>)> {
    samples.iter().map(|s| (s.t, scale_occupancy(&s.occupancy, n, levels, regime))).collect()
}

/// Summary of one run over its stationary window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub lambda: f64,
    pub window: f64,
    pub mean_wait: f64,
    pub p_wait: f64,
    pub mean_sojourn: f64,
    /// Time-averaged fluid occupancy q_1, q_2, …
    pub q: Vec<f64>,
    /// Diffusion scaling of the time-averaged occupancy.
    pub q_diffusion: Vec<f64>,
    /// Mean tasks per server.
    pub mean_tasks: f64,
    pub energy_per_server: Option<f64>,
    pub wastage: Option<f64>,
    pub messages_per_task: Option<f64>,
    pub loss_fraction: f64,
    pub scaled_loss: f64,
    pub little_residual: f64,
}

impl MetricsReport {
    fn build(obs: &mut OccupancyObserver, waits: &WaitStats, n: usize, lambda: f64, horizon: f64) -> Self {
        let window = horizon - obs.window_start();
        let levels = obs.levels();
        let q: Vec<f64> = (1..=levels).map(|i| obs.q_avg(i, horizon)).collect();
        let nf = n as f64;
        let q_diffusion = q
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == 0 { -(nf - nf * x) / nf.sqrt() } else { nf * x / nf.sqrt() })
            .collect();
        let in_system = obs.mean_tasks(horizon);
        let lambda_eff = if window > 0.0 { waits.admitted as f64 / window } else { 0.0 };
        let (loss, scaled) = blocking_stats(waits, n);
        MetricsReport {
            n,
            lambda,
            window,
            mean_wait: waits.mean_wait(),
            p_wait: waits.p_wait(),
            mean_sojourn: waits.mean_sojourn(),
            q,
            q_diffusion,
            mean_tasks: in_system / nf,
            energy_per_server: None,
            wastage: None,
            messages_per_task: None,
            loss_fraction: loss,
            scaled_loss: scaled,
            little_residual: littles_law_residual(in_system, lambda_eff, waits.mean_sojourn()),
        }
    }

    /// Message counts cover the whole run, so they are divided by all
    /// arrivals in `trace` rather than by the window's.
    pub fn from_dispatch(model: &mut DispatchModel, trace: &EventTrace, horizon: f64) -> Self {
        let (n, lambda, messages) = (model.spec.n, model.spec.lambda, model.messages);
        let mut r = Self::build(&mut model.obs, &model.waits, n, lambda, horizon);
        r.messages_per_task = Some(messages_per_task(messages, trace.arrivals));
        r
    }

    pub fn from_graph(model: &mut GraphModel<'_>, horizon: f64) -> Self {
        let (n, lambda) = (model.topo.n(), model.spec.lambda);
        Self::build(&mut model.obs, &model.waits, n, lambda, horizon)
    }

    pub fn from_tabs(model: &mut TabsModel, trace: &EventTrace, horizon: f64) -> Self {
        let (n, lambda) = (model.spec.n, mean_rate(&model.spec.lambda));
        let modes = ModeFractions::from_tabs(model, horizon);
        let mut r = Self::build(&mut model.obs, &model.waits, n, lambda, horizon);
        r.add_energy(&modes, model.spec.p_full, model.spec.p_idle);
        r.messages_per_task = Some(messages_per_task(model.tabs.messages(), trace.arrivals));
        r
    }

    pub fn from_delayed_off(model: &mut DelayedOffModel, horizon: f64) -> Self {
        let (n, lambda) = (model.spec.n, mean_rate(&model.spec.lambda));
        let modes = ModeFractions::from_delayed_off(model, horizon);
        let mut r = Self::build(&mut model.obs, &model.waits, n, lambda, horizon);
        r.add_energy(&modes, model.spec.p_full, model.spec.p_idle);
        r
    }

    fn add_energy(&mut self, modes: &ModeFractions, p_full: f64, p_idle: f64) {
        let e = energy_stats(Some(modes), self.lambda, p_full, p_idle).expect("modes present");
        self.energy_per_server = Some(e.mean_power);
        self.wastage = Some(e.wastage);
    }

    /// Flat (metric, value) pairs in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("mean_wait".to_string(), self.mean_wait),
            ("p_wait".into(), self.p_wait),
            ("mean_sojourn".into(), self.mean_sojourn),
            ("mean_tasks".into(), self.mean_tasks),
        ];
        for (i, &x) in self.q.iter().enumerate() {
            out.push((format!("q{}", i + 1), x));
        }
        for (i, &x) in self.q_diffusion.iter().enumerate() {
            out.push((format!("qbar{}", i + 1), x));
        }
        let optional = [
            ("energy_per_server", self.energy_per_server),
            ("wastage", self.wastage),
            ("messages_per_task", self.messages_per_task),
        ];
        out.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        out.push(("loss_fraction".into(), self.loss_fraction));
        out.push(("scaled_loss".into(), self.scaled_loss));
        out.push(("little_residual".into(), self.little_residual));
        out
    }
}

/// Long-run average of an arrival-rate function.
pub fn mean_rate(rate: &RateFn) -> f64 {
    match *rate {
        RateFn::Constant(l) => l,
        RateFn::Periodic { base, .. } => base,
    }
}
