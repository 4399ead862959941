//! Executes a validated config: one simulation (or integration) per run
//! descriptor, metrics flattened to rows, replicate means appended.

use std::collections::HashMap;
use std::fmt;

use lbmesh_core::coupling::{
    check_ordering, s_coupled_run, t_coupled_run_with, CoupledPolicy, CouplingSpec, Predicate,
};
use lbmesh_core::diffusion::{
    decade_checkpoints, default_regen_level, detect_regenerations, estimate_tails, extrema_growth, sde_jsq, SdeConfig,
    TailOptions,
};
use lbmesh_core::meanfield::{fluid_infinite_server, fluid_jsq, fluid_jsq_d, fluid_tabs, FluidState, Trajectory};
use lbmesh_core::metrics::{MetricsReport, ModeFractions};
use lbmesh_core::sim::{
    ArrivalMode, DelayedOffModel, Discipline, DispatchModel, DispatchSpec, GraphModel, GraphSpec, OccupancyObserver,
    TabsModel, TabsSpec, TabsStart,
};
use lbmesh_core::stats::{mean, std_err};
use lbmesh_core::topology::{
    gen_clique, gen_complete_bipartite, gen_erased_regular, gen_errg, gen_rgg, gen_ring, gen_toric_grid,
};
use lbmesh_core::{run, RngStream, Topology};

use crate::config::{
    parse_coupled_policy, ArrivalName, CouplingScheme, ExperimentConfig, Family, OdeModel, PowerStart, RunDescriptor,
    TopologySpec,
};

/// Highest occupancy level written to time-series rows.
pub const SERIES_LEVELS: usize = 10;
/// Marks the topology RNG stream apart from the dynamics stream.
const TOPOLOGY_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq)]
pub struct RunError(pub String);

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RunError {}

impl From<lbmesh_core::Error> for RunError {
    fn from(e: lbmesh_core::Error) -> Self {
        RunError(e.to_string())
    }
}

impl From<String> for RunError {
    fn from(e: String) -> Self {
        RunError(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rep {
    Index(u64),
    /// Mean over replications.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub rep: Rep,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// One (lambda, metric, value) produced by a run.
type Metric = (f64, String, f64);

fn series_name(name: &str, t: f64) -> String {
    format!("{name}@t={}", crate::output::fmt_num(t))
}

fn push_series(out: &mut Vec<Metric>, lambda: f64, name: &str, points: impl IntoIterator<Item = (f64, f64)>) {
    for (t, v) in points {
        out.push((lambda, series_name(name, t), v));
    }
}

fn observer_rows(out: &mut Vec<Metric>, lambda: f64, obs: &OccupancyObserver, law: bool) {
    out.push((lambda, "max_queue".into(), obs.max_queue as f64));
    let levels = obs.samples.iter().map(|s| s.occupancy.len()).max().unwrap_or(0).min(SERIES_LEVELS);
    for i in 1..=levels.max(usize::from(!obs.samples.is_empty())) {
        push_series(out, lambda, &format!("q{i}"), obs.trajectory(i));
    }
    if law {
        for (state, p) in obs.state_law().unwrap_or_default() {
            let key: Vec<String> = state.iter().map(u32::to_string).collect();
            out.push((lambda, format!("law[{}]", key.join("-")), p));
        }
    }
}

fn report_rows(out: &mut Vec<Metric>, lambda: f64, report: &MetricsReport) {
    out.extend(report.rows().into_iter().map(|(k, v)| (lambda, k, v)));
}

fn build_topology(spec: &TopologySpec, n: usize, rng: &mut RngStream) -> Result<Topology, RunError> {
    let nf = n as f64;
    Ok(match spec {
        TopologySpec::Clique => gen_clique(n),
        TopologySpec::Ring => gen_ring(n),
        TopologySpec::Grid => gen_toric_grid(nf.sqrt().round() as usize),
        TopologySpec::Errg { degree } => {
            let p = if n > 1 { (degree.resolve(n)? / (nf - 1.0)).min(1.0) } else { 0.0 };
            gen_errg(n, p, rng)?
        }
        TopologySpec::ErasedRegular { degree } => gen_erased_regular(n, degree.resolve(n)?.ceil() as usize, rng)?,
        TopologySpec::Rgg { radius } => gen_rgg(n, *radius, rng)?,
        TopologySpec::Bipartite { c } => gen_complete_bipartite(n, *c)?,
    })
}

fn run_dispatch(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let load = cfg.load.as_ref().unwrap();
    let lambda = load.per_server(d.n);
    let policy = cfg.policy.as_ref().unwrap().build(d.n)?;
    let mut spec = DispatchSpec::new(d.n, lambda, policy);
    spec.buffer = cfg.buffer;
    spec.discipline = if cfg.family == Family::InfiniteServer { Discipline::Pool } else { Discipline::Fcfs };
    spec.window_start = cfg.warmup();
    spec.sample_interval = cfg.sample_interval;
    spec.state_law = cfg.state_law;
    let mut model = DispatchModel::new(spec)?;
    let trace = run(&mut model, cfg.horizon, &mut RngStream::new(d.seed, d.stream), false)?;
    let mut out = Vec::new();
    report_rows(&mut out, lambda, &MetricsReport::from_dispatch(&mut model, &trace, cfg.horizon));
    out.push((lambda, "arrivals".into(), trace.arrivals as f64));
    observer_rows(&mut out, lambda, &model.obs, cfg.state_law);
    Ok(out)
}

fn tabs_spec(cfg: &ExperimentConfig, n: usize) -> Result<TabsSpec, RunError> {
    let load = cfg.load.as_ref().unwrap();
    let policy = cfg.policy.as_ref().unwrap().build(n)?;
    let power = cfg.power();
    let mut spec = TabsSpec::new(n, load.per_server(n), policy.mu, policy.nu);
    spec.lambda = load.rate_fn(n);
    spec.buffer = cfg.buffer;
    spec.start = match power.start {
        PowerStart::IdleOn => TabsStart::AllIdleOn,
        PowerStart::IdleOff => TabsStart::AllIdleOff,
    };
    spec.window_start = cfg.warmup();
    spec.sample_interval = cfg.sample_interval;
    spec.p_full = power.p_full;
    spec.p_idle = power.p_idle;
    Ok(spec)
}

fn mode_rows(out: &mut Vec<Metric>, lambda: f64, m: &ModeFractions) {
    for (k, v) in
        [("frac_busy", m.busy), ("frac_idle_on", m.idle_on), ("frac_idle_off", m.idle_off), ("frac_setup", m.setup)]
    {
        out.push((lambda, k.into(), v));
    }
}

fn run_tabs(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let spec = tabs_spec(cfg, d.n)?;
    let lambda = cfg.load.as_ref().unwrap().per_server(d.n);
    let mut model = TabsModel::new(spec)?;
    let trace = run(&mut model, cfg.horizon, &mut RngStream::new(d.seed, d.stream), false)?;
    let mut out = Vec::new();
    let modes = ModeFractions::from_tabs(&mut model, cfg.horizon);
    report_rows(&mut out, lambda, &MetricsReport::from_tabs(&mut model, &trace, cfg.horizon));
    mode_rows(&mut out, lambda, &modes);
    out.push((lambda, "arrivals".into(), trace.arrivals as f64));
    observer_rows(&mut out, lambda, &model.obs, false);
    if let Some(dt) = cfg.sample_interval {
        let nf = d.n as f64;
        let at = |k: usize| k as f64 * dt;
        push_series(
            &mut out,
            lambda,
            "delta0",
            model.mode_samples.iter().enumerate().map(|(k, c)| (at(k), c[2] as f64 / nf)),
        );
        push_series(
            &mut out,
            lambda,
            "delta1",
            model.mode_samples.iter().enumerate().map(|(k, c)| (at(k), c[3] as f64 / nf)),
        );
    }
    Ok(out)
}

fn run_delayed_off(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let spec = tabs_spec(cfg, d.n)?;
    let lambda = cfg.load.as_ref().unwrap().per_server(d.n);
    let mut model = DelayedOffModel::new(spec)?;
    let trace = run(&mut model, cfg.horizon, &mut RngStream::new(d.seed, d.stream), false)?;
    let mut out = Vec::new();
    let modes = ModeFractions::from_delayed_off(&mut model, cfg.horizon);
    report_rows(&mut out, lambda, &MetricsReport::from_delayed_off(&mut model, cfg.horizon));
    mode_rows(&mut out, lambda, &modes);
    out.push((lambda, "arrivals".into(), trace.arrivals as f64));
    out.push((lambda, "max_waiting".into(), model.max_waiting as f64));
    Ok(out)
}

fn run_graph(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let topo =
        build_topology(cfg.topology.as_ref().unwrap(), d.n, &mut RngStream::new(d.seed, d.stream | TOPOLOGY_STREAM))?;
    let lambda = cfg.load.as_ref().unwrap().per_server(d.n);
    let mut spec = GraphSpec::new(lambda, cfg.policy.as_ref().unwrap().build(d.n)?);
    spec.buffer = cfg.buffer;
    spec.arrivals = match cfg.arrivals {
        Some(ArrivalName::PerVertex) => ArrivalMode::PerVertex,
        _ => ArrivalMode::Aggregate,
    };
    spec.window_start = cfg.warmup();
    spec.sample_interval = cfg.sample_interval;
    let mut model = GraphModel::new(&topo, spec)?;
    let trace = run(&mut model, cfg.horizon, &mut RngStream::new(d.seed, d.stream), false)?;
    let mut out = Vec::new();
    report_rows(&mut out, lambda, &MetricsReport::from_graph(&mut model, cfg.horizon));
    out.push((lambda, "arrivals".into(), trace.arrivals as f64));
    out.push((lambda, "mean_degree".into(), topo.mean_degree()));
    observer_rows(&mut out, lambda, &model.obs, false);
    Ok(out)
}

fn run_sde(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let p = cfg.sde.as_ref().unwrap();
    let mut rng = RngStream::new(d.seed, d.stream);
    let mut out = Vec::new();
    for (i, &beta) in p.betas.iter().enumerate() {
        let level = p.regen_levels.as_ref().map_or_else(|| default_regen_level(beta), |l| l[i]);
        let sde_cfg = SdeConfig::new(cfg.horizon, cfg.dt()).record_every(p.record_every);
        let path = sde_jsq((0.0, 1.0), beta, &sde_cfg, &mut rng)?;
        let clock = detect_regenerations(&path, level)?;
        let opts = TailOptions { level, min_cycles: p.min_cycles, ..TailOptions::new(beta) };
        let fit = estimate_tails(&path, &opts)?;
        let rows = [
            ("regen_level", level),
            ("cycles", fit.cycles as f64),
            ("mean_cycle_length", clock.mean_cycle_length().unwrap_or(f64::NAN)),
            ("q2_exp_slope", fit.q2_exp.slope),
            ("q2_exp_r2", fit.q2_exp.r2),
            ("q1_gauss_slope", fit.q1_gauss.slope),
            ("q1_gauss_r2", fit.q1_gauss.r2),
            ("q1_linear_r2", fit.q1_linear.r2),
            ("distant_pushes", path.distant_pushes as f64),
        ];
        out.extend(rows.into_iter().map(|(k, v)| (beta, k.to_string(), v)));
        for r in extrema_growth(&path, &decade_checkpoints(cfg.horizon)) {
            out.push((beta, series_name("q2_extrema_ratio", r.t), r.q2));
            out.push((beta, series_name("q1_extrema_ratio", r.t), r.q1));
        }
    }
    Ok(out)
}

fn run_ode(cfg: &ExperimentConfig) -> Result<Vec<Metric>, RunError> {
    let o = cfg.ode.as_ref().unwrap();
    let load = cfg.load.as_ref().unwrap();
    let lambda = load.per_server(1);
    let levels = if o.model == OdeModel::InfiniteServer { cfg.buffer.unwrap() as usize } else { o.levels };
    let mut q0 = o.initial.clone().unwrap_or_default();
    q0.resize(levels, 0.0);
    let (h, dt) = (cfg.horizon, cfg.dt());
    let traj: Trajectory = match o.model {
        OdeModel::JsqD => {
            let d = cfg.policy.as_ref().unwrap().build(1)?.d as u32;
            fluid_jsq_d(&q0, lambda, d, h, dt)?
        }
        OdeModel::Jsq => fluid_jsq(&q0, lambda, h, dt)?,
        OdeModel::InfiniteServer => fluid_infinite_server(&q0, lambda, h, dt)?,
        OdeModel::Tabs => {
            let p = cfg.policy.as_ref().unwrap().build(1)?;
            let [d0, d1] = o.delta.unwrap_or([0.0, 0.0]);
            fluid_tabs(&FluidState::tabs(q0, d0, d1), &load.rate_fn(1), p.mu, p.nu, h, dt)?
        }
    };
    let step = cfg.sample_interval.unwrap_or(h / 100.0);
    let grid: Vec<f64> = (0..).map(|k| k as f64 * step).take_while(|&t| t <= h + 1e-9).collect();
    let mut out = Vec::new();
    for i in 1..=levels.min(SERIES_LEVELS) {
        push_series(&mut out, lambda, &format!("q{i}"), grid.iter().map(|&t| (t, traj.q_at(t, i))));
    }
    if traj.points[0].delta.is_some() {
        push_series(&mut out, lambda, "delta0", grid.iter().map(|&t| (t, traj.delta_at(t).unwrap()[0])));
        push_series(&mut out, lambda, "delta1", grid.iter().map(|&t| (t, traj.delta_at(t).unwrap()[1])));
    }
    let mass = |t: f64| (1..=levels).map(|i| traj.q_at(t, i)).sum::<f64>();
    push_series(&mut out, lambda, "mass", grid.iter().map(|&t| (t, mass(t))));
    out.push((lambda, "max_tail_mass".into(), traj.max_tail_mass));
    out.push((lambda, "max_projection".into(), traj.max_projection));
    Ok(out)
}

fn run_coupling(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    let c = cfg.coupling.as_ref().unwrap();
    let lambda = cfg.load.as_ref().unwrap().per_server(d.n);
    let (a, b) = (parse_coupled_policy(&c.policy_a)?, parse_coupled_policy(&c.policy_b)?);
    let spec = CouplingSpec::new(d.n, cfg.buffer, lambda, cfg.horizon);
    let mut rng = RngStream::new(d.seed, d.stream);
    let trace = match c.scheme {
        CouplingScheme::S => s_coupled_run(a, b, &spec, &mut rng)?,
        CouplingScheme::T => t_coupled_run_with(a, b, &spec, c.order(), &mut rng)?,
    };
    let last = trace.events.last().unwrap();
    let loss = trace.loss_fraction();
    let mut out = vec![
        (lambda, "events".to_string(), trace.events.len() as f64),
        (lambda, "arrivals".into(), trace.arrivals as f64),
        (lambda, "delta".into(), last.delta as f64),
        (lambda, "mean_tasks_a".into(), trace.mean_tasks[0]),
        (lambda, "mean_tasks_b".into(), trace.mean_tasks[1]),
        (lambda, "loss_fraction_a".into(), loss[0]),
        (lambda, "loss_fraction_b".into(), loss[1]),
    ];
    let checked = predicates_for(c.scheme, a, b);
    out.push((lambda, "predicates_checked".into(), checked.len() as f64));
    for p in checked {
        let r = check_ordering(&trace, p.id())?;
        let first = r.violation.as_ref().map_or(-1.0, |v| v.event_index as f64);
        out.push((lambda, format!("violations:{}", p.id()), f64::from(u8::from(!r.passed()))));
        out.push((lambda, format!("first_violation:{}", p.id()), first));
    }
    Ok(out)
}

/// Orderings the coupling arguments guarantee for (A, B) under a scheme.
pub fn predicates_for(scheme: CouplingScheme, a: CoupledPolicy, b: CoupledPolicy) -> Vec<Predicate> {
    use CoupledPolicy::*;
    match (scheme, a, b) {
        (CouplingScheme::S, Jsq, Mjsq(_)) => vec![Predicate::TailSum],
        (CouplingScheme::S, JsqD(d1), JsqND { d: d2, .. }) if d1 == d2 => vec![Predicate::AbsDiffDelta],
        (CouplingScheme::T, Jsq, Cjsq(_) | Mjsq(_)) => vec![Predicate::PrefixSandwich, Predicate::LevelBound],
        _ => Vec::new(),
    }
}

fn run_one(cfg: &ExperimentConfig, d: &RunDescriptor) -> Result<Vec<Metric>, RunError> {
    match cfg.family {
        Family::SingleServer | Family::InfiniteServer => run_dispatch(cfg, d),
        Family::Tabs => run_tabs(cfg, d),
        Family::DelayedOff => run_delayed_off(cfg, d),
        Family::Graph => run_graph(cfg, d),
        Family::Sde => run_sde(cfg, d),
        Family::Ode => run_ode(cfg),
        Family::Coupling => run_coupling(cfg, d),
    }
}

/// Worker count from `LBMESH_WORKERS` (default 1).
pub fn workers() -> usize {
    std::env::var("LBMESH_WORKERS").ok().and_then(|v| v.parse().ok()).filter(|&w| w >= 1).unwrap_or(1)
}

/// Runs every descriptor and returns per-run rows followed by replicate
/// means. The result does not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>, RunError> {
    cfg.validate().map_err(|e| RunError(e.to_string()))?;
    let runs = cfg.runs();
    let results = execute(cfg, &runs, workers());
    let mut rows = Vec::new();
    // (n, lambda bits, metric) → values, in first-seen order
    let mut groups: Vec<((usize, u64, String), Vec<f64>)> = Vec::new();
    let mut index: HashMap<(usize, u64, String), usize> = HashMap::new();
    for (d, res) in runs.iter().zip(results) {
        let metrics = res.map_err(|e| RunError(format!("N={} rep={}: {}", d.n, d.rep, e)))?;
        for (lambda, metric, value) in metrics {
            let key = (d.n, lambda.to_bits(), metric.clone());
            let g = *index.entry(key.clone()).or_insert_with(|| {
                groups.push((key, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(value);
            rows.push(Row { n: d.n, lambda, seed: d.seed, rep: Rep::Index(d.rep), metric, value, stderr: None });
        }
    }
    if cfg.replications > 1 {
        for ((n, bits, metric), vals) in groups {
            rows.push(Row {
                n,
                lambda: f64::from_bits(bits),
                seed: cfg.seed,
                rep: Rep::Mean,
                metric,
                value: mean(&vals),
                stderr: Some(std_err(&vals)),
            });
        }
    }
    Ok(rows)
}

type RunResult = Result<Vec<Metric>, RunError>;

fn execute(cfg: &ExperimentConfig, runs: &[RunDescriptor], workers: usize) -> Vec<RunResult> {
    if workers <= 1 || runs.len() <= 1 {
        return runs.iter().map(|d| run_one(cfg, d)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<RunResult>>> = runs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= runs.len() {
                    break;
                }
                let r = run_one(cfg, &runs[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every run executed")).collect()
}
