//! JSON experiment configuration and its validation.

use std::fmt;

use lbmesh_core::coupling::{CoupledPolicy, TaskOrder};
use lbmesh_core::sim::RateFn;
use lbmesh_core::{PolicyConfig, PolicyKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SingleServer,
    InfiniteServer,
    Tabs,
    DelayedOff,
    Graph,
    Sde,
    Ode,
    Coupling,
}

impl Family {
    fn uses_servers(self) -> bool {
        !matches!(self, Family::Sde | Family::Ode)
    }
}

/// A sample size that may track the system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Fixed(usize),
    /// "N" for the number of servers.
    Named(String),
}

impl Count {
    pub fn resolve(&self, n: usize) -> Result<usize, String> {
        match self {
            Count::Fixed(k) => Ok(*k),
            Count::Named(s) if s == "N" => Ok(n),
            Count::Named(s) => Err(format!("unknown sample size '{s}' (use a number or \"N\")")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_vector: Option<Vec<Count>>,
    /// Sloppiness of cjsq_n / mjsq_n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_replacement: Option<bool>,
}

impl PolicySpec {
    pub fn named(kind: &str) -> Self {
        PolicySpec {
            kind: kind.into(),
            d: None,
            d_vector: None,
            n: None,
            batch: None,
            mu: None,
            nu: None,
            with_replacement: None,
        }
    }

    pub fn kind(&self) -> Result<PolicyKind, String> {
        PolicyKind::from_name(&self.kind).ok_or_else(|| format!("unknown policy '{}'", self.kind))
    }

    /// Core policy configuration for a system of `n` servers.
    pub fn build(&self, n: usize) -> Result<PolicyConfig, String> {
        let mut p = PolicyConfig::new(self.kind()?);
        if let Some(d) = &self.d {
            p.d = d.resolve(n)?;
        }
        if let Some(v) = &self.d_vector {
            p.d_vector = v.iter().map(|c| c.resolve(n)).collect::<Result<_, _>>()?;
        }
        if let Some(k) = self.n {
            p.n = k;
        }
        if let Some(b) = self.batch {
            p.batch = b;
        }
        if let Some(mu) = self.mu {
            p.mu = mu;
        }
        if let Some(nu) = self.nu {
            p.nu = nu;
        }
        if let Some(w) = self.with_replacement {
            p.with_replacement = w;
        }
        Ok(p)
    }

    /// Short label for the CSV policy column.
    pub fn label(&self) -> String {
        let mut s = self.kind.clone();
        let mut args = Vec::new();
        if let Some(d) = &self.d {
            args.push(format!("d={}", count_label(d)));
        }
        if let Some(v) = &self.d_vector {
            args.push(format!("dvec={}", v.iter().map(count_label).collect::<Vec<_>>().join("-")));
        }
        if let Some(n) = self.n {
            args.push(format!("n={n}"));
        }
        if let Some(b) = self.batch {
            args.push(format!("l={b}"));
        }
        if let Some(mu) = self.mu {
            args.push(format!("mu={mu}"));
        }
        if let Some(nu) = self.nu {
            args.push(format!("nu={nu}"));
        }
        if !args.is_empty() {
            s.push('(');
            s.push_str(&args.join(";"));
            s.push(')');
        }
        s
    }
}

fn count_label(c: &Count) -> String {
    match c {
        Count::Fixed(k) => k.to_string(),
        Count::Named(s) => s.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadRule {
    /// Per-server arrival rate.
    Fixed { lambda: f64 },
    /// λ(N) = fraction·N.
    Proportional { fraction: f64 },
    /// λ(N) = N − β√N.
    HalfinWhitt { beta: f64 },
    /// λ(N) = KN − β√N.
    PooledHalfinWhitt { k: f64, beta: f64 },
    /// λ(t) = base + amplitude·sin(2πt/period), per server.
    Periodic { base: f64, amplitude: f64, period: f64 },
}

impl LoadRule {
    /// Long-run per-server arrival rate for `n` servers.
    pub fn per_server(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            LoadRule::Fixed { lambda } => lambda,
            LoadRule::Proportional { fraction } => fraction,
            LoadRule::HalfinWhitt { beta } => 1.0 - beta / nf.sqrt(),
            LoadRule::PooledHalfinWhitt { k, beta } => k - beta / nf.sqrt(),
            LoadRule::Periodic { base, .. } => base,
        }
    }

    pub fn peak(&self, n: usize) -> f64 {
        match *self {
            LoadRule::Periodic { base, amplitude, .. } => base + amplitude.abs(),
            _ => self.per_server(n),
        }
    }

    pub fn rate_fn(&self, n: usize) -> RateFn {
        match *self {
            LoadRule::Periodic { base, amplitude, period } => RateFn::Periodic { base, amplitude, period },
            _ => RateFn::Constant(self.per_server(n)),
        }
    }
}

/// Target degree: a number or "sqrt" / "log" of N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Degree {
    Fixed(f64),
    Named(String),
}

impl Degree {
    pub fn resolve(&self, n: usize) -> Result<f64, String> {
        let nf = n as f64;
        match self {
            Degree::Fixed(d) => Ok(*d),
            Degree::Named(s) if s == "sqrt" => Ok(nf.sqrt()),
            Degree::Named(s) if s == "log" => Ok(nf.ln()),
            Degree::Named(s) => Err(format!("unknown degree rule '{s}' (use a number, \"sqrt\" or \"log\")")),
        }
    }

    fn label(&self) -> String {
        match self {
            Degree::Fixed(d) => d.to_string(),
            Degree::Named(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Clique,
    Ring,
    /// Torus of side √N.
    Grid,
    /// Erdős–Rényi with the given mean degree.
    Errg {
        degree: Degree,
    },
    /// Configuration-model regular graph with degree rounded up.
    ErasedRegular {
        degree: Degree,
    },
    Rgg {
        radius: f64,
    },
    Bipartite {
        c: f64,
    },
}

impl TopologySpec {
    pub fn label(&self) -> String {
        match self {
            TopologySpec::Clique => "clique".into(),
            TopologySpec::Ring => "ring".into(),
            TopologySpec::Grid => "grid".into(),
            TopologySpec::Errg { degree } => format!("errg(deg={})", degree.label()),
            TopologySpec::ErasedRegular { degree } => format!("erased_regular(deg={})", degree.label()),
            TopologySpec::Rgg { radius } => format!("rgg(r={radius})"),
            TopologySpec::Bipartite { c } => format!("bipartite(c={c})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerStart {
    IdleOn,
    IdleOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    #[serde(default = "default_p_full")]
    pub p_full: f64,
    #[serde(default = "default_p_idle")]
    pub p_idle: f64,
    #[serde(default = "default_start")]
    pub start: PowerStart,
}

fn default_p_full() -> f64 {
    200.0
}
fn default_p_idle() -> f64 {
    140.0
}
fn default_start() -> PowerStart {
    PowerStart::IdleOn
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams { p_full: default_p_full(), p_idle: default_p_idle(), start: default_start() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeParams {
    pub betas: Vec<f64>,
    /// Regeneration level per β; defaults to max(β, 1/β).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regen_levels: Option<Vec<f64>>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_min_cycles")]
    pub min_cycles: usize,
}

fn default_record_every() -> usize {
    10
}
fn default_min_cycles() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeModel {
    JsqD,
    Jsq,
    InfiniteServer,
    Tabs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeParams {
    pub model: OdeModel,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Initial q_1, q_2, … (empty system when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Initial (δ0, δ1) for TABS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<[f64; 2]>,
}

fn default_levels() -> usize {
    lbmesh_core::meanfield::TRUNCATION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingScheme {
    /// Server-ordered departures (single-server queues).
    S,
    /// Task-indexed departures (server pools).
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderName {
    PoolFirst,
    LevelFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingParams {
    pub scheme: CouplingScheme,
    pub policy_a: String,
    pub policy_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderName>,
}

impl CouplingParams {
    pub fn order(&self) -> TaskOrder {
        match self.order {
            Some(OrderName::LevelFirst) => TaskOrder::LevelFirst,
            _ => TaskOrder::PoolFirst,
        }
    }
}

/// "jsq", "mjsq(3)", "cjsq(3)", "jsq_d(2)" or "jsq_nd(3,2)".
pub fn parse_coupled_policy(s: &str) -> Result<CoupledPolicy, String> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
        Some(_) => return Err(format!("malformed coupled policy '{s}'")),
        None => (s, ""),
    };
    let nums: Vec<usize> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| a.trim().parse::<usize>().map_err(|_| format!("bad argument '{a}' in '{s}'")))
            .collect::<Result<_, _>>()?
    };
    match (name, nums.as_slice()) {
        ("jsq", []) => Ok(CoupledPolicy::Jsq),
        ("mjsq", [n]) => Ok(CoupledPolicy::Mjsq(*n)),
        ("cjsq", [n]) => Ok(CoupledPolicy::Cjsq(*n)),
        ("jsq_d", [d]) => Ok(CoupledPolicy::JsqD(*d)),
        ("jsq_nd", [n, d]) => Ok(CoupledPolicy::JsqND { n: *n, d: *d }),
        _ => Err(format!("unknown coupled policy '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalName {
    Aggregate,
    PerVertex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    /// System sizes to sweep.
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<ArrivalName>,
    pub horizon: f64,
    /// Start of the stationary window; defaults to half the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Emit occupancy time series at this spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    /// Emit the time-averaged law of the sorted queue vector.
    #[serde(default, skip_serializing_if = "is_false")]
    pub state_law: bool,
    #[serde(default = "default_reps")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_overload: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingParams>,
}

fn default_n() -> Vec<usize> {
    vec![1]
}
fn default_reps() -> u64 {
    1
}
fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Malformed JSON, unknown key or wrong type.
    Parse(String),
    /// Every validation failure found.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(errs) => {
                write!(f, "invalid config:")?;
                for e in errs {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config and any warnings raised while validating it.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// One replication of one system size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunDescriptor {
    pub n_index: usize,
    pub n: usize,
    pub rep: u64,
    pub seed: u64,
    pub stream: u64,
}

pub fn parse_config(text: &str) -> Result<Parsed, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let warnings = config.validate()?;
    Ok(Parsed { config, warnings })
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(self.horizon / 2.0)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-3)
    }

    pub fn power(&self) -> PowerParams {
        self.power.clone().unwrap_or_default()
    }

    pub fn runs(&self) -> Vec<RunDescriptor> {
        let mut out = Vec::new();
        for (n_index, &n) in self.n.iter().enumerate() {
            for rep in 0..self.replications {
                out.push(RunDescriptor { n_index, n, rep, seed: self.seed, stream: ((n_index as u64) << 32) | rep });
            }
        }
        out
    }

    pub fn policy_label(&self) -> String {
        match (self.family, &self.policy, &self.coupling) {
            (Family::Coupling, _, Some(c)) => format!("{}|{}", c.policy_a, c.policy_b),
            (_, Some(p), _) => p.label(),
            (Family::Sde, None, _) => "jsq".into(),
            (Family::Ode, None, _) => {
                self.ode.as_ref().map_or("ode".into(), |o| format!("{:?}", o.model).to_lowercase())
            }
            _ => "none".into(),
        }
    }

    pub fn topology_label(&self) -> String {
        self.topology.as_ref().map_or_else(|| "none".into(), TopologySpec::label)
    }

    /// Collects every problem; returns warnings when overload is allowed.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut errs = Vec::new();
        let mut warnings = Vec::new();
        if self.experiment_id.is_empty()
            || !self.experiment_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            errs.push(format!("experiment_id '{}' must be non-empty and use only [A-Za-z0-9._-]", self.experiment_id));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            errs.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if let Some(w) = self.warmup {
            if !(w >= 0.0 && w < self.horizon) {
                errs.push(format!("warmup must lie in [0, horizon), got {w}"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0 && s.is_finite()) {
                errs.push(format!("sample_interval must be positive, got {s}"));
            }
        }
        if self.replications < 1 {
            errs.push("replications must be >= 1".into());
        }
        if self.n.is_empty() {
            errs.push("n must list at least one system size".into());
        }
        if self.n.contains(&0) {
            errs.push("system sizes must be >= 1".into());
        }
        if self.buffer == Some(0) {
            errs.push("buffer must be >= 1".into());
        }
        if self.n.len() > (u32::MAX as usize) || self.replications > u32::MAX as u64 {
            errs.push("too many sizes or replications for stream ids".into());
        }

        self.validate_family(&mut errs);
        self.validate_load(&mut errs, &mut warnings);

        if errs.is_empty() {
            Ok(warnings)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn require_absent(&self, errs: &mut Vec<String>) {
        let f = self.family;
        let checks: [(&str, bool, bool); 5] = [
            ("topology", self.topology.is_some(), f == Family::Graph),
            ("sde", self.sde.is_some(), f == Family::Sde),
            ("ode", self.ode.is_some(), f == Family::Ode),
            ("coupling", self.coupling.is_some(), f == Family::Coupling),
            ("power", self.power.is_some(), matches!(f, Family::Tabs | Family::DelayedOff)),
        ];
        for (key, present, allowed) in checks {
            if present && !allowed {
                errs.push(format!("'{key}' does not apply to family {f:?}"));
            }
            if !present && allowed && key != "power" {
                errs.push(format!("family {f:?} requires '{key}'"));
            }
        }
        if self.arrivals.is_some() && f != Family::Graph {
            errs.push(format!("'arrivals' does not apply to family {f:?}"));
        }
    }

    fn validate_family(&self, errs: &mut Vec<String>) {
        self.require_absent(errs);
        let f = self.family;
        let kind = self.policy.as_ref().map(|p| p.kind());
        let needs_policy = matches!(
            f,
            Family::SingleServer | Family::InfiniteServer | Family::Tabs | Family::DelayedOff | Family::Graph
        );
        match (&kind, needs_policy) {
            (None, true) => errs.push(format!("family {f:?} requires a policy")),
            (Some(Err(e)), _) => errs.push(e.clone()),
            _ => {}
        }
        if let Some(Ok(k)) = kind {
            let ok = match f {
                Family::SingleServer => !matches!(
                    k,
                    PolicyKind::Tabs | PolicyKind::DelayedOff | PolicyKind::GraphJsq | PolicyKind::GraphJsqD
                ),
                Family::InfiniteServer => !matches!(
                    k,
                    PolicyKind::Tabs
                        | PolicyKind::DelayedOff
                        | PolicyKind::GraphJsq
                        | PolicyKind::GraphJsqD
                        | PolicyKind::Jsw
                ),
                Family::Tabs => k == PolicyKind::Tabs,
                Family::DelayedOff => k == PolicyKind::DelayedOff,
                Family::Graph => matches!(k, PolicyKind::GraphJsq | PolicyKind::GraphJsqD),
                Family::Sde => k == PolicyKind::Jsq,
                Family::Ode => matches!(k, PolicyKind::JsqD | PolicyKind::Jsq | PolicyKind::Tabs),
                Family::Coupling => false,
            };
            if !ok {
                errs.push(format!("policy {} is inconsistent with family {f:?}", k.name()));
            }
            if f.uses_servers() && ok {
                for &n in &self.n {
                    match self.policy.as_ref().unwrap().build(n) {
                        Ok(p) => {
                            if let Err(e) = p.validate(n, self.buffer) {
                                errs.push(format!("N={n}: {e}"));
                            }
                        }
                        Err(e) => errs.push(e),
                    }
                }
            }
        }
        if f == Family::InfiniteServer && self.buffer.is_none() {
            errs.push("family InfiniteServer requires a pool capacity 'buffer'".into());
        }
        if let (Family::Graph, Some(t)) = (f, &self.topology) {
            for &n in &self.n {
                let bad = match t {
                    TopologySpec::Grid => {
                        let m = (n as f64).sqrt().round() as usize;
                        (m * m != n).then(|| format!("grid needs N to be a perfect square, got {n}"))
                    }
                    TopologySpec::Errg { degree } | TopologySpec::ErasedRegular { degree } => match degree.resolve(n) {
                        Ok(d) if d < 0.0 || d > (n as f64 - 1.0) => Some(format!("degree {d} out of range for N={n}")),
                        Ok(_) => None,
                        Err(e) => Some(e),
                    },
                    TopologySpec::Rgg { radius } => (!(*radius >= 0.0)).then(|| "rgg radius must be >= 0".to_string()),
                    TopologySpec::Bipartite { c } => {
                        (!(*c > 0.0 && *c < 1.0)).then(|| "bipartite c must lie in (0,1)".to_string())
                    }
                    _ => None,
                };
                if let Some(b) = bad {
                    errs.push(b);
                }
            }
        }
        if let Some(s) = &self.sde {
            if s.betas.is_empty() || s.betas.iter().any(|&b| !(b > 0.0)) {
                errs.push("sde.betas must be a non-empty list of positive values".into());
            }
            if let Some(l) = &s.regen_levels {
                if l.len() != s.betas.len() || l.iter().any(|&x| !(x > 0.0)) {
                    errs.push("sde.regen_levels must give one positive level per beta".into());
                }
            }
            if s.record_every == 0 {
                errs.push("sde.record_every must be >= 1".into());
            }
        }
        if let Some(o) = &self.ode {
            if o.levels == 0 {
                errs.push("ode.levels must be >= 1".into());
            }
            if o.model == OdeModel::InfiniteServer && self.buffer.is_none() {
                errs.push("ode model infinite-server requires 'buffer'".into());
            }
            if o.model == OdeModel::Tabs && self.policy.as_ref().is_none_or(|p| p.kind != "tabs") {
                errs.push("ode model tabs requires a tabs policy for mu and nu".into());
            }
            if o.model == OdeModel::JsqD && self.policy.as_ref().is_none_or(|p| p.d.is_none()) {
                errs.push("ode model jsq-d requires policy.d".into());
            }
            if o.delta.is_some() && o.model != OdeModel::Tabs {
                errs.push("ode.delta only applies to model tabs".into());
            }
        }
        if let Some(c) = &self.coupling {
            match (parse_coupled_policy(&c.policy_a), parse_coupled_policy(&c.policy_b)) {
                (Ok(a), Ok(b)) => {
                    if crate::runner::predicates_for(c.scheme, a, b).is_empty() {
                        errs.push(format!(
                            "no ordering predicate applies to {} vs {} under the {:?} scheme",
                            c.policy_a, c.policy_b, c.scheme
                        ));
                    }
                }
                (ra, rb) => errs.extend([ra.err(), rb.err()].into_iter().flatten()),
            }
            if c.scheme == CouplingScheme::T && self.buffer.is_none() {
                errs.push("T-coupling requires a pool capacity 'buffer'".into());
            }
            if c.order.is_some() && c.scheme == CouplingScheme::S {
                errs.push("coupling.order only applies to the T scheme".into());
            }
        }
    }

    fn validate_load(&self, errs: &mut Vec<String>, warnings: &mut Vec<String>) {
        let f = self.family;
        let Some(load) = &self.load else {
            if f != Family::Sde {
                errs.push(format!("family {f:?} requires a load rule"));
            }
            return;
        };
        if f == Family::Sde {
            errs.push("family Sde takes its drift from sde.betas, not a load rule".into());
            return;
        }
        let consistent = match load {
            LoadRule::Periodic { .. } => {
                matches!(f, Family::Tabs | Family::DelayedOff)
                    || (f == Family::Ode && self.ode.as_ref().is_some_and(|o| o.model == OdeModel::Tabs))
            }
            LoadRule::PooledHalfinWhitt { .. } => matches!(f, Family::InfiniteServer),
            LoadRule::HalfinWhitt { .. } => matches!(f, Family::SingleServer | Family::InfiniteServer | Family::Graph),
            _ => true,
        };
        if !consistent {
            errs.push(format!("load rule {load:?} is inconsistent with family {f:?}"));
        }
        let pooled = f == Family::InfiniteServer
            || (f == Family::Ode && self.ode.as_ref().is_some_and(|o| o.model == OdeModel::InfiniteServer))
            || (f == Family::Coupling && self.coupling.as_ref().is_some_and(|c| c.scheme == CouplingScheme::T));
        let cap = if pooled { self.buffer.unwrap_or(1) as f64 } else { 1.0 };
        for &n in &self.n {
            let peak = load.peak(n);
            if !(load.per_server(n) >= 0.0 && peak.is_finite()) {
                errs.push(format!("N={n}: arrival rate must be finite and >= 0"));
                continue;
            }
            if let LoadRule::Periodic { base, amplitude, period } = *load {
                if base - amplitude.abs() < 0.0 || !(period > 0.0) {
                    errs.push("periodic load needs base >= |amplitude| and period > 0".into());
                }
            }
            let over = if pooled { peak > cap } else { peak >= cap };
            if over {
                let msg = format!("N={n}: subcritical load required (λ={peak} per server, capacity {cap})");
                if self.allow_overload {
                    warnings.push(msg);
                } else {
                    errs.push(msg);
                }
            }
        }
    }
}
