//! Named configs, one per acceptance experiment.

use crate::config::{parse_config, ConfigError, ExperimentConfig};

const PRESETS: &[(&str, &str)] = &[
    (
        "mm1-random",
        r#"{"experiment_id": "mm1-random", "family": "single-server", "policy": {"kind": "random"},
            "n": [1000], "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 20000, "warmup": 2000, "seed": 1}"#,
    ),
    (
        "jsq2-fixed-point",
        r#"{"experiment_id": "jsq2-fixed-point", "family": "single-server", "policy": {"kind": "jsq_d", "d": 2},
            "n": [10000], "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 300, "warmup": 100, "seed": 2}"#,
    ),
    (
        "jsq-fluid",
        r#"{"experiment_id": "jsq-fluid", "family": "single-server", "policy": {"kind": "jsq"},
            "n": [10000], "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 200, "warmup": 100, "seed": 3}"#,
    ),
    (
        "jiq-fluid",
        r#"{"experiment_id": "jiq-fluid", "family": "single-server", "policy": {"kind": "jiq"},
            "n": [10000], "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 200, "warmup": 100, "seed": 33}"#,
    ),
    (
        "batch-jsq-d",
        r#"{"experiment_id": "batch-jsq-d", "family": "single-server", "policy": {"kind": "batch_jsq_d", "batch": 10, "d": 40},
            "n": [10000], "load": {"rule": "fixed", "lambda": 0.7}, "horizon": 10, "warmup": 0,
            "sample_interval": 0.1, "replications": 10, "seed": 4}"#,
    ),
    (
        "tabs-fluid-sim",
        r#"{"experiment_id": "tabs-fluid-sim", "family": "tabs", "policy": {"kind": "tabs", "mu": 0.1, "nu": 0.1},
            "n": [10000], "load": {"rule": "fixed", "lambda": 0.3}, "horizon": 100, "warmup": 0,
            "sample_interval": 0.5, "power": {"start": "idle-on"}, "seed": 5}"#,
    ),
    (
        "tabs-fluid-ode",
        r#"{"experiment_id": "tabs-fluid-ode", "family": "ode", "policy": {"kind": "tabs", "mu": 0.1, "nu": 0.1},
            "load": {"rule": "fixed", "lambda": 0.3}, "horizon": 100, "dt": 0.001, "sample_interval": 0.5,
            "ode": {"model": "tabs", "delta": [0, 0]}}"#,
    ),
    (
        "infinite-server-ode",
        r#"{"experiment_id": "infinite-server-ode", "family": "ode", "load": {"rule": "fixed", "lambda": 2},
            "buffer": 3, "horizon": 10, "dt": 0.0001, "sample_interval": 0.1,
            "ode": {"model": "infinite-server", "initial": [0.8, 0.5, 0.2]}}"#,
    ),
    (
        "tabs-scaling",
        r#"{"experiment_id": "tabs-scaling", "family": "tabs", "policy": {"kind": "tabs", "mu": 0.1, "nu": 0.1},
            "n": [100, 1000, 10000], "load": {"rule": "fixed", "lambda": 0.3}, "horizon": 1000, "warmup": 500,
            "replications": 3, "power": {"start": "idle-on"}, "seed": 6}"#,
    ),
    (
        "tabs-instability",
        r#"{"experiment_id": "tabs-instability", "family": "tabs", "policy": {"kind": "tabs", "mu": 0.1, "nu": 0.01},
            "n": [2, 50, 500], "load": {"rule": "fixed", "lambda": 0.8}, "horizon": 10000, "warmup": 0,
            "power": {"start": "idle-on"}, "seed": 7}"#,
    ),
    (
        "blocking-halfin-whitt",
        r#"{"experiment_id": "blocking-halfin-whitt", "family": "infinite-server", "policy": {"kind": "jsq"},
            "n": [10000], "load": {"rule": "halfin-whitt", "beta": 1}, "buffer": 1, "horizon": 1000, "warmup": 100,
            "replications": 8, "seed": 8}"#,
    ),
    (
        "diffusion-tails",
        r#"{"experiment_id": "diffusion-tails", "family": "sde", "horizon": 100000, "dt": 0.001,
            "sde": {"betas": [0.5, 1, 2], "regen_levels": [2, 1, 0.25], "record_every": 10, "min_cycles": 1000},
            "seed": 9}"#,
    ),
    (
        "coupling-s-jsq-mjsq",
        r#"{"experiment_id": "coupling-s-jsq-mjsq", "family": "coupling", "n": [50], "buffer": 3,
            "load": {"rule": "fixed", "lambda": 0.95}, "horizon": 100, "replications": 100,
            "coupling": {"scheme": "s", "policy_a": "jsq", "policy_b": "mjsq(3)"}, "seed": 10}"#,
    ),
    (
        "coupling-s-jsqd-jsqnd",
        r#"{"experiment_id": "coupling-s-jsqd-jsqnd", "family": "coupling", "n": [50], "buffer": 3,
            "load": {"rule": "fixed", "lambda": 0.95}, "horizon": 100, "replications": 100,
            "coupling": {"scheme": "s", "policy_a": "jsq_d(2)", "policy_b": "jsq_nd(3,2)"}, "seed": 11}"#,
    ),
    (
        "coupling-t-jsq-cjsq",
        r#"{"experiment_id": "coupling-t-jsq-cjsq", "family": "coupling", "n": [50], "buffer": 3,
            "load": {"rule": "fixed", "lambda": 2.5}, "horizon": 100, "replications": 100,
            "coupling": {"scheme": "t", "policy_a": "jsq", "policy_b": "cjsq(3)"}, "seed": 12}"#,
    ),
    (
        "graph-errg-sqrt",
        r#"{"experiment_id": "graph-errg-sqrt", "family": "graph", "policy": {"kind": "graph_jsq"},
            "topology": {"kind": "errg", "degree": "sqrt"}, "n": [4000], "load": {"rule": "fixed", "lambda": 0.9},
            "horizon": 200, "warmup": 100, "seed": 13}"#,
    ),
    (
        "graph-ring",
        r#"{"experiment_id": "graph-ring", "family": "graph", "policy": {"kind": "graph_jsq"},
            "topology": {"kind": "ring"}, "n": [1000, 4000], "load": {"rule": "fixed", "lambda": 0.9},
            "horizon": 1000, "warmup": 200, "seed": 14}"#,
    ),
    (
        "graph-errg-2",
        r#"{"experiment_id": "graph-errg-2", "family": "graph", "policy": {"kind": "graph_jsq"},
            "topology": {"kind": "errg", "degree": 2}, "n": [1000], "load": {"rule": "fixed", "lambda": 0.9},
            "horizon": 1000, "warmup": 200, "seed": 15}"#,
    ),
    (
        "graph-bipartite",
        r#"{"experiment_id": "graph-bipartite", "family": "graph", "policy": {"kind": "graph_jsq"},
            "topology": {"kind": "bipartite", "c": 0.25}, "n": [2000], "load": {"rule": "fixed", "lambda": 0.95},
            "horizon": 50, "warmup": 0, "sample_interval": 1, "seed": 16}"#,
    ),
    (
        "graph-jsq-d-sim",
        r#"{"experiment_id": "graph-jsq-d-sim", "family": "graph", "policy": {"kind": "graph_jsq_d", "d": 2},
            "topology": {"kind": "erased-regular", "degree": "sqrt"}, "n": [10000],
            "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 10, "warmup": 0, "sample_interval": 0.1, "seed": 17}"#,
    ),
    (
        "jsq-d-ode",
        r#"{"experiment_id": "jsq-d-ode", "family": "ode", "policy": {"kind": "jsq_d", "d": 2},
            "load": {"rule": "fixed", "lambda": 0.9}, "horizon": 10, "dt": 0.001, "sample_interval": 0.1,
            "ode": {"model": "jsq-d"}}"#,
    ),
    (
        "oracle-random",
        r#"{"experiment_id": "oracle-random", "family": "single-server", "policy": {"kind": "random"},
            "n": [2, 3], "buffer": 2, "load": {"rule": "fixed", "lambda": 0.7}, "horizon": 300000, "warmup": 100,
            "state_law": true, "seed": 18}"#,
    ),
    (
        "oracle-jsq",
        r#"{"experiment_id": "oracle-jsq", "family": "single-server", "policy": {"kind": "jsq"},
            "n": [2, 3], "buffer": 2, "load": {"rule": "fixed", "lambda": 0.7}, "horizon": 300000, "warmup": 100,
            "state_law": true, "seed": 19}"#,
    ),
    (
        "oracle-jsq2",
        r#"{"experiment_id": "oracle-jsq2", "family": "single-server", "policy": {"kind": "jsq_d", "d": 2},
            "n": [2, 3], "buffer": 2, "load": {"rule": "fixed", "lambda": 0.7}, "horizon": 300000, "warmup": 100,
            "state_law": true, "seed": 20}"#,
    ),
    (
        "oracle-pi",
        r#"{"experiment_id": "oracle-pi", "family": "single-server", "policy": {"kind": "pi_class", "d_vector": ["N", 1]},
            "n": [2, 3], "buffer": 2, "load": {"rule": "fixed", "lambda": 0.7}, "horizon": 300000, "warmup": 100,
            "state_law": true, "seed": 21}"#,
    ),
];

pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(name, _)| *name).collect()
}

/// JSON text of a preset.
pub fn preset_json(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = preset_json(name).ok_or_else(|| {
        ConfigError::Invalid(vec![format!("unknown preset '{name}' (known: {})", list_presets().join(", "))])
    })?;
    Ok(parse_config(text)?.config)
}
