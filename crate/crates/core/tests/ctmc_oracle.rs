//! Small systems against a direct linear solve of their Markov chains.

use std::collections::HashMap;

use lbmesh_core::engine::run;
use lbmesh_core::metrics::erlang_b;
use lbmesh_core::policies::{PolicyConfig, PolicyKind};
use lbmesh_core::rng::RngStream;
use lbmesh_core::sim::{DispatchModel, DispatchSpec};
use lbmesh_core::stats::total_variation;
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
enum Oracle {
    Random,
    Jsq,
    JsqTwo,
    /// JIQ-like class policy: sample everyone while someone is idle, else one.
    PiN1,
}

/// Probability that an arrival is sent to each server of `x`.
fn routing(x: &[u32], p: Oracle) -> Vec<f64> {
    let n = x.len();
    let min = *x.iter().min().unwrap();
    let uniform_over = |pred: &dyn Fn(u32) -> bool| {
        let k = x.iter().filter(|&&v| pred(v)).count() as f64;
        x.iter().map(|&v| if pred(v) { 1.0 / k } else { 0.0 }).collect::<Vec<_>>()
    };
    match p {
        Oracle::Random => vec![1.0 / n as f64; n],
        Oracle::Jsq => uniform_over(&|v| v == min),
        Oracle::PiN1 if min == 0 => uniform_over(&|v| v == 0),
        Oracle::PiN1 => vec![1.0 / n as f64; n],
        Oracle::JsqTwo => {
            let w = 1.0 / (n * (n - 1)) as f64;
            let mut out = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    match x[i].cmp(&x[j]) {
                        std::cmp::Ordering::Less => out[i] += w,
                        std::cmp::Ordering::Greater => out[j] += w,
                        std::cmp::Ordering::Equal => {
                            out[i] += w / 2.0;
                            out[j] += w / 2.0;
                        }
                    }
                }
            }
            out
        }
    }
}

fn states(n: usize, b: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, n: usize, lo: u32, b: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in lo..=b {
            prefix.push(v);
            rec(prefix, n, v, b, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, 0, b, &mut out);
    out
}

fn stationary(n: usize, b: u32, lambda: f64, p: Oracle) -> HashMap<Vec<u32>, f64> {
    let st = states(n, b);
    let index: HashMap<Vec<u32>, usize> = st.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let m = st.len();
    let mut q = DMatrix::<f64>::zeros(m, m);
    let mut add = |from: usize, mut to: Vec<u32>, rate: f64| {
        to.sort_unstable();
        let j = index[&to];
        if j != from {
            q[(from, j)] += rate;
            q[(from, from)] -= rate;
        }
    };
    for (i, x) in st.iter().enumerate() {
        for (s, ps) in routing(x, p).into_iter().enumerate() {
            if ps > 0.0 && x[s] < b {
                let mut y = x.clone();
                y[s] += 1;
                add(i, y, lambda * n as f64 * ps);
            }
        }
        for s in 0..n {
            if x[s] > 0 {
                let mut y = x.clone();
                y[s] -= 1;
                add(i, y, 1.0);
            }
        }
    }
    // solve pi Q = 0 with the last balance equation swapped for sum(pi) = 1
    let mut a = q.transpose();
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let pi = a.lu().solve(&rhs).expect("nonsingular generator");
    st.into_iter().zip(pi.iter().copied()).collect()
}

fn simulated(n: usize, b: u32, lambda: f64, p: Oracle, horizon: f64, seed: u64) -> HashMap<Vec<u32>, f64> {
    let policy = match p {
        Oracle::Random => PolicyConfig::new(PolicyKind::Random),
        Oracle::Jsq => PolicyConfig::new(PolicyKind::Jsq),
        Oracle::JsqTwo => PolicyConfig::jsq_d(2),
        Oracle::PiN1 => PolicyConfig::pi_class(vec![n, 1]),
    };
    let mut spec = DispatchSpec::new(n, lambda, policy);
    spec.buffer = Some(b);
    spec.state_law = true;
    spec.window_start = 100.0;
    let mut model = DispatchModel::new(spec).unwrap();
    run(&mut model, horizon, &mut RngStream::new(seed, 0), false).unwrap();
    let law = model.obs.state_law().unwrap();
    let total: f64 = law.values().sum();
    law.into_iter().map(|(k, v)| (k, v / total)).collect()
}

#[test]
fn empirical_laws_match_generator_solve() {
    let (b, lambda) = (2, 0.7);
    for n in [2, 3] {
        for p in [Oracle::Random, Oracle::Jsq, Oracle::JsqTwo, Oracle::PiN1] {
            let exact = stationary(n, b, lambda, p);
            let sim = simulated(n, b, lambda, p, 3e5, 11);
            let keys = states(n, b);
            let pe: Vec<f64> = keys.iter().map(|k| exact[k]).collect();
            let ps: Vec<f64> = keys.iter().map(|k| sim.get(k).copied().unwrap_or(0.0)).collect();
            let tv = total_variation(&pe, &ps);
            println!("N={n} {p:?}: TV={tv:.4}");
            assert!(tv <= 0.01, "N={n} {p:?}: TV={tv}");
        }
    }
}

#[test]
fn oracle_sanity_m_m_1_k() {
    // N=1 random: birth-death chain with ratio λ
    let pi = stationary(1, 2, 0.5, Oracle::Random);
    let z = 1.0 + 0.5 + 0.25;
    assert!((pi[&vec![0]] - 1.0 / z).abs() < 1e-12);
    assert!((pi[&vec![2]] - 0.25 / z).abs() < 1e-12);
}

#[test]
fn jsw_is_central_m_m_n() {
    // least-workload routing is a single FCFS queue feeding N servers
    let (n, lambda) = (5usize, 0.8);
    let a = lambda * n as f64;
    let eb = erlang_b(n as u64, a);
    let rho = lambda;
    let erlang_c = eb / (1.0 - rho * (1.0 - eb));
    let expected = erlang_c / (n as f64 - a);
    let mut waits = Vec::new();
    for seed in 0..4 {
        let mut spec = DispatchSpec::new(n, lambda, PolicyConfig::new(PolicyKind::Jsw));
        spec.window_start = 500.0;
        let mut model = DispatchModel::new(spec).unwrap();
        run(&mut model, 5e4, &mut RngStream::new(seed, 0), false).unwrap();
        waits.push(model.waits.mean_wait());
    }
    let mean = waits.iter().sum::<f64>() / waits.len() as f64;
    println!("JSW wait {mean:.4} vs Erlang C {expected:.4}");
    assert!((mean - expected).abs() / expected < 0.05, "{mean} vs {expected}");
}
