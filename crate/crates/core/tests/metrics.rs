use lbmesh_core::engine::run;
use lbmesh_core::metrics::{energy_stats, erlang_b, MetricsReport, ModeFractions, LITTLE_TOL};
use lbmesh_core::policies::{PolicyConfig, PolicyKind};
use lbmesh_core::rng::RngStream;
use lbmesh_core::sim::{Discipline, DispatchModel, DispatchSpec, TabsModel, TabsSpec};

fn dispatch(spec: DispatchSpec, horizon: f64, seed: u64) -> MetricsReport {
    let mut m = DispatchModel::new(spec).unwrap();
    let trace = run(&mut m, horizon, &mut RngStream::new(seed, 0), false).unwrap();
    MetricsReport::from_dispatch(&mut m, &trace, horizon)
}

#[test]
fn random_routing_wait_is_m_m_1() {
    let mut spec = DispatchSpec::new(1000, 0.9, PolicyConfig::new(PolicyKind::Random));
    spec.window_start = 2000.0;
    let r = dispatch(spec, 4000.0, 1);
    println!("random: wait {:.3}, little {:.4}", r.mean_wait, r.little_residual);
    assert!((8.55..=9.45).contains(&r.mean_wait));
    assert!(r.little_residual <= LITTLE_TOL);
    assert_eq!(r.messages_per_task, Some(0.0));
}

#[test]
fn jiq_rarely_waits_and_sends_at_most_one_message() {
    let mut spec = DispatchSpec::new(10_000, 0.9, PolicyConfig::new(PolicyKind::Jiq));
    spec.window_start = 50.0;
    let r = dispatch(spec, 100.0, 2);
    println!("jiq: p_wait {:.4}, q1 {:.4}, msgs {:?}", r.p_wait, r.q[0], r.messages_per_task);
    assert!(r.p_wait <= 0.02);
    assert!(r.messages_per_task.unwrap() <= 1.0);
    assert!(r.little_residual <= LITTLE_TOL);
    // a never-off system's energy follows from its busy fraction
    let e = energy_stats(Some(&ModeFractions::always_on(r.q[0])), 0.9, 200.0, 140.0).unwrap();
    assert!((e.mean_power - (0.9 * 200.0 + 0.1 * 140.0)).abs() < 1.0);
}

#[test]
fn jsq_two_sends_four_messages() {
    let r = dispatch(DispatchSpec::new(500, 0.9, PolicyConfig::jsq_d(2)), 50.0, 3);
    assert_eq!(r.messages_per_task, Some(4.0));
    assert!(r.energy_per_server.is_none() && r.wastage.is_none());
}

#[test]
fn jsq_pools_lose_like_erlang() {
    // JSQ only drops a task when every pool is full: an Erlang loss system
    let (n, b, lambda) = (100usize, 2u32, 1.8);
    let mut losses = 0.0;
    for seed in 0..4 {
        let mut spec = DispatchSpec::new(n, lambda, PolicyConfig::new(PolicyKind::Jsq));
        spec.buffer = Some(b);
        spec.discipline = Discipline::Pool;
        spec.window_start = 50.0;
        let r = dispatch(spec, 5000.0, seed);
        losses += r.loss_fraction / 4.0;
        assert!((r.scaled_loss - (n as f64).sqrt() * r.loss_fraction).abs() < 1e-12);
    }
    let exact = erlang_b(b as u64 * n as u64, lambda * n as f64);
    println!("loss {losses:.5} vs Erlang {exact:.5}");
    assert!((losses - exact).abs() / exact < 0.05);
}

#[test]
fn tabs_report_carries_energy_and_bounded_messages() {
    let mut spec = TabsSpec::new(1000, 0.3, 0.1, 0.1);
    spec.window_start = 200.0;
    let mut m = TabsModel::new(spec).unwrap();
    let trace = run(&mut m, 600.0, &mut RngStream::new(4, 0), false).unwrap();
    let r = MetricsReport::from_tabs(&mut m, &trace, 600.0);
    println!(
        "tabs: P {:?} Z {:?} wait {:.4} msgs {:?}",
        r.energy_per_server, r.wastage, r.mean_wait, r.messages_per_task
    );
    let p = r.energy_per_server.unwrap();
    assert!((0.3 * 200.0..=200.0).contains(&p));
    assert!((r.wastage.unwrap() - (p - 60.0)).abs() < 1e-9);
    assert!(r.messages_per_task.unwrap() <= 2.0);
    let names: Vec<String> = r.rows().into_iter().map(|(k, _)| k).collect();
    for k in ["mean_wait", "q1", "qbar1", "energy_per_server", "wastage", "scaled_loss", "little_residual"] {
        assert!(names.iter().any(|n| n == k), "{k}");
    }
}
