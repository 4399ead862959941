use lbmesh_core::diffusion::{decade_checkpoints, detect_regenerations, extrema_growth, sde_jsq, SdeConfig};
use lbmesh_core::rng::RngStream;
use lbmesh_core::stats::{ks_two_sample, mean, std_dev};

#[test]
fn mean_cycle_length_is_stable_across_seeds() {
    let cfg = SdeConfig::new(1e4, 1e-3).record_every(5);
    let lengths: Vec<f64> = (0..20)
        .map(|seed| {
            let path = sde_jsq((0.0, 1.0), 1.0, &cfg, &mut RngStream::new(seed, 0)).unwrap();
            detect_regenerations(&path, 1.0).unwrap().mean_cycle_length().unwrap()
        })
        .collect();
    let cv = std_dev(&lengths) / mean(&lengths);
    println!("mean cycle {:.3}, CV {cv:.3}", mean(&lengths));
    assert!(lengths.iter().all(|l| l.is_finite() && *l > 0.0));
    assert!(cv < 0.2, "{cv}");
}

fn endpoints(dt: f64, reps: u64, stream: u64) -> Vec<f64> {
    let cfg = SdeConfig::new(1.0, dt).record_every(usize::MAX);
    (0..reps).map(|r| sde_jsq((-0.5, 0.5), 1.0, &cfg, &mut RngStream::new(r, stream)).unwrap().last().q1).collect()
}

#[test]
fn euler_endpoint_law_converges_as_dt_halves() {
    // Q̄₂ is a poor observable here: paths that never reflect end on an atom
    // whose location moves with dt, so KS sees that jump rather than the law.
    let dts = [0.4, 0.2, 0.1, 0.05, 0.025];
    let samples: Vec<_> = dts.iter().enumerate().map(|(i, &dt)| endpoints(dt, 40_000, 10 + i as u64)).collect();
    let ks: Vec<f64> = samples.windows(2).map(|w| ks_two_sample(&w[0], &w[1]).0).collect();
    println!("KS distances {ks:?}");
    assert!(ks.windows(2).all(|w| w[1] < w[0]), "{ks:?}");
}

#[test]
fn extrema_growth_within_loose_bands() {
    let beta = 1.0;
    let cfg = SdeConfig::new(1e5, 1e-3).record_every(10);
    let path = sde_jsq((0.0, 1.0), beta, &cfg, &mut RngStream::new(3, 0)).unwrap();
    let ratios = extrema_growth(&path, &decade_checkpoints(1e5));
    let last = ratios.last().unwrap();
    println!("{ratios:?}");
    assert!((last.t - 1e5).abs() < 1e-6);
    assert!((0.5 / beta..=4.0 / beta).contains(&last.q2), "{}", last.q2);
    assert!((0.5..=4.0).contains(&last.q1), "{}", last.q1);
}
