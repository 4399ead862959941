use rand::{Rng, RngCore};
use rand_distr::Open01;

use crate::error::{invalid, Result};

/// Exponential duration `-ln(u)/rate` for a given uniform `u` in (0,1).
pub fn exp_from_uniform(rate: f64, u: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return invalid(format!("rate must be positive, got {rate}"));
    }
    if !(u > 0.0 && u < 1.0) {
        return invalid(format!("uniform draw must lie in (0,1), got {u}"));
    }
    Ok(-u.ln() / rate)
}

pub fn exp_sample<R: RngCore + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    let u: f64 = rng.sample(Open01);
    exp_from_uniform(rate, u)
}

/// Hot-path variant for rates already validated by the caller.
#[inline]
pub(crate) fn exp_unchecked<R: RngCore + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln() / rate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceDist {
    Exp,
    /// Type 1 with probability `p` at rate `rate1`, otherwise rate `rate2`.
    HyperExp {
        p: f64,
        rate1: f64,
        rate2: f64,
    },
}

impl ServiceDist {
    pub fn hyperexp(p: f64, rate1: f64, rate2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(rate1 > 0.0) || !(rate2 > 0.0) {
            return invalid("hyper-exponential needs p in [0,1] and positive rates");
        }
        let mean = p / rate1 + (1.0 - p) / rate2;
        if (mean - 1.0).abs() > 1e-9 {
            return invalid(format!("service mean must be 1, got {mean}"));
        }
        Ok(ServiceDist::HyperExp { p, rate1, rate2 })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceDist::Exp => 1.0,
            ServiceDist::HyperExp { p, rate1, rate2 } => p / rate1 + (1.0 - p) / rate2,
        }
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceDist::Exp => exp_unchecked(1.0, rng),
            ServiceDist::HyperExp { p, rate1, rate2 } => {
                let u: f64 = rng.random();
                if u < p {
                    exp_unchecked(rate1, rng)
                } else {
                    exp_unchecked(rate2, rng)
                }
            }
        }
    }
}
