//! Small statistical helpers used by estimators and tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov–Smirnov statistic and p-value.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample Kolmogorov–Smirnov statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.total_cmp(y));
    xb.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Pearson chi-square p-value of `counts` against the uniform law.
pub fn chi_square_uniform_pvalue(counts: &[u64]) -> f64 {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    let e = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let chi = ChiSquared::new((k - 1) as f64).expect("k >= 2");
    1.0 - chi.cdf(stat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}

/// Total-variation distance between two probability vectors (zero-padded).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n).map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean across replications.
pub fn std_err(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}
