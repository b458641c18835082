//! Small statistical toolkit: Kolmogorov–Smirnov tests, k-statistics and
//! moment summaries with standard errors.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Outcome of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-function form, accurate for small arguments
        let z = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=7).map(|k| ((2 * k - 1) as f64).powi(2) * z).map(f64::exp).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

fn asymptotic_p(d: f64, n_eff: f64) -> f64 {
    let root = n_eff.sqrt();
    kolmogorov_survival((root + 0.12 + 0.11 / root) * d)
}

/// One-sample test of `samples` against a continuous `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.len() < 30 {
        return Err(Error::Size(format!("KS test needs at least 30 samples, got {}", samples.len())));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: asymptotic_p(d, n) })
}

/// Two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 30 || b.len() < 30 {
        return Err(Error::Size("KS test needs at least 30 samples in each group".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
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
    Ok(KsResult { statistic: d, p_value: asymptotic_p(d, na * nb / (na + nb)) })
}

/// CDF of a centred normal with the given variance.
pub fn normal_cdf(variance: f64) -> impl Fn(f64) -> f64 {
    let scale = (2.0 * variance).sqrt();
    move |x| 0.5 * erfc(-x / scale)
}

/// Pairwise summation: deterministic and accurate for long inputs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample covariance and its standard error (from the spread of
/// the centred products).
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let cov = pairwise_sum(&prods) / (n - 1.0);
    let m = pairwise_sum(&prods) / n;
    let spread: Vec<f64> = prods.iter().map(|p| (p - m) * (p - m)).collect();
    let se = (pairwise_sum(&spread) / (n - 1.0) / n).sqrt();
    (cov, se)
}

/// Unbiased k-statistics `κ₁ … κ₄`.
pub fn empirical_cumulants(samples: &[f64]) -> Result<[f64; 4]> {
    if samples.len() < 30 {
        return Err(Error::Size(format!("k-statistics need at least 30 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let m = mean(samples);
    let pow = |p: i32| pairwise_sum(&samples.iter().map(|x| (x - m).powi(p)).collect::<Vec<_>>()) / n;
    let (m2, m3, m4) = (pow(2), pow(3), pow(4));
    let k2 = n / (n - 1.0) * m2;
    let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
    let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
    Ok([m, k2, k3, k4])
}

/// Large-sample standard errors of the k-statistics, using the sample's own
/// cumulants (`κ₅`, `κ₆` neglected beyond the normal-theory terms).
pub fn cumulant_standard_errors(k: &[f64; 4], n: usize) -> [f64; 4] {
    let n = n as f64;
    let k2 = k[1].max(0.0);
    [
        (k2 / n).sqrt(),
        ((2.0 * k2 * k2 / (n - 1.0) + k[3] / n).max(0.0)).sqrt(),
        (6.0 * k2.powi(3) / n).sqrt(),
        (24.0 * k2.powi(4) / n).sqrt(),
    ]
}
