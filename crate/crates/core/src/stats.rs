//! Goodness-of-fit statistics used by the verification code and tests.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effective_n: f64,
}

/// Asymptotic Kolmogorov tail `P(K > x)`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.27 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn p_value(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: p_value(d, n), effective_n: n }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (x, y) = (sorted(a), sorted(b));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: p_value(d, ne), effective_n: ne }
}

/// Wasserstein-1 distance between two empirical laws of equal size.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "equal sample sizes required");
    let (x, y) = (sorted(a), sorted(b));
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        MeanEstimate { mean, stderr: (var / n as f64).sqrt(), n }
    }
}

/// Runs `trial` with up to three seeds and passes when two succeed.
pub fn two_of_three(mut trial: impl FnMut(u64) -> bool, base_seed: u64) -> bool {
    let mut passes = 0;
    for k in 0..3u64 {
        if trial(crate::rng::derive_seed(base_seed, &format!("retry{k}"))) {
            passes += 1;
        }
        if passes == 2 {
            return true;
        }
        if passes + (2 - k as usize) < 2 {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn kolmogorov_tail_values() {
        // textbook critical values
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn uniform_passes_and_shift_fails() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        assert!(ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        let v: Vec<f64> = (0..5000).map(|_| r.random::<f64>() + 0.1).collect();
        assert!(ks_two_sample(&u, &v).p_value < 1e-6);
        assert!((wasserstein1(&u, &v) - 0.1).abs() < 0.03);
    }

    #[test]
    fn retry_policy() {
        assert!(two_of_three(|_| true, 1));
        assert!(!two_of_three(|_| false, 1));
        let mut calls = 0;
        assert!(two_of_three(
            |_| {
                calls += 1;
                calls != 1
            },
            1
        ));
        assert_eq!(calls, 3);
    }

    #[test]
    fn mean_estimate() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
