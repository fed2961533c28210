//! Kolmogorov-Smirnov machinery shared by the calibration harness and the
//! acceptance checks.

use crate::error::{Error, Result};
use crate::special::phi_raw;

/// One-sample KS statistic of `values` against a reference CDF.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("ks_statistic"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// KS distance from the uniform distribution on [0, 1].
pub fn ks_statistic_uniform(values: &[f64]) -> Result<f64> {
    ks_statistic(values, |x| x.clamp(0.0, 1.0))
}

/// KS distance from the standard normal distribution.
pub fn ks_statistic_std_normal(values: &[f64]) -> Result<f64> {
    ks_statistic(values, phi_raw)
}

/// Asymptotic one-sample KS critical value at level `alpha`:
/// sqrt(-ln(alpha/2)/2) / sqrt(n).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    ((-(alpha / 2.0).ln()) / 2.0).sqrt() / (n as f64).sqrt()
}

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value for a one-sample KS statistic, with the usual
/// finite-sample correction of the effective lambda.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("two_sample_ks"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).expect("finite values"));
    ys.sort_by(|u, v| u.partial_cmp(v).expect("finite values"));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sn = ne.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok((d, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_uniform_on_exact_grid_is_half_spacing() {
        // Points at (i - 0.5)/n give D = 1/(2n).
        let n = 50;
        let vals: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let d = ks_statistic_uniform(&vals).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_value_matches_known_constant() {
        // c(0.01) = 1.62762 in units of 1/sqrt(n).
        let c = ks_critical_value(1, 0.01);
        assert!((c - 1.6276236115189504).abs() < 1e-10);
    }

    #[test]
    fn kolmogorov_sf_endpoints() {
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(4.0) < 1e-10);
        // Q(1.62762) should be close to 0.01 by definition of the critical value.
        assert!((kolmogorov_sf(1.6276236115189504) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn uniform_sample_passes_normal_sample_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let unif: Vec<f64> = (0..4000).map(|_| rng.random_range(0.0..1.0)).collect();
        let d = ks_statistic_uniform(&unif).unwrap();
        assert!(d < ks_critical_value(unif.len(), 0.01));
        // Squashing through x^2 is visibly non-uniform.
        let skewed: Vec<f64> = unif.iter().map(|u| u * u).collect();
        let d2 = ks_statistic_uniform(&skewed).unwrap();
        assert!(d2 > ks_critical_value(skewed.len(), 0.01));
    }

    #[test]
    fn two_sample_ks_same_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2500).map(|_| rng.random::<f64>()).collect();
        let (_, p) = two_sample_ks(&a, &b).unwrap();
        assert!(p > 0.01, "p = {p}");
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.2).collect();
        let (_, p2) = two_sample_ks(&a, &shifted).unwrap();
        assert!(p2 < 1e-6);
    }
}
