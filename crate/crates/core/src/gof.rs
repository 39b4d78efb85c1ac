//! Small distribution-comparison helpers: Kolmogorov-Smirnov tests, empirical
//! quantiles and CDFs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample KS test with the asymptotic p-value (Stephens' small-sample
/// correction on the effective size).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs non-empty samples");
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d),
    }
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> KsResult {
    assert!(!data.is_empty(), "KS needs a non-empty sample");
    let x = sorted(data);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (k, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    let ne = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d),
    }
}

/// Linear-interpolation quantile of an already sorted slice (the "type 7"
/// definition).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], prob: f64) -> f64 {
    quantile_sorted(&sorted(xs), prob)
}

/// Fraction of a sorted sample `<= x`.
pub fn ecdf_sorted(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}
