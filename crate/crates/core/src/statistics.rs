//! Uniformity statistics on the sphere built from pairwise angles: the
//! generalized Ajne and Gine statistics, their weighted combination, and a
//! Monte-Carlo evaluation of Ajne's hemisphere-count integral.
//!
//! Pairs are visited in a fixed `(i, j)`, `i < j` order so every statistic is
//! bit-reproducible regardless of threading elsewhere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::dot;
use crate::sample::UnitSample;
use crate::samplers::{uniform_direction, SeedSpec};
use crate::special::gine_constant;

/// Both uniformity statistics of one sample and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatPair {
    pub t_ajne: f64,
    pub t_gine: f64,
    pub combined: f64,
    pub w_ajne: f64,
    pub w_gine: f64,
    pub n: usize,
    pub p: usize,
    /// Mean pairwise angle.
    pub mean_psi: f64,
    /// `Tr(S^2)` of the sample second-moment matrix.
    pub trace_s2: f64,
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

#[inline]
fn clamped_cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// Upper-triangular pairwise angles `psi_ij = arccos(x_i . x_j)`, listed
/// row by row (`(0,1), (0,2), ..., (1,2), ...`).
pub fn pairwise_angles(sample: &UnitSample) -> Vec<f64> {
    let n = sample.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let xi = sample.row(i);
        for j in (i + 1)..n {
            out.push(clamped_cos(xi, sample.row(j)).acos());
        }
    }
    out
}

/// `(sum psi_ij, sum sin psi_ij)` over `i < j`.
fn pair_sums(sample: &UnitSample) -> (f64, f64) {
    let n = sample.len();
    let (mut psi, mut sin) = (0.0, 0.0);
    for i in 0..n {
        let xi = sample.row(i);
        // per-row partial sums keep the accumulation error small for large n
        let (mut row_psi, mut row_sin) = (0.0, 0.0);
        for j in (i + 1)..n {
            let c = clamped_cos(xi, sample.row(j));
            row_psi += c.acos();
            row_sin += (1.0 - c * c).max(0.0).sqrt();
        }
        psi += row_psi;
        sin += row_sin;
    }
    (psi, sin)
}

fn ajne_from_sum(n: usize, sum_psi: f64) -> f64 {
    let nf = n as f64;
    nf / 4.0 - sum_psi / (PI * nf)
}

fn gine_from_sum(n: usize, p: usize, sum_sin: f64) -> f64 {
    let nf = n as f64;
    nf / 2.0 - (p as f64 - 1.0) / (2.0 * nf) * gine_constant(p) * sum_sin
}

/// Generalized Ajne statistic `t_A = n/4 - (1/(pi n)) sum_{i<j} psi_ij`.
pub fn ajne(sample: &UnitSample) -> f64 {
    ajne_from_sum(sample.len(), pair_sums(sample).0)
}

/// Generalized Gine statistic
/// `t_G = n/2 - ((p-1)/(2n)) (Gamma(alpha+1/2)/Gamma(alpha+1))^2 sum_{i<j} sin psi_ij`.
pub fn gine(sample: &UnitSample) -> f64 {
    gine_from_sum(sample.len(), sample.dim(), pair_sums(sample).1)
}

fn check_weights(w_ajne: f64, w_gine: f64) -> Result<()> {
    let ok = w_ajne.is_finite() && w_gine.is_finite() && w_ajne >= 0.0 && w_gine >= 0.0;
    if !ok || (w_ajne == 0.0 && w_gine == 0.0) {
        return Err(Error::InvalidWeights { w_ajne, w_gine });
    }
    Ok(())
}

/// Both statistics and `w_ajne * t_A + w_gine * t_G`.
pub fn combined(sample: &UnitSample, w_ajne: f64, w_gine: f64) -> Result<StatPair> {
    check_weights(w_ajne, w_gine)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidDimensions(format!(
            "pairwise statistics need n >= 2, got {n}"
        )));
    }
    let p = sample.dim();
    let (sum_psi, sum_sin) = pair_sums(sample);
    let t_ajne = ajne_from_sum(n, sum_psi);
    let t_gine = gine_from_sum(n, p, sum_sin);
    Ok(StatPair {
        t_ajne,
        t_gine,
        combined: w_ajne * t_ajne + w_gine * t_gine,
        w_ajne,
        w_gine,
        n,
        p,
        mean_psi: sum_psi / (n * (n - 1) / 2) as f64,
        trace_s2: sample.trace_s2(),
    })
}

/// Monte-Carlo value of Ajne's integral form
/// `(1/(n |S^{p-1}|)) int (N(y) - n/2)^2 dy`, where `N(y)` counts the points
/// in the open hemisphere centred at `y`. Directions are uniform, so the
/// estimate is the sample mean of `(N(y) - n/2)^2 / n`.
pub fn ajne_hemisphere_mc(sample: &UnitSample, n_dirs: usize, seed: SeedSpec) -> Result<McEstimate> {
    if n_dirs < 1000 {
        return Err(Error::Domain(format!(
            "hemisphere integral needs at least 1000 directions, got {n_dirs}"
        )));
    }
    let n = sample.len() as f64;
    let mut rng = seed.rng();
    let mut y = vec![0.0; sample.dim()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_dirs {
        uniform_direction(&mut rng, &mut y);
        let count = sample.rows().filter(|x| dot(x, &y) > 0.0).count() as f64;
        let v = (count - n / 2.0).powi(2) / n;
        sum += v;
        sum_sq += v * v;
    }
    let m = n_dirs as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        draws: n_dirs,
    })
}
