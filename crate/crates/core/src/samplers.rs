//! Seedable generators for the data models used throughout the crate.
//!
//! All randomness flows from a [`SeedSpec`]: a master seed plus a stream id.
//! Each pair maps to an independent ChaCha20 stream, so replicate `k` of a
//! Monte-Carlo run always sees the same draws no matter which worker runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, SpdMatrix};
use crate::sample::{normalize_in_place, DataMatrix, UnitSample};

/// Master seed plus replicate stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same master seed, different stream.
    pub fn stream(&self, stream_id: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    /// A new master seed for an independent family of streams, keyed by `tag`.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        SeedSpec {
            master_seed: splitmix64(
                self.master_seed ^ splitmix64(tag.wrapping_add(self.stream_id.rotate_left(32))),
            ),
            stream_id: 0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Law of the radial variable `r` in `y = mu + r * Omega^{1/2} w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialLaw {
    /// `r ~ sqrt(chi^2_p)`, which makes `y` Gaussian.
    ChiP,
    FixedOne,
    /// Multivariate Student t with `nu` degrees of freedom.
    StudentT { nu: f64 },
    /// Inverse CDF tabulated at equally spaced probabilities `0, 1/(k-1), ..., 1`,
    /// linearly interpolated.
    CustomInverseCdf { quantiles: Vec<f64> },
}

impl RadialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            RadialLaw::ChiP | RadialLaw::FixedOne => Ok(()),
            RadialLaw::StudentT { nu } => {
                if *nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidRadialLaw(format!(
                        "student t degrees of freedom must be positive, got {nu}"
                    )))
                }
            }
            RadialLaw::CustomInverseCdf { quantiles } => {
                if quantiles.len() < 2 {
                    return Err(Error::InvalidRadialLaw(
                        "inverse-CDF grid needs at least two knots".into(),
                    ));
                }
                if quantiles.iter().any(|q| !q.is_finite() || *q < 0.0) {
                    return Err(Error::InvalidRadialLaw(
                        "inverse-CDF knots must be finite and non-negative".into(),
                    ));
                }
                if quantiles.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidRadialLaw(
                        "inverse-CDF knots must be non-decreasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, p: usize) -> f64 {
        match self {
            RadialLaw::ChiP => chi_squared(rng, p as f64).sqrt(),
            RadialLaw::FixedOne => 1.0,
            RadialLaw::StudentT { nu } => {
                let num = chi_squared(rng, p as f64);
                let den = chi_squared(rng, *nu) / nu;
                (num / den).sqrt()
            }
            RadialLaw::CustomInverseCdf { quantiles } => {
                let u: f64 = rng.random();
                let pos = u * (quantiles.len() - 1) as f64;
                let k = (pos.floor() as usize).min(quantiles.len() - 2);
                let frac = pos - k as f64;
                quantiles[k] + frac * (quantiles[k + 1] - quantiles[k])
            }
        }
    }
}

fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("degrees of freedom validated positive")
        .sample(rng)
}

/// One uniform draw on the sphere via Gaussian normalization.
pub(crate) fn uniform_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if normalize_in_place(out).is_some() {
            return;
        }
    }
}

fn check_sphere_dims(p: usize, n: usize) -> Result<()> {
    if p < 2 || n < 1 {
        return Err(Error::InvalidDimensions(format!(
            "need p >= 2 and n >= 1, got p = {p}, n = {n}"
        )));
    }
    Ok(())
}

/// `n` i.i.d. uniform points on the unit sphere in `R^p`.
pub fn sample_uniform_sphere(p: usize, n: usize, seed: SeedSpec) -> Result<UnitSample> {
    check_sphere_dims(p, n)?;
    let mut rng = seed.rng();
    let mut values = vec![0.0; n * p];
    for row in values.chunks_exact_mut(p) {
        uniform_direction(&mut rng, row);
    }
    UnitSample::new(p, values)
}

/// `n` angular central Gaussian draws, `Omega^{1/2} w / ||Omega^{1/2} w||`.
pub fn sample_acg(omega: &SpdMatrix, n: usize, seed: SeedSpec) -> Result<UnitSample> {
    let w = sample_uniform_sphere(omega.dim(), n, seed)?;
    w.transform(&omega.sqrt())
}

/// Elliptical draws `y = mu + r * Omega^{1/2} w` as a raw data matrix.
pub fn sample_elliptical(
    mu: &[f64],
    omega: &SpdMatrix,
    radial: &RadialLaw,
    n: usize,
    seed: SeedSpec,
) -> Result<DataMatrix> {
    let p = omega.dim();
    if mu.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: mu.len(),
        });
    }
    check_sphere_dims(p, n)?;
    radial.validate()?;
    let root = omega.sqrt();
    let mut rng = seed.rng();
    let mut w = vec![0.0; p];
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        uniform_direction(&mut rng, &mut w);
        let r = radial.draw(&mut rng, p);
        let shaped = root.mul_vec(&w);
        values.extend(shaped.iter().zip(mu).map(|(s, m)| m + r * s));
    }
    DataMatrix::new(n, p, values)
}

/// Offset alternative: `w~ = (w + a) / ||w + a||` with
/// `a = offset_scale / sqrt(p) * (1, ..., 1)`, then shaped by `Omega` as in
/// [`sample_acg`].
pub fn sample_offset_alternative(
    p: usize,
    n: usize,
    offset_scale: f64,
    omega: &SpdMatrix,
    seed: SeedSpec,
) -> Result<UnitSample> {
    if omega.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: omega.dim(),
        });
    }
    if !(offset_scale >= 0.0) || !offset_scale.is_finite() {
        return Err(Error::Domain(format!(
            "offset scale must be finite and >= 0, got {offset_scale}"
        )));
    }
    check_sphere_dims(p, n)?;
    let a = offset_scale / (p as f64).sqrt();
    let mut rng = seed.rng();
    let mut values = vec![0.0; n * p];
    for row in values.chunks_exact_mut(p) {
        loop {
            uniform_direction(&mut rng, row);
            row.iter_mut().for_each(|v| *v += a);
            if normalize_in_place(row).is_some() {
                break;
            }
        }
    }
    UnitSample::new(p, values)?.transform(&omega.sqrt())
}

/// A random SPD matrix `Q diag(l) Q^T` with Haar-ish `Q` (Gram-Schmidt of a
/// Gaussian matrix) and eigenvalues log-uniform in `[1, cond]`, rescaled to
/// trace `p`.
pub fn random_spd(p: usize, cond: f64, seed: SeedSpec) -> Result<SpdMatrix> {
    if p == 0 || !(cond >= 1.0) {
        return Err(Error::Domain(format!(
            "random_spd needs p >= 1 and cond >= 1, got p = {p}, cond = {cond}"
        )));
    }
    let mut rng = seed.rng();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    while q.len() < p {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let d = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        if normalize_in_place(&mut v).is_some() {
            q.push(v);
        }
    }
    let lambdas: Vec<f64> = (0..p)
        .map(|_| cond.powf(rng.random::<f64>()))
        .collect();
    let mut m = vec![0.0; p * p];
    for (k, u) in q.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                m[i * p + j] += lambdas[k] * u[i] * u[j];
            }
        }
    }
    SpdMatrix::from_entries(p, m)?.with_trace(p as f64)
}
