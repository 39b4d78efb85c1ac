//! Tyler's scatter estimator and the whitening it induces.
//!
//! The estimator is the trace-normalized solution of
//!
//! ```text
//! T = (p/n) * sum_i x_i x_i^T / (x_i^T T^{-1} x_i)
//! ```
//!
//! found by fixed-point iteration from `T_0 = I`, rescaling to `Tr T = p`
//! after every step. Rows are visited in a canonical (lexicographic) order so
//! the estimate is bit-for-bit invariant under row permutations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius, symmetric_eigen, SpdMatrix};
use crate::sample::{DataMatrix, UnitSample};

/// Eigenvalues of the trace-normalized iterate below `DEGENERACY_FLOOR * p`
/// mean the sample concentrates on a subspace.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TylerConfig {
    pub max_iters: usize,
    /// Relative Frobenius change between successive normalized iterates.
    pub tol: f64,
    /// Trace of the returned estimate; `None` means `p`.
    pub trace_target: Option<f64>,
}

impl Default for TylerConfig {
    fn default() -> Self {
        TylerConfig {
            max_iters: 500,
            tol: 1e-11,
            trace_target: None,
        }
    }
}

impl TylerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let Some(t) = self.trace_target {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "trace target must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TylerResult {
    pub estimate: SpdMatrix,
    pub iterations: usize,
    /// `||T - (p/n) sum x x^T / (x^T T^{-1} x)||_F / ||T||_F` at the returned estimate.
    pub final_residual: f64,
    /// Rows `T^{-1/2} x_i / ||T^{-1/2} x_i||`, in the input order.
    pub whitened: UnitSample,
}

/// Fits Tyler's estimator to a sample of unit vectors.
pub fn tyler_fit(sample: &UnitSample, cfg: &TylerConfig) -> Result<TylerResult> {
    cfg.validate()?;
    let p = sample.dim();
    let n = sample.len();
    if n <= p {
        return Err(Error::NotEnoughSamples { n, p });
    }
    let target = cfg.trace_target.unwrap_or(p as f64);
    let order = canonical_order(sample);
    check_spans_space(sample)?;

    let mut t = SpdMatrix::identity(p);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let m = fixed_point_map(sample, &order, &t)?;
        let residual = rel_diff(t.entries(), &m, t.frobenius_norm());
        let converged = change < cfg.tol && residual <= 10.0 * cfg.tol;
        if converged || iterations == cfg.max_iters {
            if !converged && residual > 10.0 * cfg.tol {
                return Err(Error::NoConvergence {
                    iterations,
                    residual,
                });
            }
            let estimate = if (t.trace() - target).abs() > 0.0 {
                t.with_trace(target)?
            } else {
                t
            };
            let whitened = whiten(sample, &estimate)?;
            return Ok(TylerResult {
                estimate,
                iterations,
                final_residual: residual,
                whitened,
            });
        }

        let next = normalize_trace(p, m, p as f64)?;
        change = rel_diff(next.entries(), t.entries(), t.frobenius_norm());
        t = next;
        iterations += 1;
    }
}

/// Convenience path for raw observations: rows are projected onto the sphere
/// first. Zero rows are rejected.
pub fn tyler_fit_raw(data: &DataMatrix, cfg: &TylerConfig) -> Result<TylerResult> {
    tyler_fit(&UnitSample::from_data(data)?, cfg)
}

/// `scatter^{-1/2} x_i`, re-normalized.
pub fn whiten(sample: &UnitSample, scatter: &SpdMatrix) -> Result<UnitSample> {
    sample.transform(&scatter.inv_sqrt())
}

/// Relative Frobenius residual of the fixed-point equation at `estimate`.
/// Scale-free: any positive multiple of a solution has residual zero.
pub fn tyler_residual(sample: &UnitSample, estimate: &SpdMatrix) -> Result<f64> {
    if estimate.dim() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: estimate.dim(),
        });
    }
    let order: Vec<usize> = (0..sample.len()).collect();
    let m = fixed_point_map(sample, &order, estimate)?;
    Ok(rel_diff(estimate.entries(), &m, estimate.frobenius_norm()))
}

/// `(p/n) sum_i x_i x_i^T / (x_i^T T^{-1} x_i)`, summed in `order`.
fn fixed_point_map(sample: &UnitSample, order: &[usize], t: &SpdMatrix) -> Result<Vec<f64>> {
    let p = sample.dim();
    let inv = t.inverse();
    let mut acc = vec![0.0; p * p];
    for &k in order {
        let x = sample.row(k);
        let d = inv.quad_form(x);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::DegenerateSample(format!(
                "row {k} has non-positive Mahalanobis norm {d}"
            )));
        }
        let w = 1.0 / d;
        for i in 0..p {
            let wxi = w * x[i];
            for j in i..p {
                acc[i * p + j] += wxi * x[j];
            }
        }
    }
    let scale = p as f64 / sample.len() as f64;
    for i in 0..p {
        for j in i..p {
            let v = acc[i * p + j] * scale;
            acc[i * p + j] = v;
            acc[j * p + i] = v;
        }
    }
    Ok(acc)
}

fn normalize_trace(p: usize, mut m: Vec<f64>, target: f64) -> Result<SpdMatrix> {
    let tr: f64 = (0..p).map(|i| m[i * p + i]).sum();
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::DegenerateSample(format!("iterate has trace {tr}")));
    }
    let c = target / tr;
    m.iter_mut().for_each(|v| *v *= c);
    let next = SpdMatrix::from_entries(p, m).map_err(|e| match e {
        Error::NotPositiveDefinite { min, max } => Error::DegenerateSample(format!(
            "iterate lost positive-definiteness (eigenvalues {min:.3e}..{max:.3e})"
        )),
        other => other,
    })?;
    let min = next.eigenvalues()[p - 1];
    if min < DEGENERACY_FLOOR * target {
        return Err(Error::DegenerateSample(format!(
            "smallest eigenvalue of the iterate collapsed to {min:.3e}"
        )));
    }
    Ok(next)
}

fn check_spans_space(sample: &UnitSample) -> Result<()> {
    let p = sample.dim();
    let (vals, _) = symmetric_eigen(&sample.second_moment(), p);
    let max = vals[0];
    let min = vals[p - 1];
    if !(min > DEGENERACY_FLOOR * p as f64 * max) {
        return Err(Error::DegenerateSample(format!(
            "sample does not span R^{p} (second-moment eigenvalues {min:.3e}..{max:.3e})"
        )));
    }
    Ok(())
}

fn canonical_order(sample: &UnitSample) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by(|&a, &b| {
        sample
            .row(a)
            .iter()
            .zip(sample.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn rel_diff(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    frobenius(&diff) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{sample_acg, sample_uniform_sphere, SeedSpec};

    #[test]
    fn repeated_basis_is_an_exact_fixed_point() {
        for p in 2..6 {
            let mut rows = Vec::new();
            for _ in 0..2 {
                for k in 0..p {
                    let mut e = vec![0.0; p];
                    e[k] = 1.0;
                    rows.push(e);
                }
            }
            let s = UnitSample::from_rows(&rows).unwrap();
            let fit = tyler_fit(&s, &TylerConfig::default()).unwrap();
            assert_eq!(fit.estimate, SpdMatrix::identity(p));
            assert_eq!(fit.final_residual, 0.0);
            assert_eq!(fit.whitened, s);
        }
    }

    #[test]
    fn error_paths() {
        let s = sample_uniform_sphere(3, 3, SeedSpec::new(1, 0)).unwrap();
        assert!(matches!(
            tyler_fit(&s, &TylerConfig::default()),
            Err(Error::NotEnoughSamples { n: 3, p: 3 })
        ));

        // all rows in the x-y plane of R^3
        let planar: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.3;
                vec![a.cos(), a.sin(), 0.0]
            })
            .collect();
        let s = UnitSample::from_rows(&planar).unwrap();
        assert!(matches!(
            tyler_fit(&s, &TylerConfig::default()),
            Err(Error::DegenerateSample(_))
        ));

        let s = sample_uniform_sphere(4, 40, SeedSpec::new(2, 0)).unwrap();
        let cfg = TylerConfig {
            max_iters: 2,
            ..TylerConfig::default()
        };
        assert!(matches!(tyler_fit(&s, &cfg), Err(Error::NoConvergence { .. })));

        let bad = TylerConfig {
            tol: 0.0,
            ..TylerConfig::default()
        };
        assert!(matches!(tyler_fit(&s, &bad), Err(Error::InvalidConfig(_))));

        let zero = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            tyler_fit_raw(&zero, &TylerConfig::default()),
            Err(Error::ZeroRow(1))
        ));
    }

    #[test]
    fn converged_fit_satisfies_invariants() {
        let omega = SpdMatrix::from_rows(&[
            vec![3.0, 1.0, 0.5],
            vec![1.0, 2.0, 0.2],
            vec![0.5, 0.2, 1.0],
        ])
        .unwrap();
        let s = sample_acg(&omega, 300, SeedSpec::new(5, 0)).unwrap();
        let cfg = TylerConfig::default();
        let fit = tyler_fit(&s, &cfg).unwrap();
        assert!((fit.estimate.trace() - 3.0).abs() < 1e-10);
        assert!(fit.final_residual <= 10.0 * cfg.tol);
        let independent = tyler_residual(&s, &fit.estimate).unwrap();
        assert!((independent - fit.final_residual).abs() < 1e-12);
        let cov = fit.whitened.second_moment();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((cov[i * 3 + j] - target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn permutation_gives_bit_identical_estimate() {
        let s = sample_uniform_sphere(5, 60, SeedSpec::new(8, 0)).unwrap();
        let perm: Vec<usize> = (0..60).map(|i| (i * 37 + 11) % 60).collect();
        let a = tyler_fit(&s, &TylerConfig::default()).unwrap();
        let b = tyler_fit(&s.permuted(&perm), &TylerConfig::default()).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(b.whitened, a.whitened.permuted(&perm));
    }

    #[test]
    fn custom_trace_target() {
        let s = sample_uniform_sphere(3, 30, SeedSpec::new(9, 0)).unwrap();
        let cfg = TylerConfig {
            trace_target: Some(1.0),
            ..TylerConfig::default()
        };
        let fit = tyler_fit(&s, &cfg).unwrap();
        assert!((fit.estimate.trace() - 1.0).abs() < 1e-12);
        let default = tyler_fit(&s, &TylerConfig::default()).unwrap();
        for (a, b) in fit.whitened.as_slice().iter().zip(default.whitened.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
