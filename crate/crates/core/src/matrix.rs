//! Dense symmetric positive-definite matrices.
//!
//! Every [`SpdMatrix`] carries its eigendecomposition, computed once at
//! construction by a cyclic Jacobi sweep. Square roots, inverse square roots
//! and inverses are spectral maps of that decomposition, so they never need a
//! second factorization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative Frobenius tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Positive-definiteness floor, scaled by `p * largest eigenvalue`.
pub const PD_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// A validated symmetric positive-definite `p x p` matrix.
///
/// Entries are stored row-major. Eigenvalues are sorted in descending order
/// and `eigenvectors` holds the matching orthonormal eigenvectors as columns
/// (also row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SpdRepr", try_from = "SpdRepr")]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpdRepr {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl From<SpdMatrix> for SpdRepr {
    fn from(m: SpdMatrix) -> Self {
        SpdRepr {
            dim: m.dim,
            rows: m.to_rows(),
        }
    }
}

impl TryFrom<SpdRepr> for SpdMatrix {
    type Error = Error;

    fn try_from(r: SpdRepr) -> Result<Self> {
        let m = SpdMatrix::from_rows(&r.rows)?;
        if m.dim != r.dim {
            return Err(Error::DimensionMismatch {
                expected: r.dim,
                found: m.dim,
            });
        }
        Ok(m)
    }
}

impl SpdMatrix {
    /// Validates a row-major `dim x dim` array and computes its eigendecomposition.
    ///
    /// The input is symmetrized as `(A + A^T) / 2` after the symmetry check so
    /// that round-off asymmetry below the tolerance does not leak into the
    /// factorization.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimensions("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }

        let norm = frobenius(&entries);
        let mut asym = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let d = entries[i * dim + j] - entries[j * dim + i];
                asym += 2.0 * d * d;
            }
        }
        let asym = asym.sqrt();
        if norm > 0.0 && asym > SYMMETRY_TOL * norm {
            return Err(Error::NotSymmetric(asym / norm));
        }

        let mut sym = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (sym[i * dim + j] + sym[j * dim + i]);
                sym[i * dim + j] = avg;
                sym[j * dim + i] = avg;
            }
        }

        let (eigenvalues, eigenvectors) = symmetric_eigen(&sym, dim);
        let max = eigenvalues[0];
        let min = eigenvalues[dim - 1];
        if !(max > 0.0) || min <= dim as f64 * PD_TOL * max {
            return Err(Error::NotPositiveDefinite { min, max });
        }

        Ok(SpdMatrix {
            dim,
            entries: sym,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Builds from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidDimensions(format!(
                    "expected a square matrix, found a row of length {} in a {}-row matrix",
                    row.len(),
                    dim
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        SpdMatrix {
            dim,
            eigenvalues: vec![1.0; dim],
            eigenvectors: entries.clone(),
            entries,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut entries = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            entries[i * dim + i] = *d;
        }
        Self::from_entries(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The `k`-th eigenvector (matching `eigenvalues()[k]`).
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.eigenvectors[i * self.dim + k])
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    /// Condition number `largest / smallest eigenvalue`.
    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[self.dim - 1]
    }

    /// `c * self` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositiveArgument(c));
        }
        Ok(SpdMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|v| v * c).collect(),
            eigenvalues: self.eigenvalues.iter().map(|v| v * c).collect(),
            eigenvectors: self.eigenvectors.clone(),
        })
    }

    /// Rescales so that the trace equals `target`.
    pub fn with_trace(&self, target: f64) -> Result<Self> {
        self.scaled(target / self.trace())
    }

    /// Symmetric square root `R` with `R R = self`.
    pub fn sqrt(&self) -> SpdMatrix {
        self.spectral_map(f64::sqrt)
    }

    /// Symmetric inverse square root `R` with `R R = self^{-1}`.
    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.spectral_map(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.spectral_map(|l| 1.0 / l)
    }

    /// `V f(L) V^T` for a positive map `f`, reusing the cached eigenvectors.
    fn spectral_map<F: Fn(f64) -> f64>(&self, f: F) -> SpdMatrix {
        let p = self.dim;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += self.eigenvectors[i * p + k] * mapped[k] * self.eigenvectors[j * p + k];
                }
                entries[i * p + j] = acc;
                entries[j * p + i] = acc;
            }
        }

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| mapped[b].total_cmp(&mapped[a]));
        let eigenvalues = order.iter().map(|&k| mapped[k]).collect();
        let mut eigenvectors = vec![0.0; p * p];
        for (new_k, &old_k) in order.iter().enumerate() {
            for i in 0..p {
                eigenvectors[i * p + new_k] = self.eigenvectors[i * p + old_k];
            }
        }
        SpdMatrix {
            dim: p,
            entries,
            eigenvalues,
            eigenvectors,
        }
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        self.entries
            .chunks(self.dim)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `x^T self x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let p = self.dim;
        let mut acc = 0.0;
        for i in 0..p {
            let row = &self.entries[i * p..(i + 1) * p];
            acc += x[i] * dot(row, x);
        }
        acc
    }

    /// Relative Frobenius error of `V L V^T` against the stored entries.
    pub fn reconstruction_error(&self) -> f64 {
        let p = self.dim;
        let mut err = 0.0;
        for i in 0..p {
            for j in 0..p {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += self.eigenvectors[i * p + k]
                        * self.eigenvalues[k]
                        * self.eigenvectors[j * p + k];
                }
                let d = acc - self.entries[i * p + j];
                err += d * d;
            }
        }
        err.sqrt() / self.frobenius_norm()
    }
}

/// Frobenius distance `||a - b||_F`.
pub fn frob_dist(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(a.entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn frobenius(entries: &[f64]) -> f64 {
    entries.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Row-major product of an `n x k` and a `k x m` matrix.
pub fn mat_mul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * k);
    assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    out
}

/// Cyclic Jacobi eigensolver for a symmetric row-major matrix.
///
/// Returns eigenvalues in descending order and the eigenvector matrix with
/// eigenvectors as columns.
pub(crate) fn symmetric_eigen(sym: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = sym.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let norm2: f64 = a.iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= 1e-32 * norm2 || off == 0.0 {
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]));
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + new_k] = v[i * n + old_k];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_frob(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        num.sqrt() / frobenius(b)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = SpdMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(m.eigenvalues(), &[1.0, 1.0, 1.0]);
        assert_eq!(m.inv_sqrt(), SpdMatrix::identity(3));
    }

    #[test]
    fn diagonal_eigenpairs() {
        let m = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        assert_eq!(m.eigenvalues(), &[4.0, 1.0]);
        assert_eq!(m.eigenvector(0), vec![1.0, 0.0]);
        assert_eq!(m.eigenvector(1), vec![0.0, 1.0]);
        let r = m.inv_sqrt();
        assert!((r.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((r.get(1, 1) - 1.0).abs() < 1e-15);
        assert_eq!(r.get(0, 1), 0.0);
    }

    #[test]
    fn two_by_two_eigensolve() {
        let m = SpdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((m.eigenvalues()[0] - 3.0).abs() < 1e-14);
        assert!((m.eigenvalues()[1] - 1.0).abs() < 1e-14);
        let v0 = m.eigenvector(0);
        assert!((v0[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((v0[0] - v0[1]).abs() < 1e-14);

        let r = m.inv_sqrt();
        assert!((r.eigenvalues()[0] - 1.0).abs() < 1e-14);
        assert!((r.eigenvalues()[1] - 3f64.powf(-0.5)).abs() < 1e-14);
        // shares eigenvectors with m: r * v0 = v0 / sqrt(3)
        let rv = r.mul_vec(&v0);
        assert!((rv[0] - v0[0] / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sqrt_trace_and_distance() {
        let m = SpdMatrix::from_diagonal(&[9.0, 4.0]).unwrap();
        let r = m.sqrt();
        assert!((r.get(0, 0) - 3.0).abs() < 1e-15);
        assert!((r.get(1, 1) - 2.0).abs() < 1e-15);
        assert_eq!(SpdMatrix::identity(5).trace(), 5.0);
        let i = SpdMatrix::identity(4);
        assert_eq!(frob_dist(&i, &i).unwrap(), 0.0);
        assert!(matches!(
            frob_dist(&i, &SpdMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(matches!(
            SpdMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]),
            Err(Error::NotSymmetric(_))
        ));
        assert!(matches!(
            SpdMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        // relative floor: tiny but positive eigenvalue is still rejected
        assert!(matches!(
            SpdMatrix::from_diagonal(&[1.0, 1e-13]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        // scale invariance of the floor
        assert!(SpdMatrix::from_diagonal(&[1e-20, 1e-21]).is_ok());
        assert!(matches!(
            SpdMatrix::from_rows(&[vec![1.0, 0.0]]),
            Err(Error::InvalidDimensions(_))
        ));
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let m = SpdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SpdMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"dim":2,"rows":[[1.0,2.0],[2.0,1.0]]}"#;
        assert!(serde_json::from_str::<SpdMatrix>(bad).is_err());
    }

    /// Random SPD matrix with eigenvalues spread over `[1, cond]`.
    fn random_spd(dim: usize, seed_vals: &[f64], cond: f64) -> Vec<f64> {
        // orthogonalize a pseudo-random matrix by Gram-Schmidt
        let mut q: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| seed_vals[(i * dim + j) % seed_vals.len()] + if i == j { 2.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        for i in 0..dim {
            for k in 0..i {
                let d = dot(&q[i], &q[k]);
                let qk = q[k].clone();
                for (a, b) in q[i].iter_mut().zip(&qk) {
                    *a -= d * b;
                }
            }
            let n = dot(&q[i], &q[i]).sqrt();
            q[i].iter_mut().for_each(|a| *a /= n);
        }
        let mut m = vec![0.0; dim * dim];
        for k in 0..dim {
            let lambda = if dim == 1 { 1.0 } else { cond.powf(k as f64 / (dim - 1) as f64) };
            for i in 0..dim {
                for j in 0..dim {
                    m[i * dim + j] += lambda * q[k][i] * q[k][j];
                }
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spectral_identities(
            dim in 1usize..9,
            vals in proptest::collection::vec(-1.0f64..1.0, 81),
            log_cond in 0.0f64..6.0,
        ) {
            let cond = 10f64.powf(log_cond);
            let m = SpdMatrix::from_entries(dim, random_spd(dim, &vals, cond)).unwrap();
            prop_assert!(m.reconstruction_error() < 1e-10);

            let r = m.inv_sqrt();
            let rmr = mat_mul(&mat_mul(r.entries(), m.entries(), dim, dim, dim), r.entries(), dim, dim, dim);
            let id = SpdMatrix::identity(dim);
            prop_assert!(rel_frob(&rmr, id.entries()) * (dim as f64).sqrt() < 1e-9);

            let s = m.sqrt();
            let ss = mat_mul(s.entries(), s.entries(), dim, dim, dim);
            prop_assert!(rel_frob(&ss, m.entries()) < 1e-10);

            let rr = mat_mul(r.entries(), r.entries(), dim, dim, dim);
            let inv = m.inverse();
            prop_assert!(rel_frob(&rr, inv.entries()) < 1e-10);
        }
    }
}
