//! Point clouds: raw observations and samples on the unit sphere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, SpdMatrix};

/// Row norms of a [`UnitSample`] must be within this of 1.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// An `n x p` array of raw observations, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimensions(format!(
                "data must have at least one row and one column, got {rows} x {cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(DataMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::InvalidDimensions(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    /// Subtracts the column means.
    pub fn centered(&self) -> DataMatrix {
        let mut mean = vec![0.0; self.cols];
        for r in self.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.rows as f64);
        let values = self
            .rows()
            .flat_map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
            .collect();
        DataMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }
}

/// `n` unit vectors in `R^p` (`p >= 2`, `n >= 1`), stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSample {
    dim: usize,
    count: usize,
    vectors: Vec<f64>,
}

impl UnitSample {
    /// Wraps rows that are already unit vectors; fails if any norm is off by
    /// more than [`UNIT_NORM_TOL`].
    pub fn new(dim: usize, vectors: Vec<f64>) -> Result<Self> {
        check_dims(dim, vectors.len())?;
        for (i, r) in vectors.chunks_exact(dim).enumerate() {
            let norm = dot(r, r).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Domain(format!(
                    "row {i} has norm {norm}, expected a unit vector"
                )));
            }
        }
        Ok(UnitSample {
            dim,
            count: vectors.len() / dim,
            vectors,
        })
    }

    /// Projects every row onto the sphere, `x = y / ||y||`. Zero rows are an error.
    pub fn from_raw(dim: usize, mut values: Vec<f64>) -> Result<Self> {
        check_dims(dim, values.len())?;
        for (i, r) in values.chunks_exact_mut(dim).enumerate() {
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
            normalize_in_place(r).ok_or(Error::ZeroRow(i))?;
        }
        Ok(UnitSample {
            dim,
            count: values.len() / dim,
            vectors: values,
        })
    }

    pub fn from_data(data: &DataMatrix) -> Result<Self> {
        Self::from_raw(data.ncols(), data.values().to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDimensions("rows of unequal length".into()));
        }
        Self::from_raw(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.dim)
    }

    /// Applies `m` to every row and re-normalizes: `m x_i / ||m x_i||`.
    pub fn transform(&self, m: &SpdMatrix) -> Result<UnitSample> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        let mut out = Vec::with_capacity(self.vectors.len());
        for r in self.rows() {
            out.extend(m.mul_vec(r));
        }
        UnitSample::from_raw(self.dim, out)
    }

    /// Sample second-moment matrix `S = (1/n) sum x_i x_i^T`, row-major.
    pub fn second_moment(&self) -> Vec<f64> {
        let p = self.dim;
        let mut s = vec![0.0; p * p];
        for r in self.rows() {
            for i in 0..p {
                let ri = r[i];
                for j in i..p {
                    s[i * p + j] += ri * r[j];
                }
            }
        }
        let n = self.count as f64;
        for i in 0..p {
            for j in i..p {
                let v = s[i * p + j] / n;
                s[i * p + j] = v;
                s[j * p + i] = v;
            }
        }
        s
    }

    /// `Tr(S^2)` of the sample second-moment matrix.
    pub fn trace_s2(&self) -> f64 {
        self.second_moment().iter().map(|v| v * v).sum()
    }

    /// Row sum scaled as `sqrt(p / n) * sum_i x_i`.
    pub fn scaled_row_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for r in self.rows() {
            for (s, v) in sum.iter_mut().zip(r) {
                *s += v;
            }
        }
        let scale = (self.dim as f64 / self.count as f64).sqrt();
        sum.iter_mut().for_each(|s| *s *= scale);
        sum
    }

    /// Reorders rows by `perm` (`out[i] = self[perm[i]]`).
    pub fn permuted(&self, perm: &[usize]) -> UnitSample {
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for &k in perm {
            vectors.extend_from_slice(self.row(k));
        }
        UnitSample {
            dim: self.dim,
            count: self.count,
            vectors,
        }
    }
}

fn check_dims(dim: usize, len: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimensions(format!(
            "sphere samples need p >= 2, got p = {dim}"
        )));
    }
    if len == 0 || len % dim != 0 {
        return Err(Error::InvalidDimensions(format!(
            "{len} values do not form a non-empty sample of {dim}-vectors"
        )));
    }
    Ok(())
}

/// Normalizes to unit length; `None` for the zero vector.
pub(crate) fn normalize_in_place(v: &mut [f64]) -> Option<()> {
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}
