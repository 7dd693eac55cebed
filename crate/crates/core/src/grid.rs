//! Periodic uniform lattices on the n-torus.

use crate::error::{Error, Result};

/// A uniform periodic grid on the torus `T^n = R^n / (L_1 Z x ... x L_n Z)`.
///
/// Points are indexed lexicographically with the last axis running fastest:
/// the flat index of `(j_1, ..., j_n)` is `((j_1 m_2 + j_2) m_3 + j_3) ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    lengths: Vec<f64>,
}

impl GridSpec {
    /// Build a grid with `dims[a]` points and period `lengths[a]` along axis `a`.
    ///
    /// Requires dimension >= 3, every point count even and >= 8, and positive
    /// periods; the total point count must fit in memory.
    pub fn new(dims: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::BadGrid(format!(
                "dimension must be >= 3, got {}",
                dims.len()
            )));
        }
        if dims.len() != lengths.len() {
            return Err(Error::BadGrid(format!(
                "{} point counts vs {} periods",
                dims.len(),
                lengths.len()
            )));
        }
        for (a, &m) in dims.iter().enumerate() {
            if m < 8 || m % 2 != 0 {
                return Err(Error::BadGrid(format!(
                    "axis {a}: point count {m} must be even and >= 8"
                )));
            }
        }
        for (a, &l) in lengths.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::BadGrid(format!("axis {a}: period {l} must be positive")));
            }
        }
        let mut total: usize = 1;
        for &m in &dims {
            total = total
                .checked_mul(m)
                .ok_or_else(|| Error::BadGrid("total point count overflows".into()))?;
        }
        if total.checked_mul(8).is_none() || total > (1 << 34) {
            return Err(Error::BadGrid(format!("total point count {total} too large")));
        }
        Ok(Self { dims, lengths })
    }

    /// Cube grid: `m` points and period `l` along each of `n` axes.
    pub fn cube(n: usize, m: usize, l: f64) -> Result<Self> {
        Self::new(vec![m; n], vec![l; n])
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Mesh width `h_a = L_a / m_a`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.dims[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.n()).map(|a| self.spacing(a)).collect()
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.n()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Product of all mesh widths; the cell volume of the uniform lattice.
    pub fn cell_volume(&self) -> f64 {
        (0..self.n()).map(|a| self.spacing(a)).product()
    }

    /// Critical Sobolev exponent `N = 2n/(n-2)` used by every conformal rescaling.
    pub fn critical_exponent(&self) -> f64 {
        let n = self.n() as f64;
        2.0 * n / (n - 2.0)
    }

    /// Flat-index stride of one step along `axis` (last axis fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[axis + 1..].iter().product()
    }

    /// Coordinates of the grid point with flat index `idx`.
    pub fn point(&self, mut idx: usize, out: &mut [f64]) {
        for a in (0..self.n()).rev() {
            let j = idx % self.dims[a];
            idx /= self.dims[a];
            out[a] = j as f64 * self.spacing(a);
        }
    }

    /// Number of independent components of a symmetric 2-tensor, `n(n+1)/2`.
    pub fn sym_len(&self) -> usize {
        self.n() * (self.n() + 1) / 2
    }
}

/// Storage slot of component `(i, j)` of a symmetric 2-tensor
/// (lower triangle, row-major).
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}
