//! Blocks of trial orbitals.

use faer::{Mat, MatRef};

use crate::{Error, Result, C64};

/// An `n × N` complex matrix whose columns are trial orbitals on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveBlock(Mat<C64>);

impl WaveBlock {
    pub fn zeros(n: usize, ncols: usize) -> Self {
        Self(Mat::zeros(n, ncols))
    }

    pub fn from_mat(m: Mat<C64>) -> Self {
        Self(m)
    }

    pub fn from_fn(n: usize, ncols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(Mat::from_fn(n, ncols, f))
    }

    /// Builds a block from column vectors, all of the same length.
    pub fn from_columns(cols: &[Vec<C64>]) -> Result<Self> {
        let n = cols.first().map_or(0, Vec::len);
        if let Some(bad) = cols.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} rows"),
                found: format!("{} rows", bad.len()),
            });
        }
        Ok(Self(Mat::from_fn(n, cols.len(), |i, j| cols[j][i])))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, C64> {
        self.0.as_ref()
    }

    pub fn mat_mut(&mut self) -> &mut Mat<C64> {
        &mut self.0
    }

    pub fn into_mat(self) -> Mat<C64> {
        self.0
    }

    pub fn col(&self, j: usize) -> &[C64] {
        self.0.col_as_slice(j)
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        self.0.col_as_slice_mut(j)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm_l2()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.0.norm_max()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.ncols()).all(|j| self.col(j).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest imaginary-part magnitude.
    pub fn max_imag(&self) -> f64 {
        (0..self.ncols())
            .flat_map(|j| self.col(j).iter())
            .fold(0.0_f64, |m, z| m.max(z.im.abs()))
    }

    /// Real trace inner product `Re tr(self* other)`.
    pub fn inner(&self, other: &WaveBlock) -> f64 {
        debug_assert_eq!(self.nrows(), other.nrows());
        debug_assert_eq!(self.ncols(), other.ncols());
        (0..self.ncols())
            .map(|j| {
                self.col(j)
                    .iter()
                    .zip(other.col(j))
                    .map(|(a, b)| a.re * b.re + a.im * b.im)
                    .sum::<f64>()
            })
            .sum()
    }

    /// `self + alpha * other`, in place.
    pub fn axpy(&mut self, alpha: C64, other: &WaveBlock) {
        for j in 0..self.ncols() {
            let src = other.col(j);
            for (a, b) in self.col_mut(j).iter_mut().zip(src) {
                *a += alpha * b;
            }
        }
    }

    pub fn scale(&mut self, alpha: C64) {
        for j in 0..self.ncols() {
            for a in self.col_mut(j) {
                *a *= alpha;
            }
        }
    }

    /// Gram-type product `self* other` (`N × M`).
    pub fn adjoint_times(&self, other: &WaveBlock) -> Mat<C64> {
        self.0.adjoint() * &other.0
    }

    /// `self · m` for a small coefficient matrix `m`.
    pub fn times(&self, m: MatRef<'_, C64>) -> WaveBlock {
        WaveBlock(&self.0 * m)
    }

    /// Keeps the real part of every entry.
    pub fn real_part(&self) -> WaveBlock {
        WaveBlock(Mat::from_fn(self.nrows(), self.ncols(), |i, j| C64::new(self.0[(i, j)].re, 0.0)))
    }

    /// Imaginary part, returned as a real-valued block.
    pub fn imag_part(&self) -> WaveBlock {
        WaveBlock(Mat::from_fn(self.nrows(), self.ncols(), |i, j| C64::new(self.0[(i, j)].im, 0.0)))
    }

    pub(crate) fn check_rows(&self, n: usize) -> Result<()> {
        if self.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} rows"),
                found: format!("{} rows", self.nrows()),
            });
        }
        Ok(())
    }

    pub(crate) fn check_same_shape(&self, other: &WaveBlock) -> Result<()> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.nrows(), self.ncols()),
                found: format!("{}x{}", other.nrows(), other.ncols()),
            });
        }
        Ok(())
    }
}

impl std::ops::Add<&WaveBlock> for &WaveBlock {
    type Output = WaveBlock;
    fn add(self, rhs: &WaveBlock) -> WaveBlock {
        WaveBlock(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub<&WaveBlock> for &WaveBlock {
    type Output = WaveBlock;
    fn sub(self, rhs: &WaveBlock) -> WaveBlock {
        WaveBlock(&self.0 - &rhs.0)
    }
}

impl std::ops::Neg for WaveBlock {
    type Output = WaveBlock;
    fn neg(self) -> WaveBlock {
        WaveBlock(-self.0)
    }
}

/// `Re tr(A)` of a square matrix.
pub(crate) fn re_trace(m: MatRef<'_, C64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// `Re tr(A B)` without forming the product.
pub(crate) fn re_trace_prod(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}
