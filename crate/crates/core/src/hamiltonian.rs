//! The pseudospectral Hamiltonian `-Δ/2 + V - σ` and constant-coefficient
//! resolvents, both applied through the FFT.

use faer::Mat;

use crate::grid::SpectralGrid;
use crate::potential::RealField;
use crate::{Error, Result, WaveBlock, C64};

/// Default largest `n` for which dense matrices are formed.
pub const DEFAULT_DENSE_CAP: usize = 16384;

#[derive(Clone, Debug)]
pub struct HamiltonianOp {
    grid: SpectralGrid,
    potential: RealField,
    shift: f64,
    kinetic_symbol: Vec<f64>,
}

impl HamiltonianOp {
    pub fn new(grid: SpectralGrid, potential: RealField) -> Result<Self> {
        if potential.len() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} potential values", grid.n()),
                found: format!("{}", potential.len()),
            });
        }
        if potential.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("potential has non-finite entries".into()));
        }
        let kinetic_symbol = grid.kinetic_symbol();
        Ok(Self { grid, potential, shift: 0.0, kinetic_symbol })
    }

    /// Same operator with diagonal shift `σ` (applies `H - σI`).
    pub fn with_shift(mut self, sigma: f64) -> Self {
        self.shift = sigma;
        self
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn potential(&self) -> &RealField {
        &self.potential
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.kinetic_symbol
    }

    /// Diagonal of the operator in real space excluding the kinetic part,
    /// i.e. `V - σ`.
    pub fn effective_potential(&self) -> RealField {
        RealField { values: self.potential.values.iter().map(|v| v - self.shift).collect() }
    }

    /// `out = (H - σ - z) x` for a single vector.
    pub fn apply_shifted_vec(&self, x: &[C64], z: C64, out: &mut [C64]) {
        out.copy_from_slice(x);
        let sym = &self.kinetic_symbol;
        self.grid.apply_symbol(out, |idx| C64::new(sym[idx], 0.0));
        for ((o, xi), v) in out.iter_mut().zip(x).zip(&self.potential.values) {
            *o += xi * (v - self.shift) - z * xi;
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        self.apply_shifted_vec(x, C64::new(0.0, 0.0), &mut out);
        out
    }

    /// Column-wise `H X`.
    pub fn apply(&self, x: &WaveBlock) -> Result<WaveBlock> {
        x.check_rows(self.n())?;
        let mut out = WaveBlock::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            self.apply_shifted_vec(x.col(j), C64::new(0.0, 0.0), out.col_mut(j));
        }
        Ok(out)
    }

    /// The full `n × n` matrix. The kinetic part is circulant in each
    /// direction, so one FFT gives every column by translation.
    pub fn densify(&self, cap: usize) -> Result<Mat<C64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::DenseCapExceeded { n, cap });
        }
        let s = self.grid.side();
        let mut kernel = vec![C64::new(0.0, 0.0); n];
        kernel[0] = C64::new(1.0, 0.0);
        let sym = &self.kinetic_symbol;
        self.grid.apply_symbol(&mut kernel, |idx| C64::new(sym[idx], 0.0));
        Ok(Mat::from_fn(n, n, |a, b| {
            let d1 = (a / s + s - b / s) % s;
            let d2 = (a % s + s - b % s) % s;
            let mut v = kernel[d1 * s + d2];
            if a == b {
                v += self.potential.values[a] - self.shift;
            }
            v
        }))
    }
}

/// `(−Δ/2 + l − z)⁻¹ b` by diagonal division in frequency space.
pub fn apply_const_resolvent(grid: &SpectralGrid, l: C64, z: C64, b: &[C64]) -> Result<Vec<C64>> {
    if b.len() != grid.n() {
        return Err(Error::DimensionMismatch { expected: format!("{}", grid.n()), found: format!("{}", b.len()) });
    }
    let symbol = const_resolvent_symbol(grid, l, z)?;
    let mut out = b.to_vec();
    grid.apply_symbol(&mut out, |idx| symbol[idx]);
    Ok(out)
}

/// The diagonal `1 / (2π²|k|² + l − z)` in FFT-natural order, rejecting
/// near-resonant shifts.
pub fn const_resolvent_symbol(grid: &SpectralGrid, l: C64, z: C64) -> Result<Vec<C64>> {
    let raw: Vec<C64> = grid.kinetic_symbol().into_iter().map(|k| k + l - z).collect();
    let (min, max) = raw.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v.norm()), hi.max(v.norm())));
    if min < 1e-10 * max {
        return Err(Error::NearResonance { min, max });
    }
    Ok(raw.into_iter().map(|v| v.inv()).collect())
}
