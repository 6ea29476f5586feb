//! Dense reference computations: eigendecomposition, subspace distance,
//! condition-number bounds and the exact OMM Hessian.

use faer::{Mat, MatRef, Side};

use crate::operator::BlockOperator;
use crate::{Error, Result, WaveBlock, C64};

/// Spectrum of a Hermitian matrix together with its lowest `N` eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// All eigenvalues, nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of the `N` lowest eigenvalues.
    pub x0: WaveBlock,
    pub n_occ: usize,
    /// `(λ_N + λ_{N+1}) / 2`.
    pub mu: f64,
    /// `λ_{N+1} − λ_N`.
    pub gap: f64,
    /// `λ_n − λ_1`.
    pub spread: f64,
}

impl SpectralData {
    /// Assembles spectral data from a sorted spectrum and an occupied block.
    pub fn from_parts(eigenvalues: Vec<f64>, x0: WaveBlock) -> Result<Self> {
        let n_occ = x0.ncols();
        let n = eigenvalues.len();
        if n_occ == 0 || n_occ >= n {
            return Err(Error::InvalidParameter(format!("need 1 <= N < n, got N = {n_occ}, n = {n}")));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("eigenvalues must be sorted".into()));
        }
        let gap = eigenvalues[n_occ] - eigenvalues[n_occ - 1];
        let spread = eigenvalues[n - 1] - eigenvalues[0];
        if gap < 1e-12 * spread.max(1.0) {
            return Err(Error::DegenerateGap { gap, n_occ });
        }
        Ok(Self {
            mu: 0.5 * (eigenvalues[n_occ - 1] + eigenvalues[n_occ]),
            eigenvalues,
            x0,
            n_occ,
            gap,
            spread,
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// `λ_N`, the highest occupied eigenvalue.
    pub fn lambda_occ(&self) -> f64 {
        self.eigenvalues[self.n_occ - 1]
    }

    /// `λ_{N+1}`, the lowest unoccupied eigenvalue.
    pub fn lambda_unocc(&self) -> f64 {
        self.eigenvalues[self.n_occ]
    }

    /// Same data for `H − σI`.
    pub fn shifted(&self, sigma: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.iter().map(|l| l - sigma).collect(),
            x0: self.x0.clone(),
            n_occ: self.n_occ,
            mu: self.mu - sigma,
            gap: self.gap,
            spread: self.spread,
        }
    }
}

/// Full dense eigendecomposition, keeping the first `n_occ` eigenvectors.
///
/// Real symmetric input (all imaginary parts exactly zero) takes the real
/// path and yields real eigenvectors.
pub fn dense_eig(h: MatRef<'_, C64>, n_occ: usize) -> Result<SpectralData> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n}x{n}"), found: format!("{}x{}", n, h.ncols()) });
    }
    if n_occ == 0 || n_occ >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= N < n, got N = {n_occ}, n = {n}")));
    }
    let is_real = (0..n).all(|j| (0..n).all(|i| h[(i, j)].im == 0.0));
    let (eigenvalues, x0) = if is_real {
        let hr = Mat::<f64>::from_fn(n, n, |i, j| h[(i, j)].re);
        let evd = hr.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure)?;
        let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        let u = evd.U();
        (vals, WaveBlock::from_fn(n, n_occ, |i, j| C64::new(u[(i, j)], 0.0)))
    } else {
        let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure)?;
        let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
        let u = evd.U();
        (vals, WaveBlock::from_fn(n, n_occ, |i, j| u[(i, j)]))
    };
    SpectralData::from_parts(eigenvalues, x0)
}

/// Orthonormal basis of the column span of `x` via the Gram matrix.
fn orthonormal_basis(x: &WaveBlock) -> Result<Mat<C64>> {
    let gram = x.adjoint_times(x);
    let evd = gram.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure)?;
    let s = evd.S().column_vector();
    let m = gram.nrows();
    let smax = (0..m).map(|i| s[i].re).fold(0.0_f64, f64::max);
    if smax <= 0.0 || (0..m).any(|i| s[i].re <= 1e-14 * smax) {
        return Err(Error::SingularGram);
    }
    // G^{-1/2} = U S^{-1/2} U*
    let u = evd.U();
    let inv_sqrt = Mat::from_fn(m, m, |i, j| {
        (0..m).map(|k| u[(i, k)] * u[(j, k)].conj() / s[k].re.sqrt()).sum::<C64>()
    });
    Ok(x.as_mat() * &inv_sqrt)
}

/// Normalized entrywise ℓ∞ distance between the orthogonal projectors onto
/// the column spans of `x` and `x0`.
pub fn subspace_distance(x: &WaveBlock, x0: &WaveBlock) -> Result<f64> {
    x.check_rows(x0.nrows())?;
    let q = orthonormal_basis(x)?;
    let q0 = orthonormal_basis(x0)?;
    let n = x.nrows();
    let (mut num, mut den) = (0.0_f64, 0.0_f64);
    // row blocks keep the n×n projectors out of memory
    const ROWS: usize = 256;
    for r0 in (0..n).step_by(ROWS) {
        let rows = ROWS.min(n - r0);
        let p = q.subrows(r0, rows) * q.adjoint();
        let p0 = q0.subrows(r0, rows) * q0.adjoint();
        num = num.max((&p - &p0).norm_max());
        den = den.max(p0.norm_max());
    }
    Ok(num / den)
}

/// `(λ_n − λ_1) / (λ_{N+1} − λ_N)`.
pub fn omm_condition_bound(s: &SpectralData) -> f64 {
    s.spread / s.gap
}

/// Lower bound on the condition number of the OMM Hessian preconditioned by
/// `(H − μI)⁻¹`, for the three positions of `μ` below `λ_{N+1}`.
pub fn shifted_inverse_condition_bound(s: &SpectralData, mu_shift: f64) -> Result<f64> {
    let (l1, ln_occ, ln1, ln) = (s.lambda_min(), s.lambda_occ(), s.lambda_unocc(), s.lambda_max());
    if mu_shift >= ln1 {
        return Err(Error::IndefiniteHessian { mu: mu_shift, lambda_next: ln1 });
    }
    let mu = mu_shift;
    Ok(if mu > ln_occ {
        (ln1 - l1) / (ln - ln_occ) * (ln - mu) / (ln1 - mu)
    } else if mu > l1 {
        (ln1 - l1) / (ln1 - ln_occ)
    } else {
        (ln - l1) / (ln1 - ln_occ) * (ln1 - mu) / (ln - mu)
    })
}

/// Exact Hessian of the OMM energy at `x` applied to `z`:
/// `2HZ − Z(X*HX) − X(Z*HX) − X(X*HZ) − HZ(X*X) − HX(Z*X) − HX(X*Z)`.
pub fn hessian_apply<O: BlockOperator + ?Sized>(h: &O, x: &WaveBlock, z: &WaveBlock) -> Result<WaveBlock> {
    x.check_same_shape(z)?;
    let hx = h.apply_block(x)?;
    let hz = h.apply_block(z)?;
    let xhx = x.adjoint_times(&hx);
    let zhx = z.adjoint_times(&hx);
    let xhz = x.adjoint_times(&hz);
    let xx = x.adjoint_times(x);
    let zx = z.adjoint_times(x);
    let xz = x.adjoint_times(z);
    let mut out = hz.clone();
    out.scale(C64::new(2.0, 0.0));
    let minus = C64::new(-1.0, 0.0);
    out.axpy(minus, &z.times(xhx.as_ref()));
    out.axpy(minus, &x.times((&zhx + &xhz).as_ref()));
    out.axpy(minus, &hz.times(xx.as_ref()));
    out.axpy(minus, &hx.times((&zx + &xz).as_ref()));
    Ok(out)
}
