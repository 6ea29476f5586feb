//! Kinetic-energy preconditioners, diagonal in frequency space.

use rayon::prelude::*;

use crate::grid::SpectralGrid;
use crate::omm::Preconditioner;
use crate::{Error, Result, WaveBlock, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    /// `(1 + |k|²/τ)⁻¹`.
    ShiftedLaplacian,
    Tpa,
    /// Generalized TPA of order `t`.
    Gtpa(usize),
}

/// `c_k = (2/3)^k` for `k ≤ t` and `c_{t+1} = 2 c_t`.
pub fn gtpa_coefficients(t: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..=t).map(|k| (2.0f64 / 3.0).powi(k as i32)).collect();
    c.push(2.0 * c[t]);
    c
}

/// `p_t(s) / (p_t(s) + c_{t+1} s^{t+1})` for arbitrary coefficients `c_0..=c_{t+1}`.
pub fn rational_filter(coeffs: &[f64], s: f64) -> f64 {
    let t = coeffs.len() - 2;
    if s == 0.0 {
        return 1.0;
    }
    // evaluate the reciprocal 1 + c_{t+1} s^{t+1} / p_t(s) in a scaled form
    // to stay finite for very large s
    if s > 1.0 {
        let u = 1.0 / s;
        // p_t(s) / s^{t+1} = Σ c_k u^{t+1-k}
        let num = coeffs[..=t].iter().enumerate().map(|(k, c)| c * u.powi((t + 1 - k) as i32)).sum::<f64>();
        num / (num + coeffs[t + 1])
    } else {
        let p = coeffs[..=t].iter().rev().fold(0.0, |acc, c| acc * s + c);
        p / (p + coeffs[t + 1] * s.powi(t as i32 + 1))
    }
}

pub fn tpa_symbol(s: f64) -> f64 {
    rational_filter(&[27.0, 18.0, 12.0, 8.0, 16.0], s)
}

pub fn gtpa_symbol(t: usize, s: f64) -> f64 {
    rational_filter(&gtpa_coefficients(t), s)
}

pub fn shifted_laplacian_symbol(s: f64) -> f64 {
    1.0 / (1.0 + s)
}

/// `τ = max_j Σ_k ½|k|² |x̂_j(k)|²` with integer `|k|²`; the block is given in
/// real space and transformed here.
pub fn compute_tau(grid: &SpectralGrid, x0: &WaveBlock) -> Result<f64> {
    x0.check_rows(grid.n())?;
    if x0.ncols() == 0 || x0.max_abs() == 0.0 {
        return Err(Error::ZeroBlock);
    }
    let k2 = grid.k_squared();
    let tau = (0..x0.ncols())
        .map(|j| {
            let mut col = x0.col(j).to_vec();
            grid.fft_forward(&mut col);
            col.iter().zip(&k2).map(|(v, k)| 0.5 * k * v.norm_sqr()).sum::<f64>()
        })
        .fold(0.0, f64::max);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("kinetic scale τ = {tau}")));
    }
    Ok(tau)
}

#[derive(Clone, Debug)]
pub struct KineticFilter {
    grid: SpectralGrid,
    kind: FilterKind,
    tau: f64,
    symbol: Vec<f64>,
    name: String,
}

impl KineticFilter {
    pub fn new(grid: &SpectralGrid, kind: FilterKind, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("τ = {tau} must be positive")));
        }
        let g: Box<dyn Fn(f64) -> f64> = match kind {
            FilterKind::ShiftedLaplacian => Box::new(shifted_laplacian_symbol),
            FilterKind::Tpa => Box::new(tpa_symbol),
            FilterKind::Gtpa(t) => {
                let c = gtpa_coefficients(t);
                Box::new(move |s| rational_filter(&c, s))
            }
        };
        let symbol = grid.k_squared().into_iter().map(|k2| g(k2 / tau)).collect();
        let name = match kind {
            FilterKind::ShiftedLaplacian => "lap".to_string(),
            FilterKind::Tpa => "tpa".to_string(),
            FilterKind::Gtpa(t) => format!("gtpa({t})"),
        };
        Ok(Self { grid: grid.clone(), kind, tau, symbol, name })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Filter values in FFT-natural frequency order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply_filter(&self, x: &WaveBlock) -> Result<WaveBlock> {
        x.check_rows(self.grid.n())?;
        let cols: Vec<Vec<C64>> = (0..x.ncols())
            .into_par_iter()
            .map(|j| {
                let mut c = x.col(j).to_vec();
                self.grid.apply_symbol(&mut c, |k| C64::new(self.symbol[k], 0.0));
                c
            })
            .collect();
        let mut out = WaveBlock::zeros(x.nrows(), x.ncols());
        for (j, c) in cols.into_iter().enumerate() {
            out.col_mut(j).copy_from_slice(&c);
        }
        Ok(out)
    }
}

impl Preconditioner for KineticFilter {
    fn apply(&self, block: &WaveBlock) -> Result<WaveBlock> {
        self.apply_filter(block)
    }

    fn name(&self) -> &str {
        &self.name
    }
}
