//! Periodic 2D grid on the unit square and its unitary FFT.
//!
//! Grid points are stored row-major: flat index `j = j1 * side + j2` holds the
//! point `(j1 / side, j2 / side)`. Frequencies use the FFT-natural order of the
//! same flat layout; [`SpectralGrid::frequency`] maps a flat index to the
//! centered integer pair in `[-side/2, side/2)²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::{Error, Result, C64};

#[derive(Clone)]
pub struct SpectralGrid {
    cells_per_dim: usize,
    pts_per_cell: usize,
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("cells_per_dim", &self.cells_per_dim)
            .field("pts_per_cell", &self.pts_per_cell)
            .field("side", &self.side)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.cells_per_dim == other.cells_per_dim && self.pts_per_cell == other.pts_per_cell
    }
}

impl SpectralGrid {
    /// Grid of `cells × cells` unit cells with `pts_per_cell` points per cell
    /// edge, rescaled to the unit square.
    pub fn new(cells: usize, pts_per_cell: usize) -> Result<Self> {
        if cells == 0 || pts_per_cell == 0 {
            return Err(Error::InvalidGrid(format!(
                "cells ({cells}) and points per cell ({pts_per_cell}) must be positive"
            )));
        }
        let side = cells * pts_per_cell;
        if side % 2 != 0 {
            return Err(Error::InvalidGrid(format!("grid side {side} must be even")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            cells_per_dim: cells,
            pts_per_cell,
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        })
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    pub fn pts_per_cell(&self) -> usize {
        self.pts_per_cell
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Total number of grid points.
    pub fn n(&self) -> usize {
        self.side * self.side
    }

    /// Coordinates of grid point `j` on the unit square.
    pub fn point(&self, j: usize) -> (f64, f64) {
        let s = self.side as f64;
        ((j / self.side) as f64 / s, (j % self.side) as f64 / s)
    }

    /// Centered integer frequency of flat spectral index `idx`.
    pub fn frequency(&self, idx: usize) -> (i64, i64) {
        let c = |m: usize| {
            let m = m as i64;
            let s = self.side as i64;
            if m < s / 2 {
                m
            } else {
                m - s
            }
        };
        (c(idx / self.side), c(idx % self.side))
    }

    /// Flat spectral index of a centered frequency, or `None` outside the set.
    pub fn index_of(&self, k: (i64, i64)) -> Option<usize> {
        let s = self.side as i64;
        let inside = |v: i64| (-s / 2..s / 2).contains(&v);
        if !inside(k.0) || !inside(k.1) {
            return None;
        }
        let m = |v: i64| v.rem_euclid(s) as usize;
        Some(m(k.0) * self.side + m(k.1))
    }

    /// `|k|²` over the frequency set, in FFT-natural order.
    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.n())
            .map(|idx| {
                let (a, b) = self.frequency(idx);
                (a * a + b * b) as f64
            })
            .collect()
    }

    /// Kinetic symbol `2π²|k|²`, in FFT-natural order.
    pub fn kinetic_symbol(&self) -> Vec<f64> {
        self.k_squared().into_iter().map(|k2| 2.0 * PI * PI * k2).collect()
    }

    /// Unitary forward 2D DFT, in place.
    pub fn fft_forward(&self, data: &mut [C64]) {
        self.transform(data, &self.forward);
    }

    /// Unitary inverse 2D DFT, in place.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inverse);
    }

    /// Applies `F⁻¹ diag(symbol) F` to `data` in place.
    pub fn apply_symbol(&self, data: &mut [C64], symbol: impl Fn(usize) -> C64) {
        self.fft_forward(data);
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= symbol(idx);
        }
        self.fft_inverse(data);
    }

    /// Plane wave `e^{2πi k·x}` normalized to unit 2-norm.
    pub fn plane_wave(&self, k: (i64, i64)) -> Vec<C64> {
        let norm = 1.0 / (self.n() as f64).sqrt();
        (0..self.n())
            .map(|j| {
                let (x, y) = self.point(j);
                C64::from_polar(norm, 2.0 * PI * (k.0 as f64 * x + k.1 as f64 * y))
            })
            .collect()
    }

    fn transform(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let s = self.side;
        assert_eq!(data.len(), s * s, "buffer does not match grid");
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // rows are contiguous
        fft.process_with_scratch(data, &mut scratch);
        let mut col = vec![C64::new(0.0, 0.0); s];
        for c in 0..s {
            for (r, v) in col.iter_mut().enumerate() {
                *v = data[r * s + c];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for (r, v) in col.iter().enumerate() {
                data[r * s + c] = *v;
            }
        }
        let scale = 1.0 / s as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grid_sizes() {
        let g = SpectralGrid::new(3, 8).unwrap();
        assert_eq!((g.side(), g.n()), (24, 576));
        assert_eq!(SpectralGrid::new(1, 8).unwrap().n(), 64);
        assert_eq!(SpectralGrid::new(5, 8).unwrap().n(), 1600);
    }

    #[test]
    fn odd_side_rejected() {
        assert!(matches!(SpectralGrid::new(3, 3), Err(Error::InvalidGrid(_))));
        assert!(SpectralGrid::new(0, 8).is_err());
    }

    #[test]
    fn frequency_map_is_bijection() {
        let g = SpectralGrid::new(1, 8).unwrap();
        let mut seen = std::collections::HashSet::new();
        for idx in 0..g.n() {
            let k = g.frequency(idx);
            assert!((-4..4).contains(&k.0) && (-4..4).contains(&k.1));
            assert_eq!(g.index_of(k), Some(idx));
            assert!(seen.insert(k));
        }
        assert_eq!(seen.len(), 64);
        assert_eq!(g.index_of((4, 0)), None);
    }

    #[test]
    fn parseval_and_inverse() {
        let g = SpectralGrid::new(2, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<C64> = (0..g.n())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mut y = x.clone();
        g.fft_forward(&mut y);
        let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((nx - ny).abs() <= 1e-12 * nx);
        g.fft_inverse(&mut y);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn plane_wave_lands_on_its_frequency() {
        let g = SpectralGrid::new(1, 8).unwrap();
        let k = (-2, 3);
        let mut w = g.plane_wave(k);
        g.fft_forward(&mut w);
        let idx = g.index_of(k).unwrap();
        for (i, v) in w.iter().enumerate() {
            let expect = if i == idx { 1.0 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-12, "index {i}");
        }
    }
}
