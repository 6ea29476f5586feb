//! Lattice-of-Gaussian-wells test potentials.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::SpectralGrid;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VacancyMode {
    None,
    /// Exactly this many vacant cells.
    FixedCount(usize),
    /// `round(f · cells²)` vacant cells.
    Fraction(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    /// Gaussian amplitude `α` (the well is `-α exp(-r²/2σ²)`).
    pub well_depth: f64,
    /// Standard deviation in cell widths.
    pub well_width: f64,
    pub global_scale: f64,
    pub vacancy_mode: VacancyMode,
    pub rng_seed: u64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            well_depth: 40.0,
            well_width: 0.15,
            global_scale: 1.0,
            vacancy_mode: VacancyMode::None,
            rng_seed: 0,
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.well_depth > 0.0 && self.well_depth.is_finite()) {
            return Err(Error::InvalidParameter(format!("well depth {} must be positive", self.well_depth)));
        }
        if !(self.well_width > 0.0 && self.well_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("well width {} must be positive", self.well_width)));
        }
        if !self.global_scale.is_finite() {
            return Err(Error::InvalidParameter("global scale must be finite".into()));
        }
        if let VacancyMode::Fraction(f) = self.vacancy_mode {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!("vacancy fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Number of vacant cells on a `cells × cells` lattice.
    pub fn vacancy_count(&self, cells: usize) -> Result<usize> {
        let total = cells * cells;
        let m = match self.vacancy_mode {
            VacancyMode::None => 0,
            VacancyMode::FixedCount(m) => m,
            VacancyMode::Fraction(f) => (f * total as f64).round() as usize,
        };
        if m > total {
            return Err(Error::InvalidParameter(format!("{m} vacancies exceed {total} cells")));
        }
        Ok(m)
    }

    /// Flat indices (`c1 * cells + c2`) of the vacant cells, sorted.
    pub fn vacant_cells(&self, cells: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let m = self.vacancy_count(cells)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let mut picked = rand::seq::index::sample(&mut rng, cells * cells, m).into_vec();
        picked.sort_unstable();
        Ok(picked)
    }
}

/// A real function sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub values: Vec<f64>,
}

impl RealField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, v: f64) -> Self {
        Self { values: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `index,x,y,value` rows.
    pub fn write_csv<W: Write>(&self, grid: &SpectralGrid, mut out: W) -> Result<()> {
        writeln!(out, "index,x,y,value")?;
        for (j, v) in self.values.iter().enumerate() {
            let (x, y) = grid.point(j);
            writeln!(out, "{j},{x},{y},{v:e}")?;
        }
        Ok(())
    }
}

/// Samples `global_scale · ℓ² · V₀(ℓx)` on the grid, where `V₀` places one
/// Gaussian well at the center of every non-vacant cell.
pub fn sample_potential(grid: &SpectralGrid, spec: &PotentialSpec) -> Result<RealField> {
    let cells = grid.cells_per_dim();
    let vacant = spec.vacant_cells(cells)?;
    let mut occupied = vec![true; cells * cells];
    for c in vacant {
        occupied[c] = false;
    }
    let ell = cells as f64;
    let amp = spec.global_scale * ell * ell * spec.well_depth;
    let two_var = 2.0 * spec.well_width * spec.well_width;
    let values = (0..grid.n())
        .map(|j| {
            let (x, y) = grid.point(j);
            let (u, v) = (x * ell, y * ell);
            let (c1, c2) = ((u.floor() as usize).min(cells - 1), (v.floor() as usize).min(cells - 1));
            if !occupied[c1 * cells + c2] {
                return 0.0;
            }
            let du = u - c1 as f64 - 0.5;
            let dv = v - c2 as f64 - 0.5;
            -amp * (-(du * du + dv * dv) / two_var).exp()
        })
        .collect();
    Ok(RealField { values })
}
