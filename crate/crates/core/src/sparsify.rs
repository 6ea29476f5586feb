//! Sparsifying preconditioner for `(−½Δ + V − z) u = b`.
//!
//! Writing `G = (−½Δ + l − z)⁻¹` with `l` the mean potential, the equation
//! becomes `(I + G(V − l)) u = G b`. A local stencil `Q`, chosen so that each
//! row of `QG` is numerically supported on a small neighborhood, turns
//! `Q + QG(V − l)` into a sparse matrix `P` that is factorized directly.
//! `P⁻¹ Q G` then preconditions GMRES on the original operator.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::grid::SpectralGrid;
use crate::hamiltonian::HamiltonianOp;
use crate::potential::RealField;
use crate::{Error, Result, C64};

pub struct SparsifiedSystem {
    grid: SpectralGrid,
    /// Pole the system was requested for.
    z: C64,
    /// Constant in `G`, possibly nudged off a resonance.
    l: C64,
    half_width: usize,
    offsets: Vec<(i64, i64)>,
    q_stencil: Vec<C64>,
    c_stencil: Vec<C64>,
    epsilon: f64,
    /// `(2π²|k|² + l − z)⁻¹` in FFT-natural order.
    green_symbol: Vec<C64>,
    v_minus_l: Vec<C64>,
    p: SparseColMat<usize, C64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
}

impl std::fmt::Debug for SparsifiedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparsifiedSystem")
            .field("z", &self.z)
            .field("l", &self.l)
            .field("half_width", &self.half_width)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

fn wrap(grid: &SpectralGrid, p: (i64, i64)) -> usize {
    let s = grid.side() as i64;
    (p.0.rem_euclid(s) as usize) * grid.side() + p.1.rem_euclid(s) as usize
}

fn coords(grid: &SpectralGrid, j: usize) -> (i64, i64) {
    ((j / grid.side()) as i64, (j % grid.side()) as i64)
}

fn window_offsets(q: usize) -> Vec<(i64, i64)> {
    let q = q as i64;
    (-q..=q).flat_map(|a| (-q..=q).map(move |b| (a, b))).collect()
}

/// Green's kernel `g[i] = G(i, 0)`; translation invariance gives
/// `G(i, j) = g[i − j]`.
fn green_kernel(grid: &SpectralGrid, symbol: &[C64]) -> Vec<C64> {
    let mut k = vec![C64::new(0.0, 0.0); grid.n()];
    k[0] = C64::new(1.0, 0.0);
    grid.apply_symbol(&mut k, |i| symbol[i]);
    k
}

fn green_entry(grid: &SpectralGrid, kernel: &[C64], i: (i64, i64), j: (i64, i64)) -> C64 {
    kernel[wrap(grid, (i.0 - j.0, i.1 - j.1))]
}

/// Unit `q` minimizing `‖qᵀ G(a, aᶜ)‖₂` over the window `a` around `center`,
/// together with the attained minimum.
fn stencil_at(grid: &SpectralGrid, kernel: &[C64], center: usize, half_width: usize) -> Result<(Vec<C64>, f64)> {
    let c = coords(grid, center);
    let window: Vec<(i64, i64)> = window_offsets(half_width).into_iter().map(|(a, b)| (c.0 + a, c.1 + b)).collect();
    let inside: std::collections::HashSet<usize> = window.iter().map(|&p| wrap(grid, p)).collect();
    let outside: Vec<(i64, i64)> = (0..grid.n()).filter(|j| !inside.contains(j)).map(|j| coords(grid, j)).collect();
    // transposed block: rows over the complement, columns over the window
    let t = Mat::from_fn(outside.len(), window.len(), |r, a| green_entry(grid, kernel, window[a], outside[r]));
    let svd = t.thin_svd().map_err(|_| Error::EigenFailure)?;
    let m = window.len();
    let q: Vec<C64> = (0..m).map(|a| svd.V()[(a, m - 1)]).collect();
    let eps = svd.S().column_vector()[m - 1].re;
    Ok((q, eps))
}

impl SparsifiedSystem {
    /// Builds the system for `−½Δ + v_eff − z` with a `(2q+1)²` window.
    ///
    /// When the constant-coefficient symbol nearly vanishes, `G` is built with
    /// `z + iδ` and the difference is carried by the potential term.
    pub fn build(grid: &SpectralGrid, v_eff: &RealField, z: C64, half_width: usize, resonance_delta: f64) -> Result<Self> {
        let n = grid.n();
        if v_eff.len() != n {
            return Err(Error::DimensionMismatch { expected: format!("{n}"), found: format!("{}", v_eff.len()) });
        }
        if half_width == 0 || 2 * half_width + 1 > grid.side() {
            return Err(Error::InvalidParameter(format!("stencil half-width {half_width} does not fit the grid")));
        }
        let mut l = C64::new(v_eff.mean(), 0.0);
        let kin = grid.kinetic_symbol();
        let symbol_of = |l: C64| -> Vec<C64> { kin.iter().map(|&k| C64::new(k, 0.0) + l - z).collect() };
        let mut sym = symbol_of(l);
        let (lo, hi) = sym.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.norm()), hi.max(s.norm())));
        if lo < 1e-10 * hi {
            l -= C64::new(0.0, resonance_delta);
            sym = symbol_of(l);
        }
        let green_symbol: Vec<C64> = sym.iter().map(|s| s.inv()).collect();
        let kernel = green_kernel(grid, &green_symbol);

        let (q_stencil, epsilon) = stencil_at(grid, &kernel, 0, half_width)?;
        let offsets = window_offsets(half_width);
        let c_stencil: Vec<C64> = offsets
            .iter()
            .map(|&b| offsets.iter().zip(&q_stencil).map(|(&a, qa)| qa * green_entry(grid, &kernel, a, b)).sum())
            .collect();

        let v_minus_l: Vec<C64> = v_eff.values.iter().map(|&v| C64::new(v, 0.0) - l).collect();
        let mut triplets = Vec::with_capacity(n * offsets.len());
        for j in 0..n {
            let cj = coords(grid, j);
            for ((off, qb), cb) in offsets.iter().zip(&q_stencil).zip(&c_stencil) {
                let col = wrap(grid, (cj.0 + off.0, cj.1 + off.1));
                triplets.push(Triplet::new(j, col, qb + cb * v_minus_l[col]));
            }
        }
        let p = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::InvalidParameter(format!("sparse assembly: {e:?}")))?;
        let lu = p.sp_lu().map_err(|_| Error::Factorization { z, residual: epsilon })?;

        let sys = Self {
            grid: grid.clone(),
            z,
            l,
            half_width,
            offsets,
            q_stencil,
            c_stencil,
            epsilon,
            green_symbol,
            v_minus_l,
            p,
            lu,
        };
        // probe the factorization through its backward error on P·1
        let rhs = sys.apply_p(&vec![C64::new(1.0, 0.0); n]);
        let back = sys.apply_p(&sys.solve_p(&rhs));
        let num = back.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(num <= 1e-8 * den) {
            return Err(Error::Factorization { z, residual: epsilon });
        }
        Ok(sys)
    }

    /// Convenience constructor from the (shifted) Hamiltonian.
    pub fn for_operator(h: &HamiltonianOp, z: C64, half_width: usize, resonance_delta: f64) -> Result<Self> {
        Self::build(h.grid(), &h.effective_potential(), z, half_width, resonance_delta)
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn l(&self) -> C64 {
        self.l
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn q_stencil(&self) -> &[C64] {
        &self.q_stencil
    }

    pub fn c_stencil(&self) -> &[C64] {
        &self.c_stencil
    }

    /// `‖qᵀ G(a(0), a(0)ᶜ)‖₂`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn matrix(&self) -> &SparseColMat<usize, C64> {
        &self.p
    }

    /// `G b` by FFT.
    pub fn apply_green(&self, b: &[C64]) -> Vec<C64> {
        let mut out = b.to_vec();
        self.grid.apply_symbol(&mut out, |k| self.green_symbol[k]);
        out
    }

    /// `Q v` by stencil convolution.
    pub fn apply_q(&self, v: &[C64]) -> Vec<C64> {
        (0..self.grid.n())
            .map(|j| {
                let c = coords(&self.grid, j);
                self.offsets.iter().zip(&self.q_stencil).map(|(o, q)| q * v[wrap(&self.grid, (c.0 + o.0, c.1 + o.1))]).sum()
            })
            .collect()
    }

    /// `P v` from the stencils, without touching the assembled matrix.
    pub fn apply_p(&self, v: &[C64]) -> Vec<C64> {
        (0..self.grid.n())
            .map(|j| {
                let c = coords(&self.grid, j);
                self.offsets
                    .iter()
                    .zip(self.q_stencil.iter().zip(&self.c_stencil))
                    .map(|(o, (q, cs))| {
                        let col = wrap(&self.grid, (c.0 + o.0, c.1 + o.1));
                        (q + cs * self.v_minus_l[col]) * v[col]
                    })
                    .sum()
            })
            .collect()
    }

    pub fn solve_p(&self, rhs: &[C64]) -> Vec<C64> {
        let mut m = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }

    /// `P⁻¹ Q G b`.
    pub fn precond_apply(&self, b: &[C64]) -> Vec<C64> {
        self.solve_p(&self.apply_q(&self.apply_green(b)))
    }

    /// Rows `d1,d2,re_q,im_q,re_c,im_c,epsilon`.
    pub fn write_stencil_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "d1,d2,re_q,im_q,re_c,im_c,epsilon")?;
        for ((o, q), c) in self.offsets.iter().zip(&self.q_stencil).zip(&self.c_stencil) {
            writeln!(out, "{},{},{:e},{:e},{:e},{:e},{:e}", o.0, o.1, q.re, q.im, c.re, c.im, self.epsilon)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn stencil_at_point(sys: &SparsifiedSystem, center: usize) -> (Vec<C64>, f64) {
    let kernel = green_kernel(&sys.grid, &sys.green_symbol);
    stencil_at(&sys.grid, &kernel, center, sys.half_width).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{sample_potential, PotentialSpec, VacancyMode};
    use rand::{Rng, SeedableRng};

    fn rand_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect()
    }

    fn test3_field(grid: &SpectralGrid) -> RealField {
        let spec = PotentialSpec { global_scale: 100.0, vacancy_mode: VacancyMode::Fraction(0.25), rng_seed: 3, ..Default::default() };
        sample_potential(grid, &spec).unwrap()
    }

    #[test]
    fn exact_for_constant_potential() {
        let g = SpectralGrid::new(2, 8).unwrap();
        let v = RealField::constant(g.n(), -3.0);
        let z = C64::new(-5.0, 2.0);
        let s = SparsifiedSystem::build(&g, &v, z, 1, 1e-6).unwrap();
        let norm: f64 = s.q_stencil().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let b = rand_vec(g.n(), 1);
        let u = s.precond_apply(&b);
        let h = HamiltonianOp::new(g.clone(), v).unwrap();
        let mut r = vec![C64::new(0.0, 0.0); g.n()];
        h.apply_shifted_vec(&u, z, &mut r);
        let res = r.iter().zip(&b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let bn = b.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * bn, "{}", res / bn);
        assert!(s.precond_apply(&vec![C64::new(0.0, 0.0); g.n()]).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn rows_match_dense_construction() {
        let g = SpectralGrid::new(2, 8).unwrap();
        let v = test3_field(&g);
        let z = C64::new(-100.0, 300.0);
        let s = SparsifiedSystem::build(&g, &v, z, 1, 1e-6).unwrap();
        let n = g.n();
        // dense G from the densified constant-potential operator
        let hl = HamiltonianOp::new(g.clone(), RealField::constant(n, s.l().re)).unwrap();
        let mut a = hl.densify(4096).unwrap();
        for i in 0..n {
            a[(i, i)] -= z;
        }
        let gd = a.partial_piv_lu().solve(Mat::<C64>::identity(n, n));
        let qd = Mat::from_fn(n, n, |i, j| {
            let ci = coords(&g, i);
            s.offsets().iter().zip(s.q_stencil()).filter(|(o, _)| wrap(&g, (ci.0 + o.0, ci.1 + o.1)) == j).map(|(_, q)| *q).sum::<C64>()
        });
        let vl = Mat::from_fn(n, n, |i, j| if i == j { C64::new(v.values[i], 0.0) - s.l() } else { C64::new(0.0, 0.0) });
        let full = &qd + &qd * &gd * &vl;
        let p = s.matrix().to_dense();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let j = rng.random_range(0..n);
            let cj = coords(&g, j);
            for o in s.offsets() {
                let col = wrap(&g, (cj.0 + o.0, cj.1 + o.1));
                let scale = full[(j, col)].norm().max(1.0);
                assert!((full[(j, col)] - p[(j, col)]).norm() <= 1e-12 * scale, "row {j}");
            }
        }
    }

    #[test]
    fn wider_stencils_sparsify_better() {
        let g = SpectralGrid::new(2, 8).unwrap();
        let v = test3_field(&g);
        let z = C64::new(-2000.0, 500.0);
        let eps: Vec<f64> = (1..=3).map(|q| SparsifiedSystem::build(&g, &v, z, q, 1e-6).unwrap().epsilon()).collect();
        assert!(eps[1] <= eps[0] && eps[2] <= eps[1], "{eps:?}");
    }

    #[test]
    fn stencil_is_translation_invariant() {
        let g = SpectralGrid::new(2, 8).unwrap();
        let s = SparsifiedSystem::build(&g, &RealField::zeros(g.n()), C64::new(-10.0, 5.0), 1, 1e-6).unwrap();
        let (q2, e2) = stencil_at_point(&s, 5 * g.side() + 11);
        let overlap: C64 = s.q_stencil().iter().zip(&q2).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
        // remove the arbitrary phase before comparing entries
        let phase = overlap / overlap.norm();
        for (a, b) in s.q_stencil().iter().zip(&q2) {
            assert!((a * phase - b).norm() < 1e-12);
        }
        assert!((e2 - s.epsilon()).abs() <= 1e-12 * s.epsilon().max(1e-300));
    }

    #[test]
    fn resonance_is_perturbed() {
        let g = SpectralGrid::new(1, 8).unwrap();
        // z exactly on the symbol at k = (1, 0)
        let z = C64::new(2.0 * std::f64::consts::PI.powi(2), 0.0);
        let s = SparsifiedSystem::build(&g, &RealField::zeros(g.n()), z, 1, 0.5).unwrap();
        assert_eq!(s.l().im, -0.5);
    }

    #[test]
    fn csv_rows() {
        let g = SpectralGrid::new(1, 8).unwrap();
        let s = SparsifiedSystem::build(&g, &RealField::zeros(g.n()), C64::new(-1.0, 1.0), 1, 1e-6).unwrap();
        let mut buf = Vec::new();
        s.write_stencil_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }
}
