//! Preconditioning by an approximate spectral projector
//! `Π B ≈ Σ_j w_j (H − z_j)⁻¹ B`, with every resolvent applied approximately.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::gmres::{gmres, GmresConfig, GmresPrecond, LinearMap};
use crate::hamiltonian::{HamiltonianOp, DEFAULT_DENSE_CAP};
use crate::omm::Preconditioner;
use crate::poles::PoleSet;
use crate::rrqr::rr_qr;
use crate::sparsify::SparsifiedSystem;
use crate::{Error, Result, WaveBlock, C64};

/// How each shifted system `(H − z_j) Y = B` is solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoleSolver {
    /// Dense LU of `H − z_j`; exact up to roundoff.
    Dense,
    Gmres {
        config: GmresConfig,
        /// Stencil half-width for the sparsifying preconditioner.
        half_width: usize,
        /// Imaginary nudge applied when `z_j` hits the constant-coefficient
        /// symbol.
        resonance_delta: f64,
    },
}

impl PoleSolver {
    pub fn gmres(config: GmresConfig) -> Self {
        PoleSolver::Gmres { config, half_width: 1, resonance_delta: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub enum ProjectionMode {
    /// Every application runs the per-pole solves.
    OnTheFly,
    /// Applies `U U*` with `U` from a randomized range finder.
    Precomputed(WaveBlock),
}

enum InnerPrecond {
    None,
    Const(Vec<C64>),
    Sparse(Box<SparsifiedSystem>),
}

enum Handle {
    Dense(PartialPivLu<C64>),
    Gmres(InnerPrecond),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub solves: usize,
    pub iterations: usize,
    pub unconverged: usize,
    pub worst_residual: f64,
}

pub struct ProjectionPrecond {
    h: HamiltonianOp,
    poles: PoleSet,
    upper: Vec<usize>,
    solver: PoleSolver,
    handles: Vec<Handle>,
    mode: ProjectionMode,
    setup_times: Vec<f64>,
    sketch_time: f64,
    solves: AtomicUsize,
    iterations: AtomicUsize,
    unconverged: AtomicUsize,
    worst: Mutex<f64>,
    name: String,
}

impl std::fmt::Debug for ProjectionPrecond {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectionPrecond")
            .field("poles", &self.poles.len())
            .field("solver", &self.solver)
            .field("mode", &matches!(self.mode, ProjectionMode::Precomputed(_)))
            .finish()
    }
}

fn const_symbol(h: &HamiltonianOp, z: C64, delta: f64) -> Vec<C64> {
    let l = h.effective_potential().mean();
    let mut sym: Vec<C64> = h.kinetic_symbol().iter().map(|&k| C64::new(k + l, 0.0) - z).collect();
    let (lo, hi) = sym.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.norm()), hi.max(s.norm())));
    if lo < 1e-10 * hi {
        for s in sym.iter_mut() {
            *s -= C64::new(0.0, delta);
        }
    }
    sym.into_iter().map(|s| s.inv()).collect()
}

impl ProjectionPrecond {
    /// Prepares one solver per pole in the upper half plane. `h` must be real
    /// symmetric (real potential), so the lower-half solves follow by
    /// conjugation.
    pub fn new(h: &HamiltonianOp, poles: PoleSet, solver: PoleSolver) -> Result<Self> {
        let upper = poles.upper_half();
        if upper.len() * 2 != poles.len() {
            return Err(Error::ContourGeometry("pole set is not closed under conjugation".into()));
        }
        let dense = match solver {
            PoleSolver::Dense => Some(h.densify(DEFAULT_DENSE_CAP)?),
            _ => None,
        };
        let built: Vec<(Handle, f64)> = upper
            .par_iter()
            .map(|&j| {
                let start = Instant::now();
                let z = poles.nodes[j];
                let handle = match (&solver, &dense) {
                    (PoleSolver::Dense, Some(d)) => {
                        let mut a = d.clone();
                        for i in 0..a.nrows() {
                            a[(i, i)] -= z;
                        }
                        Handle::Dense(a.partial_piv_lu())
                    }
                    (PoleSolver::Gmres { config, half_width, resonance_delta }, _) => Handle::Gmres(match config.preconditioning {
                        GmresPrecond::None => InnerPrecond::None,
                        GmresPrecond::ConstResolvent => InnerPrecond::Const(const_symbol(h, z, *resonance_delta)),
                        GmresPrecond::Sparsifying => InnerPrecond::Sparse(Box::new(SparsifiedSystem::for_operator(
                            h,
                            z,
                            *half_width,
                            *resonance_delta,
                        )?)),
                    }),
                    (PoleSolver::Dense, None) => unreachable!(),
                };
                Ok((handle, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;
        let (handles, setup_times) = built.into_iter().unzip();
        let name = match solver {
            PoleSolver::Gmres { config, .. } if config.preconditioning == GmresPrecond::Sparsifying => "spp",
            _ => "pp",
        };
        Ok(Self {
            h: h.clone(),
            poles,
            upper,
            solver,
            handles,
            mode: ProjectionMode::OnTheFly,
            setup_times,
            sketch_time: 0.0,
            solves: AtomicUsize::new(0),
            iterations: AtomicUsize::new(0),
            unconverged: AtomicUsize::new(0),
            worst: Mutex::new(0.0),
            name: name.to_string(),
        })
    }

    /// Switches to the precomputed `U U*` form using a Gaussian sketch of
    /// `n_occ + oversample` columns.
    pub fn into_precomputed(mut self, n_occ: usize, oversample: usize, seed: u64) -> Result<Self> {
        let start = Instant::now();
        let u = randomized_projection(&self, n_occ, oversample, seed)?;
        self.sketch_time = start.elapsed().as_secs_f64();
        self.mode = ProjectionMode::Precomputed(u);
        Ok(self)
    }

    pub fn poles(&self) -> &PoleSet {
        &self.poles
    }

    pub fn mode(&self) -> &ProjectionMode {
        &self.mode
    }

    pub fn solver(&self) -> PoleSolver {
        self.solver
    }

    pub fn setup_times(&self) -> &[f64] {
        &self.setup_times
    }

    /// Mean solver setup time over the poles that were actually prepared.
    pub fn setup_time_per_pole(&self) -> f64 {
        if self.setup_times.is_empty() {
            0.0
        } else {
            self.setup_times.iter().sum::<f64>() / self.setup_times.len() as f64
        }
    }

    /// Wall time of the randomized range finder, zero in on-the-fly mode.
    pub fn sketch_time(&self) -> f64 {
        self.sketch_time
    }

    pub fn stats(&self) -> SolveStats {
        SolveStats {
            solves: self.solves.load(Ordering::Relaxed),
            iterations: self.iterations.load(Ordering::Relaxed),
            unconverged: self.unconverged.load(Ordering::Relaxed),
            worst_residual: *self.worst.lock().unwrap(),
        }
    }

    /// The sparsified system at the `k`-th upper-half pole, when present.
    pub fn sparsified(&self, k: usize) -> Option<&SparsifiedSystem> {
        match self.handles.get(k) {
            Some(Handle::Gmres(InnerPrecond::Sparse(s))) => Some(s),
            _ => None,
        }
    }

    /// Approximately solves `(H − z_j) y = b` for the `k`-th upper-half pole.
    fn solve(&self, k: usize, b: &[C64]) -> Result<Vec<C64>> {
        let z = self.poles.nodes[self.upper[k]];
        match (&self.handles[k], self.solver) {
            (Handle::Dense(lu), _) => {
                let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
                let x = lu.solve(&rhs);
                Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
            }
            (Handle::Gmres(inner), PoleSolver::Gmres { config, .. }) => {
                let h = &self.h;
                let a = move |x: &[C64], out: &mut [C64]| h.apply_shifted_vec(x, z, out);
                let grid = h.grid();
                let m_const = |x: &[C64], out: &mut [C64]| {
                    out.copy_from_slice(x);
                    if let InnerPrecond::Const(sym) = inner {
                        grid.apply_symbol(out, |i| sym[i]);
                    }
                };
                let m_sparse = |x: &[C64], out: &mut [C64]| {
                    if let InnerPrecond::Sparse(s) = inner {
                        out.copy_from_slice(&s.precond_apply(x));
                    }
                };
                let m: Option<LinearMap> = match inner {
                    InnerPrecond::None => None,
                    InnerPrecond::Const(_) => Some(&m_const),
                    InnerPrecond::Sparse(_) => Some(&m_sparse),
                };
                let out = gmres(&a, m, b, b, &config).map_err(|e| match e {
                    Error::GmresBreakdown { reason, .. } => Error::GmresBreakdown { pole: Some(self.upper[k]), reason },
                    other => other,
                })?;
                self.solves.fetch_add(1, Ordering::Relaxed);
                self.iterations.fetch_add(out.iterations, Ordering::Relaxed);
                if !out.converged {
                    self.unconverged.fetch_add(1, Ordering::Relaxed);
                }
                let mut w = self.worst.lock().unwrap();
                *w = w.max(out.rel_residual);
                Ok(out.x)
            }
            _ => unreachable!(),
        }
    }

    /// `Σ_j w_j (H − z_j)⁻¹ B` for a real `B`, as `2 Re` of the upper-half sum.
    fn apply_real(&self, b: &WaveBlock) -> Result<WaveBlock> {
        let (n, m) = (b.nrows(), b.ncols());
        let tasks: Vec<(usize, usize)> = (0..self.upper.len()).flat_map(|k| (0..m).map(move |c| (k, c))).collect();
        let parts: Vec<Vec<C64>> = tasks.par_iter().map(|&(k, c)| self.solve(k, b.col(c))).collect::<Result<_>>()?;
        let mut out = WaveBlock::zeros(n, m);
        // fixed summation order regardless of scheduling
        for (&(k, c), y) in tasks.iter().zip(&parts) {
            let w = self.poles.weights[self.upper[k]];
            for (o, v) in out.col_mut(c).iter_mut().zip(y) {
                *o += C64::new(2.0 * (w * v).re, 0.0);
            }
        }
        Ok(out)
    }

    /// On-the-fly application of the pole expansion, whatever the mode.
    pub fn apply_pp(&self, b: &WaveBlock) -> Result<WaveBlock> {
        b.check_rows(self.h.n())?;
        let re = self.apply_real(&b.real_part())?;
        if b.max_imag() == 0.0 {
            return Ok(re);
        }
        let im = self.apply_real(&b.imag_part())?;
        let mut out = re;
        out.axpy(C64::i(), &im);
        Ok(out)
    }
}

impl Preconditioner for ProjectionPrecond {
    fn apply(&self, block: &WaveBlock) -> Result<WaveBlock> {
        match &self.mode {
            ProjectionMode::OnTheFly => self.apply_pp(block),
            ProjectionMode::Precomputed(u) => {
                block.check_rows(u.nrows())?;
                let c = u.adjoint_times(block);
                Ok(u.times(c.as_ref()))
            }
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Orthonormal basis for the range of the pole expansion applied to a
/// Gaussian sketch, truncated to `n_occ` columns after pivoted QR.
pub fn randomized_projection(pp: &ProjectionPrecond, n_occ: usize, oversample: usize, seed: u64) -> Result<WaveBlock> {
    let n = pp.h.n();
    let m = n_occ + oversample;
    if n_occ == 0 || m > n {
        return Err(Error::InvalidParameter(format!("sketch width {m} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = WaveBlock::from_fn(n, m, |_, _| C64::new(StandardNormal.sample(&mut rng), 0.0));
    let y = pp.apply_pp(&b)?;
    let f = rr_qr(&y.into_mat())?;
    let ratio = f.diag_ratio(n_occ - 1);
    if !(ratio >= 1e-12) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(WaveBlock::from_mat(f.q.subcols(0, n_occ).to_owned()))
}
