//! Problem assembly and the (ℓ, method, seed) experiment grid.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ExperimentConfig, Method, TestId};
use super::report::{emit_report, write_trace, Status, TableRow, TracePoint};
use crate::gmres::GmresPrecond;
use crate::grid::SpectralGrid;
use crate::hamiltonian::{HamiltonianOp, DEFAULT_DENSE_CAP};
use crate::kinetic::{compute_tau, FilterKind, KineticFilter};
use crate::omm::{negative_definite_shift, pcg_minimize, IdentityPrecond, OmmReport, Preconditioner};
use crate::oracle::{dense_eig, omm_condition_bound, subspace_distance, SpectralData};
use crate::poles::{build_best_poles, PoleSet, SpectralWindow};
use crate::potential::sample_potential;
use crate::projection::{PoleSolver, ProjectionPrecond, SolveStats};
use crate::rrqr::rr_qr;
use crate::{Error, Result, WaveBlock, C64};

/// Samples per spectral interval when certifying a pole set.
pub const INDICATOR_SAMPLES: usize = 2000;

/// A shifted, negative definite Hamiltonian with its dense reference data.
#[derive(Clone, Debug)]
pub struct Problem {
    pub test: TestId,
    pub ell: usize,
    pub grid: SpectralGrid,
    /// `H − σI`.
    pub h: HamiltonianOp,
    pub sigma: f64,
    /// Spectrum of `H − σI`; `x0` is a real orthonormal basis of the
    /// occupied space.
    pub spectral: SpectralData,
    pub cond: f64,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn window(&self) -> Result<SpectralWindow> {
        SpectralWindow::from_spectrum(&self.spectral)
    }
}

/// Real orthonormal basis of the span of `x` when that span is closed under
/// conjugation, as it is for an isolated eigenspace of a real symmetric
/// matrix.
pub fn real_basis(x: &WaveBlock) -> Result<WaveBlock> {
    let (n, k) = (x.nrows(), x.ncols());
    if 2 * k > n {
        return Ok(x.clone());
    }
    let (re, im) = (x.real_part(), x.imag_part());
    let both = faer::Mat::<C64>::from_fn(n, 2 * k, |i, j| if j < k { re.as_mat()[(i, j)] } else { im.as_mat()[(i, j - k)] });
    let f = rr_qr(&both)?;
    let q = f.q.subcols(0, k);
    Ok(WaveBlock::from_fn(n, k, |i, j| C64::new(q[(i, j)].re, 0.0)))
}

/// Builds the `i`-th lattice size of `cfg`.
pub fn build_problem(cfg: &ExperimentConfig, i: usize) -> Result<Problem> {
    let ell = cfg.ells[i];
    let grid = SpectralGrid::new(ell, cfg.pts_per_cell)?;
    let v = sample_potential(&grid, &cfg.potential_spec())?;
    let h0 = HamiltonianOp::new(grid.clone(), v)?;
    let dense = h0.densify(DEFAULT_DENSE_CAP)?;
    let s = dense_eig(dense.as_ref(), cfg.n_occ(i)?)?;
    let sigma = negative_definite_shift(&s, cfg.shift_margin);
    let mut spectral = s.shifted(sigma);
    spectral.x0 = real_basis(&spectral.x0)?;
    Ok(Problem { test: cfg.test, ell, grid, h: h0.with_shift(sigma), sigma, cond: omm_condition_bound(&s), spectral })
}

/// `X0 + E` with i.i.d. real Gaussian `E` of variance `noise · max|X0|²`.
pub fn make_initial_guess(s: &SpectralData, noise: f64, seed: u64) -> WaveBlock {
    let x0 = &s.x0;
    if noise == 0.0 {
        return x0.clone();
    }
    let m = x0.max_abs();
    let dist = Normal::new(0.0, noise.sqrt() * m).expect("finite noise");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.clone();
    for j in 0..x.ncols() {
        for v in x.col_mut(j) {
            *v += C64::new(dist.sample(&mut rng), 0.0);
        }
    }
    x
}

/// FNV-1a over the cell coordinates, so every cell has its own stream.
pub fn cell_seed(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0x1f)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn poles_for(problem: &Problem, p: usize) -> Result<(PoleSet, f64)> {
    build_best_poles(&problem.window()?, p, INDICATOR_SAMPLES)
}

pub enum BuiltPrecond {
    Identity(IdentityPrecond),
    Kinetic(KineticFilter),
    Projection(Box<ProjectionPrecond>),
}

impl BuiltPrecond {
    pub fn as_dyn(&self) -> &dyn Preconditioner {
        match self {
            BuiltPrecond::Identity(p) => p,
            BuiltPrecond::Kinetic(p) => p,
            BuiltPrecond::Projection(p) => p.as_ref(),
        }
    }
}

/// A preconditioner with its setup timings.
pub struct Setup {
    pub precond: BuiltPrecond,
    /// Setup time as reported in the table: per pole for PP/SPP, including
    /// an equal share of the sketch.
    pub t_st: f64,
    pub setup_per_pole: f64,
    pub sketch_time: f64,
    pub indicator_error: Option<f64>,
}

pub fn build_preconditioner(method: Method, problem: &Problem, cfg: &ExperimentConfig, seed: u64) -> Result<Setup> {
    let start = Instant::now();
    let kinetic = |kind| -> Result<BuiltPrecond> {
        let tau = compute_tau(&problem.grid, &problem.spectral.x0)?;
        Ok(BuiltPrecond::Kinetic(KineticFilter::new(&problem.grid, kind, tau)?))
    };
    let precond = match method {
        Method::None => BuiltPrecond::Identity(IdentityPrecond),
        Method::Lap => kinetic(FilterKind::ShiftedLaplacian)?,
        Method::Tpa => kinetic(FilterKind::Tpa)?,
        Method::Gtpa(t) => kinetic(FilterKind::Gtpa(t))?,
        Method::Pp | Method::Spp => {
            let (poles, err) = poles_for(problem, cfg.pole_count)?;
            let mut gmres = cfg.gmres;
            if method == Method::Spp {
                gmres.preconditioning = GmresPrecond::Sparsifying;
            }
            let solver = PoleSolver::Gmres {
                config: gmres,
                half_width: cfg.half_width,
                resonance_delta: 1e-6 * problem.spectral.spread,
            };
            let mut pp = ProjectionPrecond::new(&problem.h, poles, solver)?;
            if cfg.precomputed {
                pp = pp.into_precomputed(problem.spectral.n_occ, cfg.oversample, seed)?;
            }
            let upper = (pp.poles().len() / 2) as f64;
            let (per_pole, sketch) = (pp.setup_time_per_pole(), pp.sketch_time());
            return Ok(Setup {
                precond: BuiltPrecond::Projection(Box::new(pp)),
                t_st: per_pole + sketch / upper,
                setup_per_pole: per_pole,
                sketch_time: sketch,
                indicator_error: Some(err),
            });
        }
    };
    let t = start.elapsed().as_secs_f64();
    Ok(Setup { precond, t_st: t, setup_per_pole: 0.0, sketch_time: 0.0, indicator_error: None })
}

/// Outcome of one (ℓ, method, seed) cell.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub ell: usize,
    pub n: usize,
    pub method: Method,
    pub seed: u64,
    pub cond: f64,
    pub t_st: f64,
    pub t_omm: f64,
    pub setup_per_pole: f64,
    pub sketch_time: f64,
    pub indicator_error: Option<f64>,
    pub solve_stats: Option<SolveStats>,
    /// `None` when the cell failed before or during the minimization.
    pub report: Option<OmmReport>,
    pub d: f64,
    pub status: Status,
}

impl RunRecord {
    pub fn iterations(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.iterations)
    }
}

fn try_run(problem: &Problem, method: Method, seed: u64, cfg: &ExperimentConfig, rec: &mut RunRecord) -> Result<()> {
    let tag = problem.test.to_string();
    let ell = problem.ell.to_string();
    let noise_seed = cell_seed(&[&tag, &ell, "guess", &seed.to_string()]);
    let sketch_seed = cell_seed(&[&tag, &ell, &method.to_string(), &seed.to_string()]);
    let setup = build_preconditioner(method, problem, cfg, sketch_seed)?;
    rec.t_st = setup.t_st;
    rec.setup_per_pole = setup.setup_per_pole;
    rec.sketch_time = setup.sketch_time;
    rec.indicator_error = setup.indicator_error;
    let p = setup.precond.as_dyn();

    let start = Instant::now();
    let mut x1 = make_initial_guess(&problem.spectral, cfg.noise, noise_seed);
    if method.is_projection() {
        x1 = p.apply(&x1)?;
    }
    let mut report = pcg_minimize(&problem.h, p, x1, &cfg.omm)?;
    rec.t_omm = start.elapsed().as_secs_f64();
    report.wall_times.setup = rec.t_st;
    report.wall_times.omm = rec.t_omm;
    report.wall_times.total = rec.t_st + rec.t_omm;
    let d = subspace_distance(&report.final_x, &problem.spectral.x0)?;
    report.d = Some(d);
    if let BuiltPrecond::Projection(pp) = &setup.precond {
        rec.solve_stats = Some(pp.stats());
    }
    rec.d = d;
    rec.status = Status::classify(report.converged, d);
    rec.report = Some(report);
    Ok(())
}

/// Runs one cell; failures are recorded in the status rather than returned.
pub fn run_cell(problem: &Problem, method: Method, seed: u64, cfg: &ExperimentConfig) -> RunRecord {
    let mut rec = RunRecord {
        ell: problem.ell,
        n: problem.n(),
        method,
        seed,
        cond: problem.cond,
        t_st: 0.0,
        t_omm: 0.0,
        setup_per_pole: 0.0,
        sketch_time: 0.0,
        indicator_error: None,
        solve_stats: None,
        report: None,
        d: f64::NAN,
        status: Status::Unconverged,
    };
    if let Err(e) = try_run(problem, method, seed, cfg, &mut rec) {
        rec.status = Status::Error(e.to_string());
        rec.report = None;
    }
    rec
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median over the repeats of one (ℓ, method) pair.
pub fn aggregate(runs: &[RunRecord]) -> Result<TableRow> {
    let first = runs.first().ok_or_else(|| Error::Report("no runs to aggregate".into()))?;
    let done: Vec<&RunRecord> = runs.iter().filter(|r| r.report.is_some()).collect();
    let med = |f: &dyn Fn(&RunRecord) -> f64| median(&done.iter().map(|r| f(r)).collect::<Vec<_>>());
    let (t_st, t_omm) = (med(&|r| r.t_st), med(&|r| r.t_omm));
    let d = med(&|r| r.d);
    let status = if let Some(err) = runs.iter().find_map(|r| match &r.status {
        Status::Error(m) => Some(m.clone()),
        _ => None,
    }) {
        Status::Error(err)
    } else if done.iter().any(|r| !r.report.as_ref().unwrap().converged) {
        Status::Unconverged
    } else {
        Status::classify(true, d)
    };
    Ok(TableRow {
        method: first.method.to_string(),
        ell: first.ell,
        n: first.n,
        cond: first.cond,
        iter: med(&|r| r.iterations().unwrap() as f64),
        t_st,
        t_omm,
        t_tot: t_st + t_omm,
        d,
        status,
    })
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub rows: Vec<TableRow>,
    pub runs: Vec<RunRecord>,
}

impl Experiment {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.status.succeeded())
    }

    pub fn trace_points(&self) -> Vec<TracePoint> {
        self.runs
            .iter()
            .filter_map(|r| r.report.as_ref().map(|rep| (r, rep)))
            .flat_map(|(r, rep)| {
                rep.energy_trace.iter().enumerate().map(move |(i, &e)| TracePoint {
                    method: r.method.to_string(),
                    ell: r.ell,
                    seed: r.seed,
                    iter: i,
                    energy: e,
                })
            })
            .collect()
    }
}

/// Every (ℓ, method, seed) cell in order, aggregated into one row per
/// (ℓ, method). A lattice size whose problem cannot be built yields error
/// rows for all of its methods.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let seeds = cfg.effective_seeds();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for i in 0..cfg.ells.len() {
        let problem = build_problem(cfg, i);
        for &method in &cfg.methods {
            let cell_runs: Vec<RunRecord> = match &problem {
                Ok(p) => seeds.iter().map(|&s| run_cell(p, method, s, cfg)).collect(),
                Err(e) => {
                    let ell = cfg.ells[i];
                    rows.push(TableRow {
                        method: method.to_string(),
                        ell,
                        n: (ell * cfg.pts_per_cell).pow(2),
                        cond: f64::NAN,
                        iter: f64::NAN,
                        t_st: f64::NAN,
                        t_omm: f64::NAN,
                        t_tot: f64::NAN,
                        d: f64::NAN,
                        status: Status::Error(e.to_string()),
                    });
                    continue;
                }
            };
            rows.push(aggregate(&cell_runs)?);
            runs.extend(cell_runs);
        }
    }
    let exp = Experiment { rows, runs };
    if let Some(path) = &cfg.output_path {
        emit_report(&exp.rows, path)?;
    }
    if let Some(path) = &cfg.trace_path {
        let f = std::fs::File::create(path)?;
        write_trace(&exp.trace_points(), std::io::BufWriter::new(f))?;
    }
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::NRule;

    // weak wells need odd ℓ for a nondegenerate gap at N = ℓ²
    fn small(test: TestId, methods: Vec<Method>) -> ExperimentConfig {
        let ell = if test == TestId::Test1 { 3 } else { 2 };
        ExperimentConfig {
            pts_per_cell: if test == TestId::Test1 { 4 } else { 6 },
            methods,
            repeats: 2,
            ..ExperimentConfig::for_test(test, vec![ell])
        }
    }

    #[test]
    fn zero_noise_returns_ground_truth() {
        let p = build_problem(&small(TestId::Test1, vec![Method::Tpa]), 0).unwrap();
        let x = make_initial_guess(&p.spectral, 0.0, 4);
        assert_eq!((&x - &p.spectral.x0).max_abs(), 0.0);
    }

    #[test]
    fn guess_is_reproducible() {
        let p = build_problem(&small(TestId::Test1, vec![Method::Tpa]), 0).unwrap();
        let a = make_initial_guess(&p.spectral, 0.1, 9);
        let b = make_initial_guess(&p.spectral, 0.1, 9);
        assert!(a.as_mat() == b.as_mat());
        let c = make_initial_guess(&p.spectral, 0.1, 10);
        assert!((&a - &c).max_abs() > 0.0);
    }

    #[test]
    fn noise_energy_matches_variance() {
        let p = build_problem(&small(TestId::Test1, vec![Method::Tpa]), 0).unwrap();
        let s = &p.spectral;
        let m = s.x0.max_abs();
        let expect = 0.1 * m * m * (s.x0.nrows() * s.x0.ncols()) as f64;
        let mean = (0..100u64).map(|k| (&make_initial_guess(s, 0.1, k) - &s.x0).norm().powi(2)).sum::<f64>() / 100.0;
        assert!((mean - expect).abs() <= 0.05 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn real_basis_spans_the_same_space() {
        let p = build_problem(&small(TestId::Test2, vec![Method::Tpa]), 0).unwrap();
        let x = &p.spectral.x0;
        assert_eq!(x.max_imag(), 0.0);
        let gram = x.adjoint_times(x);
        for i in 0..x.ncols() {
            for j in 0..x.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).norm() < 1e-12);
            }
        }
        let hx = p.h.apply(x).unwrap();
        let lam = x.adjoint_times(&hx);
        let resid = &hx - &x.times(lam.as_ref());
        assert!(resid.max_abs() <= 1e-8 * hx.max_abs());
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(&["test1", "3", "pp", "0"]);
        assert_ne!(a, cell_seed(&["test1", "3", "pp", "1"]));
        assert_ne!(a, cell_seed(&["test1", "3p", "p", "0"]));
        assert_eq!(a, cell_seed(&["test1", "3", "pp", "0"]));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn experiment_rows_in_order() {
        let cfg = small(TestId::Test1, vec![Method::None, Method::Tpa, Method::Pp]);
        let exp = run_experiment(&cfg).unwrap();
        let names: Vec<&str> = exp.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["none", "tpa", "pp"]);
        assert_eq!(exp.runs.len(), 6);
        for r in &exp.rows {
            assert!(r.status.succeeded(), "{r:?}");
            assert_eq!(r.n, 144);
            assert_eq!(r.ell, 3);
            assert!((r.t_tot - r.t_st - r.t_omm).abs() <= 1e-12 * r.t_tot.max(1.0));
        }
        // the projection preconditioner needs far fewer iterations
        assert!(exp.rows[2].iter <= exp.rows[0].iter);
        assert!(exp.rows[2].iter <= exp.rows[1].iter);
    }

    #[test]
    fn unbuildable_problem_reported_in_rows() {
        // asking for N above the unoccupied gap of a degenerate level
        let cfg = ExperimentConfig { n_rule: NRule::Explicit(vec![2]), ..small(TestId::Test1, vec![Method::Tpa]) };
        let exp = run_experiment(&cfg).unwrap();
        assert_eq!(exp.rows.len(), 1);
        assert!(matches!(exp.rows[0].status, Status::Error(_)));
        assert!(!exp.all_succeeded());
    }
}
