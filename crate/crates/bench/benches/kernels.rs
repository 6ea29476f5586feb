use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pwomm::gmres::gmres;
use pwomm::harness::experiment::poles_for;
use pwomm::harness::{build_problem, ExperimentConfig, Problem, TestId};
use pwomm::kinetic::compute_tau;
use pwomm::omm::gradient;
use pwomm::{FilterKind, GmresConfig, KineticFilter, Preconditioner, SparsifiedSystem, WaveBlock, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(ell: usize) -> Problem {
    build_problem(&ExperimentConfig::for_test(TestId::Test3, vec![ell]), 0).unwrap()
}

fn random_block(n: usize, m: usize) -> WaveBlock {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    WaveBlock::from_fn(n, m, |_, _| C64::new(r.random::<f64>() - 0.5, 0.0))
}

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("operators");
    for ell in [2, 4] {
        let p = problem(ell);
        let x = random_block(p.n(), p.spectral.n_occ);
        g.bench_with_input(BenchmarkId::new("apply_hamiltonian", p.n()), &x, |b, x| b.iter(|| p.h.apply(x).unwrap()));
        g.bench_with_input(BenchmarkId::new("omm_gradient", p.n()), &x, |b, x| b.iter(|| gradient(&p.h, x).unwrap()));
        let tau = compute_tau(&p.grid, &p.spectral.x0).unwrap();
        let f = KineticFilter::new(&p.grid, FilterKind::Tpa, tau).unwrap();
        g.bench_with_input(BenchmarkId::new("apply_filter", p.n()), &x, |b, x| b.iter(|| f.apply(x).unwrap()));
    }
    g.finish();
}

fn pole_solves(c: &mut Criterion) {
    let mut g = c.benchmark_group("pole_solves");
    g.sample_size(20);
    let p = problem(4);
    let (poles, _) = poles_for(&p, 30).unwrap();
    let z = poles.nodes[poles.upper_half()[0]];
    let delta = 1e-6 * p.spectral.spread;
    g.bench_function("sparsify_build", |b| b.iter(|| SparsifiedSystem::for_operator(&p.h, z, 1, delta).unwrap()));
    let sp = SparsifiedSystem::for_operator(&p.h, z, 1, delta).unwrap();
    let rhs = random_block(p.n(), 1).col(0).to_vec();
    g.bench_function("precond_apply", |b| b.iter(|| sp.precond_apply(&rhs)));
    let a = |x: &[C64], out: &mut [C64]| p.h.apply_shifted_vec(x, z, out);
    let m = |x: &[C64], out: &mut [C64]| out.copy_from_slice(&sp.precond_apply(x));
    let x0 = vec![C64::new(0.0, 0.0); p.n()];
    let cfg = GmresConfig::default();
    g.bench_function("gmres_sparsified", |b| b.iter(|| gmres(&a, Some(&m), &rhs, &x0, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, operators, pole_solves);
criterion_main!(benches);
