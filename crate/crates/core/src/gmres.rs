//! Restarted, right-preconditioned GMRES.

use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GmresPrecond {
    None,
    /// Inverse of the constant-potential operator, applied by FFT.
    #[default]
    ConstResolvent,
    /// Sparse factorization of the sparsified integral equation.
    Sparsifying,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresConfig {
    pub rel_tol: f64,
    /// Krylov dimension per cycle.
    pub restart: usize,
    /// Number of cycles; the iteration cap is `restart * max_restarts`.
    pub max_restarts: usize,
    pub preconditioning: GmresPrecond,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-5, restart: 15, max_restarts: 5, preconditioning: GmresPrecond::ConstResolvent }
    }
}

impl GmresConfig {
    pub fn max_iterations(&self) -> usize {
        self.restart * self.max_restarts
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    /// Relative residual after every inner iteration (the Arnoldi least
    /// squares residual, which the true residual matches in exact arithmetic).
    pub history: Vec<f64>,
    /// True relative residual `‖b − Ax‖ / ‖b‖` of the returned iterate.
    pub rel_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A linear map on vectors, `out ← A x`.
pub type LinearMap<'a> = &'a (dyn Fn(&[C64], &mut [C64]) + Sync);

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn true_residual(a: LinearMap, b: &[C64], x: &[C64], scratch: &mut [C64]) -> f64 {
    a(x, scratch);
    b.iter().zip(scratch.iter()).map(|(bi, ai)| (bi - ai).norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` as `A M y = b − A x0`, `x = x0 + M y`.
pub fn gmres(a: LinearMap, m: Option<LinearMap>, b: &[C64], x0: &[C64], cfg: &GmresConfig) -> Result<GmresOutcome> {
    let n = b.len();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n}"), found: format!("{}", x0.len()) });
    }
    if cfg.restart == 0 || !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidParameter("GMRES needs restart > 0 and rel_tol > 0".into()));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x: vec![C64::new(0.0, 0.0); n], history: vec![], rel_residual: 0.0, iterations: 0, converged: true });
    }
    let breakdown = |reason: &str| Error::GmresBreakdown { pole: None, reason: reason.to_string() };
    let apply_m = |v: &[C64], out: &mut [C64]| match m {
        Some(m) => m(v, out),
        None => out.copy_from_slice(v),
    };

    let mut x = x0.to_vec();
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut res = true_residual(a, b, &x, &mut scratch) / bnorm;
    let mut best = (res, x.clone());
    let mut history = Vec::new();
    let mut iterations = 0;
    let k = cfg.restart;

    for _cycle in 0..cfg.max_restarts {
        if res <= cfg.rel_tol {
            break;
        }
        a(&x, &mut scratch);
        let r: Vec<C64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, already rotated
        let mut hcols: Vec<Vec<C64>> = Vec::new();
        let mut rot: Vec<(f64, C64)> = Vec::new();
        let mut g = vec![C64::new(0.0, 0.0); k + 1];
        g[0] = C64::new(beta, 0.0);
        let mut z = vec![C64::new(0.0, 0.0); n];
        let mut w = vec![C64::new(0.0, 0.0); n];

        for j in 0..k {
            apply_m(&basis[j], &mut z);
            a(&z, &mut w);
            let wnorm0 = norm(&w);
            let mut h = vec![C64::new(0.0, 0.0); j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
                h[i] = hij;
            }
            let hnext = norm(&w);
            if !hnext.is_finite() || h.iter().any(|v| !v.is_finite()) {
                return Err(breakdown("non-finite value in Krylov basis"));
            }
            h[j + 1] = C64::new(hnext, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a0, a1) = (h[i], h[i + 1]);
                h[i] = a0 * c + s * a1;
                h[i + 1] = -s.conj() * a0 + a1 * c;
            }
            // new rotation zeroing h[j+1]
            let (p, q) = (h[j], h[j + 1]);
            let rr = (p.norm_sqr() + q.norm_sqr()).sqrt();
            let (c, s) = if rr == 0.0 {
                (1.0, C64::new(0.0, 0.0))
            } else if p.norm() == 0.0 {
                (0.0, q.conj() / q.norm())
            } else {
                let c = p.norm() / rr;
                (c, (p / p.norm()) * q.conj() / rr)
            };
            h[j] = c * p + s * q;
            h[j + 1] = C64::new(0.0, 0.0);
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            rot.push((c, s));
            hcols.push(h);
            iterations += 1;
            let est = g[j + 1].norm() / bnorm;
            history.push(est);

            let happy = hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);
            if est <= cfg.rel_tol || happy {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // back substitution for y, then x += M (V y)
        let kk = hcols.len();
        let mut y = vec![C64::new(0.0, 0.0); kk];
        for i in (0..kk).rev() {
            let mut s = g[i];
            for jj in i + 1..kk {
                s -= hcols[jj][i] * y[jj];
            }
            let d = hcols[i][i];
            y[i] = if d.norm() == 0.0 { C64::new(0.0, 0.0) } else { s / d };
        }
        let mut vy = vec![C64::new(0.0, 0.0); n];
        for (yi, v) in y.iter().zip(&basis) {
            for (o, vk) in vy.iter_mut().zip(v) {
                *o += yi * vk;
            }
        }
        apply_m(&vy, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(breakdown("non-finite iterate"));
        }
        res = true_residual(a, b, &x, &mut scratch) / bnorm;
        if res < best.0 || best.0.is_nan() {
            best = (res, x.clone());
        }
    }
    let (rel_residual, x) = best;
    Ok(GmresOutcome { x, history, rel_residual, iterations, converged: rel_residual <= cfg.rel_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tol: f64) -> GmresConfig {
        GmresConfig { rel_tol: tol, ..Default::default() }
    }

    #[test]
    fn identity_converges_immediately() {
        let b: Vec<C64> = (0..5).map(|i| C64::new(i as f64, 1.0)).collect();
        let id = |x: &[C64], out: &mut [C64]| out.copy_from_slice(x);
        let out = gmres(&id, None, &b, &vec![C64::new(0.0, 0.0); 5], &cfg(1e-12)).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        for (a, b) in out.x.iter().zip(&b) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_within_degree_bound() {
        let d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let a = |x: &[C64], out: &mut [C64]| {
            for i in 0..10 {
                out[i] = x[i] * d[i];
            }
        };
        let b: Vec<C64> = (0..10).map(|i| C64::new(1.0, 0.1 * i as f64)).collect();
        let out = gmres(&a, None, &b, &vec![C64::new(0.0, 0.0); 10], &cfg(1e-10)).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 10);
        for i in 0..10 {
            assert!((out.x[i] - b[i] / d[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn history_monotone_within_cycles_and_restarts_help() {
        let n = 60;
        let a = |x: &[C64], out: &mut [C64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { C64::new(0.0, 0.0) };
                let r = if i + 1 < n { x[i + 1] } else { C64::new(0.0, 0.0) };
                out[i] = x[i] * C64::new(3.0, 0.5) - l - r * 0.8;
            }
        };
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), 0.0)).collect();
        let c = GmresConfig { rel_tol: 1e-10, restart: 5, max_restarts: 20, preconditioning: GmresPrecond::None };
        let out = gmres(&a, None, &b, &vec![C64::new(0.0, 0.0); n], &c).unwrap();
        assert!(out.converged, "{}", out.rel_residual);
        for chunk in out.history.chunks(5) {
            for w in chunk.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn right_preconditioning_with_exact_inverse() {
        let d: Vec<f64> = (1..=50).map(|i| (i * i) as f64).collect();
        let a = |x: &[C64], out: &mut [C64]| {
            for i in 0..50 {
                out[i] = x[i] * d[i];
            }
        };
        let m = |x: &[C64], out: &mut [C64]| {
            for i in 0..50 {
                out[i] = x[i] / d[i];
            }
        };
        let b: Vec<C64> = (0..50).map(|i| C64::new(1.0, i as f64)).collect();
        let out = gmres(&a, Some(&m), &b, &b, &cfg(1e-12)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn cap_is_respected_and_best_iterate_returned() {
        let n = 200;
        let a = |x: &[C64], out: &mut [C64]| {
            for i in 0..n {
                out[i] = x[i] * ((i as f64) - 100.5);
            }
        };
        let b = vec![C64::new(1.0, 0.0); n];
        let c = GmresConfig { rel_tol: 1e-12, restart: 3, max_restarts: 2, preconditioning: GmresPrecond::None };
        let out = gmres(&a, None, &b, &b, &c).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 6);
        let mut scratch = vec![C64::new(0.0, 0.0); n];
        let r = true_residual(&a, &b, &out.x, &mut scratch) / norm(&b);
        assert!((r - out.rel_residual).abs() < 1e-12);
    }

    #[test]
    fn nan_is_breakdown() {
        let a = |_: &[C64], out: &mut [C64]| out.fill(C64::new(f64::NAN, 0.0));
        let b = vec![C64::new(1.0, 0.0); 3];
        let r = gmres(&a, None, &b, &vec![C64::new(0.0, 0.0); 3], &cfg(1e-5));
        assert!(matches!(r, Err(Error::GmresBreakdown { .. })));
    }

    #[test]
    fn zero_rhs() {
        let id = |x: &[C64], out: &mut [C64]| out.copy_from_slice(x);
        let out = gmres(&id, None, &[C64::new(0.0, 0.0); 4], &[C64::new(1.0, 0.0); 4], &cfg(1e-5)).unwrap();
        assert!(out.x.iter().all(|v| v.norm() == 0.0));
    }
}
