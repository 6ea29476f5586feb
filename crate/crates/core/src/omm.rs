//! Orbital minimization: energy, gradient, exact line search and the
//! preconditioned nonlinear conjugate gradient driver.
//!
//! The energy is `E(X) = ½ tr((2I − X*X)(X*HX))` for a negative definite `H`.
//! Its gradient with respect to the real inner product `Re tr(Z*·)` is
//! `𝓖(X) = 2HX − X(X*HX) − HX(X*X)`.

use std::time::Instant;

use faer::Mat;

use crate::block::{re_trace, re_trace_prod};
use crate::operator::BlockOperator;
use crate::oracle::SpectralData;
use crate::{Result, WaveBlock, C64};

/// A fixed linear preconditioner applied to gradient blocks.
pub trait Preconditioner: Sync {
    fn apply(&self, block: &WaveBlock) -> Result<WaveBlock>;

    fn name(&self) -> &str;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply(&self, block: &WaveBlock) -> Result<WaveBlock> {
        Ok(block.clone())
    }

    fn name(&self) -> &str {
        "none"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BetaRule {
    #[default]
    PolakRibiere,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmmConfig {
    /// Relative energy-change tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub beta_rule: BetaRule,
    /// Force `β = 0` every this many iterations.
    pub restart_every: Option<usize>,
}

impl Default for OmmConfig {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 4000, beta_rule: BetaRule::PolakRibiere, restart_every: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WallTimes {
    pub setup: f64,
    pub omm: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct OmmReport {
    /// Outer CG iterations (line searches).
    pub iterations: usize,
    /// Energy before the first step and after every step.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
    pub final_x: WaveBlock,
    pub wall_times: WallTimes,
    /// Subspace distance to the reference, when one is known.
    pub d: Option<f64>,
    pub restarts: usize,
    /// `‖𝓖(X)‖_F / ‖HX‖_F` at the returned iterate.
    pub gradient_ratio: f64,
}

impl OmmReport {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().unwrap()
    }
}

/// `σ = λ_n + margin`, so that `H − σI` is negative definite.
pub fn negative_definite_shift(s: &SpectralData, margin: f64) -> f64 {
    s.lambda_max() + margin
}

fn energy_from(x: &WaveBlock, hx: &WaveBlock) -> f64 {
    let a = x.adjoint_times(hx);
    let s = x.adjoint_times(x);
    re_trace(a.as_ref()) - 0.5 * re_trace_prod(s.as_ref(), a.as_ref())
}

fn gradient_from(x: &WaveBlock, hx: &WaveBlock) -> WaveBlock {
    let a = x.adjoint_times(hx);
    let s = x.adjoint_times(x);
    let mut g = hx.clone();
    g.scale(C64::new(2.0, 0.0));
    g.axpy(C64::new(-1.0, 0.0), &x.times(a.as_ref()));
    g.axpy(C64::new(-1.0, 0.0), &hx.times(s.as_ref()));
    g
}

pub fn energy<O: BlockOperator + ?Sized>(h: &O, x: &WaveBlock) -> Result<f64> {
    let hx = h.apply_block(x)?;
    Ok(energy_from(x, &hx))
}

pub fn gradient<O: BlockOperator + ?Sized>(h: &O, x: &WaveBlock) -> Result<WaveBlock> {
    let hx = h.apply_block(x)?;
    Ok(gradient_from(x, &hx))
}

/// Coefficients `[c0, …, c4]` of `E(X + αD) = Σ c_k α^k`.
pub fn quartic_coefficients(x: &WaveBlock, hx: &WaveBlock, d: &WaveBlock, hd: &WaveBlock) -> [f64; 5] {
    let a0 = x.adjoint_times(hx);
    let xhd = x.adjoint_times(hd);
    let a1: Mat<C64> = &xhd + xhd.adjoint();
    let a2 = d.adjoint_times(hd);
    let s0 = x.adjoint_times(x);
    let xd = x.adjoint_times(d);
    let s1: Mat<C64> = &xd + xd.adjoint();
    let s2 = d.adjoint_times(d);
    let tr = |a: &Mat<C64>, b: &Mat<C64>| re_trace_prod(a.as_ref(), b.as_ref());
    [
        re_trace(a0.as_ref()) - 0.5 * tr(&s0, &a0),
        re_trace(a1.as_ref()) - 0.5 * (tr(&s0, &a1) + tr(&s1, &a0)),
        re_trace(a2.as_ref()) - 0.5 * (tr(&s0, &a2) + tr(&s1, &a1) + tr(&s2, &a0)),
        -0.5 * (tr(&s1, &a2) + tr(&s2, &a1)),
        -0.5 * tr(&s2, &a2),
    ]
}

/// `E(α) − E(0)`, without the cancellation of forming both terms.
fn poly_increment(c: &[f64; 5], a: f64) -> f64 {
    (((c[4] * a + c[3]) * a + c[2]) * a + c[1]) * a
}

/// Real roots of `a x³ + b x² + c x + d`.
pub(crate) fn real_cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 {
        return vec![0.0];
    }
    let mut roots = if a.abs() <= 1e-14 * scale {
        real_quadratic_roots(b, c, d)
    } else {
        let (p, q, r) = (b / a, c / a, d / a);
        // x = t − p/3 gives t³ + P t + Q = 0
        let pp = q - p * p / 3.0;
        let qq = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
        let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
        let shift = -p / 3.0;
        if disc > 0.0 {
            let sq = disc.sqrt();
            let u = (-qq / 2.0 + sq).cbrt();
            let v = (-qq / 2.0 - sq).cbrt();
            vec![u + v + shift]
        } else if pp == 0.0 {
            vec![shift]
        } else {
            let m = 2.0 * (-pp / 3.0).sqrt();
            let arg = (3.0 * qq / (pp * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3).map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift).collect()
        }
    };
    // Newton polish
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((a * *x + b) * *x + c) * *x + d;
            let df = (3.0 * a * *x + 2.0 * b) * *x + c;
            if df == 0.0 || !df.is_finite() {
                break;
            }
            let step = f / df;
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    roots.retain(|x| x.is_finite());
    roots
}

fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![-b / (2.0 * a)];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    pub alpha: f64,
    pub new_energy: f64,
    /// `new_energy − E(0)`, evaluated from the polynomial increment.
    pub delta: f64,
    /// No critical point lowers the energy; `alpha` is 0.
    pub stagnated: bool,
}

/// Exact minimization of the quartic `E(X + αD)` over real `α`.
pub fn minimize_quartic(c: &[f64; 5]) -> LineSearch {
    let roots = real_cubic_roots(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]);
    let best = roots
        .into_iter()
        .map(|a| (a, poly_increment(c, a)))
        .filter(|(_, de)| de.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1));
    match best {
        Some((alpha, de)) if de < 0.0 => LineSearch { alpha, new_energy: c[0] + de, delta: de, stagnated: false },
        _ => LineSearch { alpha: 0.0, new_energy: c[0], delta: 0.0, stagnated: true },
    }
}

pub fn line_search_quartic<O: BlockOperator + ?Sized>(h: &O, x: &WaveBlock, d: &WaveBlock) -> Result<LineSearch> {
    x.check_same_shape(d)?;
    let hx = h.apply_block(x)?;
    let hd = h.apply_block(d)?;
    Ok(minimize_quartic(&quartic_coefficients(x, &hx, d, &hd)))
}

/// `Re tr(G_m*(G_m − G_{m−1})) / Re tr(G_{m−1}* G_{m−1})`.
pub fn polak_ribiere(g_new: &WaveBlock, g_old: &WaveBlock) -> f64 {
    let den = g_old.inner(g_old);
    if den == 0.0 {
        return 0.0;
    }
    (g_new.inner(g_new) - g_new.inner(g_old)) / den
}

/// Preconditioned nonlinear conjugate gradient on the OMM energy.
pub fn pcg_minimize<O: BlockOperator + ?Sized>(
    h: &O,
    precond: &dyn Preconditioner,
    x1: WaveBlock,
    cfg: &OmmConfig,
) -> Result<OmmReport> {
    let start = Instant::now();
    x1.check_rows(h.dim())?;
    let mut x = x1;
    let mut hx = h.apply_block(&x)?;
    let mut e = energy_from(&x, &hx);
    let mut trace = vec![e];

    let mut g = -precond.apply(&gradient_from(&x, &hx))?;
    let mut d = g.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut restarts = 0;
    let mut fruitless_restarts = 0;
    let mut direction_is_steepest = true;

    while iterations < cfg.max_iter {
        if d.norm() == 0.0 {
            converged = true;
            break;
        }
        let hd = h.apply_block(&d)?;
        let coef = quartic_coefficients(&x, &hx, &d, &hd);
        let ls = minimize_quartic(&coef);
        iterations += 1;

        if ls.stagnated {
            if direction_is_steepest {
                fruitless_restarts += 1;
                // nothing left to gain along the preconditioned gradient
                if fruitless_restarts >= 3 || g.norm() <= f64::EPSILON * x.norm() {
                    converged = true;
                    break;
                }
            }
            restarts += 1;
            d = g.clone();
            direction_is_steepest = true;
            trace.push(e);
            continue;
        }
        fruitless_restarts = 0;

        x.axpy(C64::new(ls.alpha, 0.0), &d);
        hx = h.apply_block(&x)?;
        let de = ls.delta;
        e = ls.new_energy;
        trace.push(e);
        if de.abs() <= cfg.tol * e.abs().max(1.0) {
            converged = true;
            break;
        }

        let g_new = -precond.apply(&gradient_from(&x, &hx))?;
        let restart = cfg.restart_every.is_some_and(|k| k > 0 && iterations % k == 0);
        let beta = if restart {
            0.0
        } else {
            match cfg.beta_rule {
                BetaRule::PolakRibiere => polak_ribiere(&g_new, &g),
            }
        };
        if restart {
            restarts += 1;
        }
        let mut d_new = g_new.clone();
        d_new.axpy(C64::new(beta, 0.0), &d);
        d = d_new;
        direction_is_steepest = beta == 0.0;
        g = g_new;
    }

    let grad = gradient_from(&x, &hx);
    let hx_norm = hx.norm();
    let omm = start.elapsed().as_secs_f64();
    Ok(OmmReport {
        iterations,
        energy_trace: trace,
        converged,
        gradient_ratio: if hx_norm > 0.0 { grad.norm() / hx_norm } else { grad.norm() },
        final_x: x,
        wall_times: WallTimes { setup: 0.0, omm, total: omm },
        d: None,
        restarts,
    })
}
