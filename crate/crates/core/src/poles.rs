//! Trapezoidal pole expansions of the spectral projector
//! `Π = (2πi)⁻¹ ∮ (z − H)⁻¹ dz ≈ Σ_j w_j (H − z_j)⁻¹`.

use std::f64::consts::PI;
use std::io::Write;

use crate::oracle::SpectralData;
use crate::{Error, Result, C64};

/// Bookends of the occupied and unoccupied parts of a spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralWindow {
    pub lambda1: f64,
    pub lambda_n_occ: f64,
    pub lambda_n_occ1: f64,
    pub lambda_max: f64,
    pub mu: f64,
}

impl SpectralWindow {
    pub fn new(lambda1: f64, lambda_n_occ: f64, lambda_n_occ1: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda1 <= lambda_n_occ && lambda_n_occ < lambda_n_occ1 && lambda_n_occ1 <= lambda_max) {
            return Err(Error::ContourGeometry(format!(
                "window must satisfy λ₁ ≤ λ_N < λ_N+1 ≤ λ_n, got {lambda1}, {lambda_n_occ}, {lambda_n_occ1}, {lambda_max}"
            )));
        }
        Ok(Self { lambda1, lambda_n_occ, lambda_n_occ1, lambda_max, mu: 0.5 * (lambda_n_occ + lambda_n_occ1) })
    }

    pub fn from_spectrum(s: &SpectralData) -> Result<Self> {
        Self::new(s.lambda_min(), s.lambda_occ(), s.lambda_unocc(), s.lambda_max())
    }

    /// The same window for `H − σ`.
    pub fn shifted(&self, sigma: f64) -> Self {
        Self {
            lambda1: self.lambda1 - sigma,
            lambda_n_occ: self.lambda_n_occ - sigma,
            lambda_n_occ1: self.lambda_n_occ1 - sigma,
            lambda_max: self.lambda_max - sigma,
            mu: self.mu - sigma,
        }
    }

    pub fn gap(&self) -> f64 {
        self.lambda_n_occ1 - self.lambda_n_occ
    }

    pub fn spread(&self) -> f64 {
        self.lambda_max - self.lambda1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Contour {
    Circle,
    /// Vertical semi-axis as a fraction of the horizontal one.
    Ellipse(f64),
    /// Trapezoid rule on the annulus obtained by mapping the plane slit
    /// along both spectral intervals with a Möbius transform and Jacobi's
    /// `sn`. The error decays like `exp(-c p / log(spread/gap))`.
    Conformal,
}

impl Contour {
    /// Ellipse flattened toward the real axis when the gap is small next to
    /// the occupied band; a circle otherwise.
    pub fn default_for(w: &SpectralWindow) -> Self {
        let aspect = (4.0 * w.gap() / (w.mu - w.lambda1)).min(1.0);
        if aspect >= 1.0 {
            Contour::Circle
        } else {
            Contour::Ellipse(aspect)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoleSet {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub contour: Contour,
    /// Midpoint of the two real-axis crossings of the contour.
    pub center: f64,
    /// Half the distance between the two crossings.
    pub semi_axis: f64,
}

impl PoleSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of the nodes in the open upper half plane; the rest are their
    /// conjugates.
    pub fn upper_half(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.nodes[j].im > 0.0).collect()
    }

    /// `Σ_j w_j / (λ − z_j)`, the rational approximation of the indicator.
    pub fn rational(&self, lambda: f64) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w / (C64::new(lambda, 0.0) - z)).sum()
    }

    /// Rows `re_z,im_z,re_w,im_w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re_z,im_z,re_w,im_w")?;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            writeln!(out, "{:e},{:e},{:e},{:e}", z.re, z.im, w.re, w.im)?;
        }
        Ok(())
    }
}

/// Trapezoid rule with `p` nodes on a contour centered on the occupied band.
///
/// With `h` the band half-width, the horizontal semi-axis is
/// `√(h(h + gap))`, which balances the geometric decay rates for the nearest
/// occupied and unoccupied eigenvalues. It is floored at `gap/8` so a
/// collapsed band still gets a usable contour.
pub fn build_poles(w: &SpectralWindow, p: usize, contour: Contour) -> Result<PoleSet> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidParameter(format!("pole count {p} must be even and at least 2")));
    }
    if !(w.gap() > 0.0) {
        return Err(Error::ContourGeometry(format!("gap {} is not positive", w.gap())));
    }
    if contour == Contour::Conformal {
        return conformal_poles(w, p);
    }
    let h = 0.5 * (w.lambda_n_occ - w.lambda1);
    let c = w.lambda1 + h;
    let a = (h * (h + w.gap())).sqrt().max(w.gap() / 8.0);
    if a >= w.lambda_n_occ1 - c {
        return Err(Error::ContourGeometry("contour reaches the unoccupied spectrum".into()));
    }
    let b = match contour {
        Contour::Circle => a,
        Contour::Ellipse(aspect) => {
            if !(aspect > 0.0 && aspect.is_finite()) {
                return Err(Error::InvalidParameter(format!("ellipse aspect {aspect} must be positive")));
            }
            a * aspect
        }
        Contour::Conformal => unreachable!(),
    };
    let mut nodes = Vec::with_capacity(p);
    let mut weights = Vec::with_capacity(p);
    for j in 0..p {
        let theta = 2.0 * PI * (j as f64 + 0.5) / p as f64;
        let (s, co) = theta.sin_cos();
        nodes.push(C64::new(c + a * co, b * s));
        // z'(θ) = −a sinθ + i b cosθ, weight −z'(θ)/(i p)
        let dz = C64::new(-a * s, b * co);
        weights.push(-dz / (C64::i() * p as f64));
    }
    Ok(PoleSet { nodes, weights, contour, center: c, semi_axis: a })
}

/// Arithmetic-geometric mean.
fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    a
}

/// Complete elliptic integral `K` for the modulus with complementary
/// modulus `kc`.
fn complete_k(kc: f64) -> f64 {
    0.5 * PI / agm(1.0, kc)
}

/// Jacobi `(sn, cn, dn)(u)` for real `u` and the modulus with complementary
/// modulus `kc`, by descending AGM. Passing `kc` rather than the modulus keeps
/// full accuracy when the modulus is close to one.
fn jacobi_sn_cn_dn(u: f64, kc: f64) -> (f64, f64, f64) {
    let mut a = vec![1.0];
    let mut c = vec![((1.0 - kc) * (1.0 + kc)).sqrt()];
    let mut b = kc;
    while c[c.len() - 1].abs() > 1e-16 * a[a.len() - 1] && a.len() < 64 {
        let an = a[a.len() - 1];
        a.push(0.5 * (an + b));
        c.push(0.5 * (an - b));
        b = (an * b).sqrt();
    }
    let n = a.len() - 1;
    if n == 0 {
        return (u.sin(), u.cos(), 1.0);
    }
    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    let mut phi1 = phi;
    for i in (1..=n).rev() {
        let next = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
        phi1 = phi;
        phi = next;
    }
    (phi.sin(), phi.cos(), phi.cos() / (phi1 - phi).cos())
}

/// `((z − p)(r − q)) / ((z − q)(r − p))`: sends `p, q, r` to `0, ∞, 1`.
fn cross(z: C64, p: f64, q: f64, r: f64) -> C64 {
    (z - p) * (r - q) / ((z - q) * (r - p))
}

/// Inverse of [`cross`] and its derivative at `s`.
fn cross_inv(s: C64, p: f64, q: f64, r: f64) -> (C64, C64) {
    let a = (r - q) / (r - p);
    let z = (s * q - a * p) / (s - a);
    let dz = a * (p - q) / ((s - a) * (s - a));
    (z, dz)
}

/// The Möbius map `M` with `M(λ₁, λ_N, λ_N+1, λ_n) = (−1/k, −1, 1, 1/k)`
/// carries the two spectral intervals onto the slits of `sn(·; k)` over the
/// strip `|Re u| < K`, periodic with period `2iK'`. Nodes sit on
/// `u = it`, which `M⁻¹ ∘ sn` takes to a circle through the gap.
fn conformal_poles(w: &SpectralWindow, p: usize) -> Result<PoleSet> {
    let (a, b, c, d) = (w.lambda1, w.lambda_n_occ, w.lambda_n_occ1, w.lambda_max);
    let tiny = 1e-12 * (d - a);
    if b - a <= tiny || d - c <= tiny {
        return Err(Error::ContourGeometry("conformal contour needs both spectral intervals to have positive length".into()));
    }
    // cross ratio of the window equals (1 + k)²/(4k)
    let ratio = (c - a) * (d - b) / ((c - b) * (d - a));
    let m = 2.0 * ratio - 1.0;
    let k = 1.0 / (m + ((m - 1.0) * (m + 1.0)).sqrt());
    // sn(it; k) = i sc(t; k'), so the node map uses modulus k' whose
    // complement is k
    let kp = complete_k(k);
    let tgt = (-1.0 / k, -1.0, 1.0);
    let to_z = |wv: C64| {
        let s = cross(wv, tgt.0, tgt.1, tgt.2);
        let ds = (tgt.2 - tgt.1) / (tgt.2 - tgt.0) * (tgt.0 - tgt.1) / ((wv - tgt.1) * (wv - tgt.1));
        let (z, dz) = cross_inv(s, a, b, c);
        (z, dz * ds)
    };
    let step = 2.0 * kp / p as f64;
    let mut nodes = Vec::with_capacity(p);
    let mut weights = Vec::with_capacity(p);
    for j in 0..p {
        let t = -kp + (j as f64 + 0.5) * step;
        let (sn, cn, dn) = jacobi_sn_cn_dn(t, k);
        let wv = C64::new(0.0, sn / cn);
        let dw = C64::new(0.0, dn / (cn * cn));
        let (z, dzdw) = to_z(wv);
        nodes.push(z);
        weights.push(-dzdw * dw * step / (C64::new(0.0, 2.0 * PI)));
    }
    let mut set = PoleSet { nodes, weights, contour: Contour::Conformal, center: 0.0, semi_axis: 0.0 };
    // orient so that the occupied interval gets +1
    if set.rational(a).re < 0.0 {
        set.weights.iter_mut().for_each(|x| *x = -*x);
    }
    let x0 = to_z(C64::new(0.0, 0.0)).0.re;
    let x1 = cross_inv(C64::new((tgt.2 - tgt.1) / (tgt.2 - tgt.0), 0.0), a, b, c).0.re;
    set.center = 0.5 * (x0 + x1);
    set.semi_axis = 0.5 * (x1 - x0).abs();
    Ok(set)
}

/// Largest deviation of the rational approximation from the occupied
/// indicator over `samples` points on each spectral interval.
pub fn indicator_error(poles: &PoleSet, w: &SpectralWindow, samples: usize) -> f64 {
    let samples = samples.max(2);
    let mut err: f64 = 0.0;
    for (lo, hi, target) in [(w.lambda1, w.lambda_n_occ, 1.0), (w.lambda_n_occ1, w.lambda_max, 0.0)] {
        for i in 0..samples {
            let lambda = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            err = err.max((poles.rational(lambda) - target).norm());
        }
    }
    err
}

/// Indicator error below which the circle or ellipse is kept.
pub const BASELINE_TARGET: f64 = 1e-6;

/// The better of the circle and the default ellipse; when neither reaches
/// [`BASELINE_TARGET`], the conformal contour if it does better.
///
/// The conformal nodes crowd the gap, where inexact shifted solves are least
/// accurate, so they are only worth it when the baseline cannot resolve the
/// window.
pub fn build_best_poles(w: &SpectralWindow, p: usize, samples: usize) -> Result<(PoleSet, f64)> {
    let circle = build_poles(w, p, Contour::Circle)?;
    let ec = indicator_error(&circle, w, samples);
    let mut best = (circle, ec);
    if let c @ Contour::Ellipse(_) = Contour::default_for(w) {
        let set = build_poles(w, p, c)?;
        let e = indicator_error(&set, w, samples);
        if e < best.1 {
            best = (set, e);
        }
    }
    if best.1 > BASELINE_TARGET {
        // unavailable for single-point intervals
        if let Ok(set) = build_poles(w, p, Contour::Conformal) {
            let e = indicator_error(&set, w, samples);
            if e < best.1 {
                best = (set, e);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> SpectralWindow {
        SpectralWindow::new(-10.0, -8.0, -6.0, 40.0).unwrap()
    }

    #[test]
    fn scalar_indicator_values() {
        let w = window();
        let p = build_poles(&w, 30, Contour::Circle).unwrap();
        assert!((p.rational(w.lambda1) - 1.0).norm() < 1e-6);
        assert!(p.rational(w.lambda_max).norm() < 1e-6);
    }

    #[test]
    fn conjugate_pairs_and_zero_weight_sum() {
        for contour in [Contour::Circle, Contour::Ellipse(0.3)] {
            let p = build_poles(&window(), 16, contour).unwrap();
            for j in 0..16 {
                let k = 15 - j;
                assert!((p.nodes[j].conj() - p.nodes[k]).norm() < 1e-13);
                assert!((p.weights[j].conj() - p.weights[k]).norm() < 1e-13);
            }
            let s: C64 = p.weights.iter().sum();
            assert!(s.norm() < 1e-13);
            assert_eq!(p.upper_half().len(), 8);
            assert!(p.nodes.iter().all(|z| z.im != 0.0));
        }
    }

    #[test]
    fn error_decreases_with_p() {
        let w = window();
        let e15 = indicator_error(&build_poles(&w, 14, Contour::Circle).unwrap(), &w, 200);
        let e30 = indicator_error(&build_poles(&w, 30, Contour::Circle).unwrap(), &w, 200);
        assert!(e30 < e15);
        let errs: Vec<f64> = [8, 16, 24, 32]
            .iter()
            .map(|&p| indicator_error(&build_poles(&w, p, Contour::Circle).unwrap(), &w, 200).ln())
            .collect();
        // roughly equal decrements
        let d: Vec<f64> = errs.windows(2).map(|e| e[0] - e[1]).collect();
        for x in &d {
            assert!((x - d[0]).abs() < 0.25 * d[0], "{d:?}");
        }
    }

    #[test]
    fn isolated_eigenvalues_resolved_to_roundoff() {
        let w = SpectralWindow::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let p = build_poles(&w, 30, Contour::Circle).unwrap();
        assert!(indicator_error(&p, &w, 2) <= 1e-10);
    }

    #[test]
    fn bad_inputs() {
        assert!(build_poles(&window(), 7, Contour::Circle).is_err());
        assert!(SpectralWindow::new(0.0, 1.0, 1.0, 2.0).is_err());
        assert!(build_poles(&window(), 8, Contour::Ellipse(0.0)).is_err());
    }

    #[test]
    fn default_contour_rule() {
        assert_eq!(Contour::default_for(&window()), Contour::Circle);
        let narrow = SpectralWindow::new(-100.0, -1.0, 0.0, 10.0).unwrap();
        match Contour::default_for(&narrow) {
            Contour::Ellipse(a) => assert!((a - 4.0 / 99.5).abs() < 1e-12),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn shift_moves_nodes_only() {
        let w = window();
        let a = build_poles(&w, 12, Contour::Circle).unwrap();
        let b = build_poles(&w.shifted(5.0), 12, Contour::Circle).unwrap();
        for j in 0..12 {
            assert!((a.nodes[j] - 5.0 - b.nodes[j]).norm() < 1e-12);
            assert!((a.weights[j] - b.weights[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        build_poles(&window(), 4, Contour::Circle).unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    /// `F(φ | m) = ∫₀^φ (1 − m sin²θ)^(-1/2) dθ` by composite Simpson.
    fn incomplete_f(phi: f64, m: f64) -> f64 {
        let n = 4000;
        let h = phi / n as f64;
        let f = |t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt();
        let mut acc = f(0.0) + f(phi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn jacobi_functions_invert_the_elliptic_integral() {
        for (kc, phi) in [(0.6, 0.4), (0.2, 1.1), (0.01, 1.4), (0.9, -0.7)] {
            let m = (1.0 - kc) * (1.0 + kc);
            let u = incomplete_f(phi, m);
            let (sn, cn, dn) = jacobi_sn_cn_dn(u, kc);
            assert!((sn - phi.sin()).abs() < 1e-10, "kc={kc}: {sn} vs {}", phi.sin());
            assert!((cn - phi.cos()).abs() < 1e-10);
            assert!((dn - (1.0 - m * phi.sin().powi(2)).sqrt()).abs() < 1e-10);
        }
        // quarter period
        let kc = 0.3;
        let k = complete_k(kc);
        assert!((k - incomplete_f(0.5 * PI, 1.0 - kc * kc)).abs() < 1e-9);
        assert!((jacobi_sn_cn_dn(k, kc).0 - 1.0).abs() < 1e-12);
        // modulus zero is the circular case
        let (sn, cn, dn) = jacobi_sn_cn_dn(0.8, 1.0);
        assert!((sn - 0.8f64.sin()).abs() < 1e-15 && (cn - 0.8f64.cos()).abs() < 1e-15 && dn == 1.0, "{sn} {cn} {dn}");
    }

    #[test]
    fn conformal_contour() {
        let narrow = SpectralWindow::new(-500.0, -300.0, -290.0, 4000.0).unwrap();
        let p = build_poles(&narrow, 30, Contour::Conformal).unwrap();
        for j in 0..30 {
            assert!((p.nodes[j].conj() - p.nodes[29 - j]).norm() < 1e-9 * p.nodes[j].norm());
            assert!((p.weights[j].conj() - p.weights[29 - j]).norm() < 1e-9 * p.weights[j].norm());
            assert!(p.nodes[j].im != 0.0);
        }
        assert!((p.rational(-400.0) - 1.0).norm() < 1e-8);
        assert!(p.rational(1000.0).norm() < 1e-8);
        // one crossing in the gap, the other left of the occupied band
        let (lo, hi) = (p.center - p.semi_axis, p.center + p.semi_axis);
        assert!(lo < -500.0 && hi > -300.0 && hi < -290.0, "{lo} {hi}");
        let conformal = indicator_error(&p, &narrow, 2000);
        let circle = indicator_error(&build_poles(&narrow, 30, Contour::Circle).unwrap(), &narrow, 2000);
        assert!(conformal < 1e-8 && conformal < 1e-3 * circle, "{conformal:e} vs {circle:e}");
        let e: Vec<f64> = [8, 16, 24].iter().map(|&k| indicator_error(&build_poles(&narrow, k, Contour::Conformal).unwrap(), &narrow, 500)).collect();
        assert!(e[1] < 0.1 * e[0] && e[2] < 0.1 * e[1], "{e:?}");
        let (best, err) = build_best_poles(&narrow, 30, 2000).unwrap();
        assert_eq!(best.contour, Contour::Conformal);
        assert_eq!(err, conformal);
        // a well separated window keeps the circle
        assert_eq!(build_best_poles(&window(), 30, 2000).unwrap().0.contour, Contour::Circle);
    }

    #[test]
    fn conformal_needs_two_intervals() {
        let w = SpectralWindow::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(build_poles(&w, 8, Contour::Conformal), Err(Error::ContourGeometry(_))));
        assert!(build_best_poles(&w, 8, 10).is_ok());
    }
}
