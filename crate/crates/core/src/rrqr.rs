//! Column-pivoted Householder QR.

use faer::Mat;

use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// `n × m`, orthonormal columns.
    pub q: Mat<C64>,
    /// `m × m` upper triangular with non-increasing diagonal magnitudes.
    pub r: Mat<C64>,
    /// Column `j` of `Q R` is column `perm[j]` of the input.
    pub perm: Vec<usize>,
}

impl PivotedQr {
    /// `|R_kk| / |R_11|` for the last retained column `k`.
    pub fn diag_ratio(&self, k: usize) -> f64 {
        let r11 = self.r[(0, 0)].norm();
        if r11 == 0.0 {
            0.0
        } else {
            self.r[(k, k)].norm() / r11
        }
    }
}

/// Factorizes `Y P = Q R`, choosing at each step the remaining column of
/// largest norm.
pub fn rr_qr(y: &Mat<C64>) -> Result<PivotedQr> {
    let (n, m) = (y.nrows(), y.ncols());
    if m > n {
        return Err(Error::InvalidParameter(format!("rr_qr needs m ≤ n, got {m} > {n}")));
    }
    let mut a = y.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut reflectors: Vec<Vec<C64>> = Vec::with_capacity(m);

    for k in 0..m {
        // pivot: remaining column of largest trailing norm
        let norm_sq = |a: &Mat<C64>, j: usize| (k..n).map(|i| a[(i, j)].norm_sqr()).sum::<f64>();
        let (best, _) = (k..m)
            .map(|j| (j, norm_sq(&a, j)))
            .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if best != k {
            for i in 0..n {
                let t = a[(i, k)];
                a[(i, k)] = a[(i, best)];
                a[(i, best)] = t;
            }
            perm.swap(k, best);
        }

        let norm = norm_sq(&a, k).sqrt();
        let mut v: Vec<C64> = (k..n).map(|i| a[(i, k)]).collect();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let phase = if v[0].norm() == 0.0 { C64::new(1.0, 0.0) } else { v[0] / v[0].norm() };
        let alpha = -phase * norm;
        v[0] -= alpha;
        let vnorm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for c in v.iter_mut() {
            *c /= vnorm;
        }
        // A[k.., k..] ← (I − 2vv*) A[k.., k..]
        for j in k..m {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * a[(k + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                a[(k + i, j)] -= vi * dot * 2.0;
            }
        }
        reflectors.push(v);
    }

    let r = Mat::from_fn(m, m, |i, j| if i <= j { a[(i, j)] } else { C64::new(0.0, 0.0) });
    let mut q = Mat::from_fn(n, m, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for j in 0..m {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * q[(k + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                q[(k + i, j)] -= vi * dot * 2.0;
            }
        }
    }
    Ok(PivotedQr { q, r, perm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, m: usize, seed: u64) -> Mat<C64> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, m, |_, _| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
    }

    fn max_abs(m: &Mat<C64>) -> f64 {
        let mut v: f64 = 0.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                v = v.max(m[(i, j)].norm());
            }
        }
        v
    }

    #[test]
    fn reconstructs_permuted_input() {
        let y = random(40, 7, 1);
        let f = rr_qr(&y).unwrap();
        let yp = Mat::from_fn(40, 7, |i, j| y[(i, f.perm[j])]);
        let qr = &f.q * &f.r;
        assert!(max_abs(&(&yp - &qr)) <= 1e-12 * max_abs(&y));
        let qq = f.q.adjoint() * &f.q;
        assert!(max_abs(&(&qq - Mat::<C64>::identity(7, 7))) < 1e-13);
        for k in 1..7 {
            assert!(f.r[(k, k)].norm() <= f.r[(k - 1, k - 1)].norm() + 1e-14);
            for i in k + 1..7 {
                assert_eq!(f.r[(i, k)], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn orthonormal_input_gives_unit_diagonal() {
        let f = rr_qr(&random(30, 5, 2)).unwrap();
        let g = rr_qr(&f.q).unwrap();
        for k in 0..5 {
            assert!((g.r[(k, k)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_column_detected() {
        let mut y = random(20, 4, 3);
        for i in 0..20 {
            y[(i, 3)] = y[(i, 1)];
        }
        let f = rr_qr(&y).unwrap();
        assert!(f.diag_ratio(3) <= 1e-12);
    }

    #[test]
    fn too_wide_rejected() {
        assert!(rr_qr(&random(3, 4, 4)).is_err());
    }
}
