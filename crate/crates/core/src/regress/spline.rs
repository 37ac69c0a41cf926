//! Penalised cubic B-spline smoother on one feature.
//!
//! Minimises `|y - B c|^2 + lambda * c' Omega c`, where `Omega` is the exact
//! integrated squared second derivative of the spline. The design is
//! diagonalised once per input set (Demmler-Reinsch), after which each
//! candidate `lambda` costs O(m) and generalised cross-validation is cheap.
//! Outside the data range the fit continues linearly.

use nalgebra::{DMatrix, DVector};

use super::gcv::{minimise_log, GCV_GRID};
use super::Smoothing;
use crate::error::{Error, Result};

const DEGREE: usize = 3;
/// Cap on the number of B-spline coefficients.
pub const DEFAULT_MAX_BASIS: usize = 40;

/// Knot vector and evaluation of cubic B-splines and their derivatives.
#[derive(Debug, Clone)]
pub(crate) struct Knots {
    t: Vec<f64>,
    n_basis: usize,
}

impl Knots {
    fn new(sorted_unique: &[f64], n_basis: usize) -> Self {
        let lo = sorted_unique[0];
        let hi = *sorted_unique.last().unwrap();
        let n_interior = n_basis - (DEGREE + 1);
        let mut t = vec![lo; DEGREE + 1];
        let last = (sorted_unique.len() - 1) as f64;
        for j in 1..=n_interior {
            let pos = j as f64 * last / (n_interior + 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < sorted_unique.len() {
                sorted_unique[i] * (1.0 - frac) + sorted_unique[i + 1] * frac
            } else {
                sorted_unique[i]
            };
            t.push(v);
        }
        t.extend(std::iter::repeat_n(hi, DEGREE + 1));
        Knots { t, n_basis }
    }

    fn lo(&self) -> f64 {
        self.t[DEGREE]
    }

    fn hi(&self) -> f64 {
        self.t[self.n_basis]
    }

    /// Index `s` with `t[s] <= x < t[s+1]`, clamped to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let n = self.n_basis;
        if x >= self.t[n] {
            let mut s = n - 1;
            while self.t[s] == self.t[s + 1] {
                s -= 1;
            }
            return s;
        }
        if x <= self.t[DEGREE] {
            let mut s = DEGREE;
            while self.t[s] == self.t[s + 1] {
                s += 1;
            }
            return s;
        }
        // binary search in [DEGREE, n)
        let (mut lo, mut hi) = (DEGREE, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.t[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values and first two derivatives of the 4 non-zero basis functions at `x`
    /// (functions `span-3 ..= span`).
    fn ders(&self, span: usize, x: f64) -> [[f64; 4]; 3] {
        let p = DEGREE;
        let t = &self.t;
        let mut ndu = [[0.0f64; 4]; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut out = [[0.0f64; 4]; 3];
        for (j, v) in out[0].iter_mut().enumerate() {
            *v = ndu[j][p];
        }
        let mut a = [[0.0f64; 4]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=2usize {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                out[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=2 {
            for v in out[k].iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        out
    }

    fn eval(&self, coef: &[f64], x: f64) -> (f64, f64) {
        let s = self.span(x);
        let d = self.ders(s, x);
        let mut v = 0.0;
        let mut dv = 0.0;
        for j in 0..=DEGREE {
            let c = coef[s - DEGREE + j];
            v += c * d[0][j];
            dv += c * d[1][j];
        }
        (v, dv)
    }

    fn penalty(&self) -> DMatrix<f64> {
        let m = self.n_basis;
        let mut omega = DMatrix::zeros(m, m);
        let g = 1.0 / 3f64.sqrt();
        for s in DEGREE..m {
            let (a, b) = (self.t[s], self.t[s + 1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            // 2-point Gauss-Legendre is exact: B'' is linear on a span.
            for node in [mid - half * g, mid + half * g] {
                let d2 = self.ders(s, node)[2];
                for i in 0..=DEGREE {
                    for j in 0..=DEGREE {
                        omega[(s - DEGREE + i, s - DEGREE + j)] += half * d2[i] * d2[j];
                    }
                }
            }
        }
        omega
    }
}

/// Data-independent part of the smoother for a fixed set of inputs.
#[derive(Debug)]
pub(crate) struct SplineBasis {
    knots: Knots,
    n: usize,
    /// n x m design with orthonormal columns in the rotated coordinates.
    f: DMatrix<f64>,
    /// Eigenvalues of the penalty in the rotated coordinates.
    d: Vec<f64>,
    /// Maps rotated coefficients back to B-spline coefficients.
    back: DMatrix<f64>,
}

impl SplineBasis {
    pub(crate) fn new(xs: &[f64], max_basis: usize) -> Result<Self> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite spline input"));
        }
        let mut uniq: Vec<f64> = xs.to_vec();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        if uniq.len() < DEGREE + 1 {
            return Err(Error::InsufficientData {
                kind: "smoothing-spline-1d (distinct inputs)",
                needed: DEGREE + 1,
                got: uniq.len(),
            });
        }
        let m = uniq.len().min(max_basis.max(DEGREE + 1));
        let knots = Knots::new(&uniq, m);
        let n = xs.len();
        let mut b = DMatrix::zeros(n, m);
        for (i, &x) in xs.iter().enumerate() {
            let s = knots.span(x);
            let v = knots.ders(s, x)[0];
            for j in 0..=DEGREE {
                b[(i, s - DEGREE + j)] = v[j];
            }
        }
        let mut btb = b.transpose() * &b;
        let ridge = 1e-12 * btb.trace() / m as f64;
        for i in 0..m {
            btb[(i, i)] += ridge;
        }
        let chol = btb
            .cholesky()
            .ok_or_else(|| Error::NumericalDegeneracy("spline Gram matrix not positive definite".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalDegeneracy("spline Gram factor singular".into()))?;
        let omega = knots.penalty();
        let rotated = &l_inv * omega * l_inv.transpose();
        let rotated = (&rotated + rotated.transpose()) * 0.5;
        let eig = rotated.symmetric_eigen();
        // Sort eigenpairs ascending so results do not depend on solver order.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let u = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        let top = eig.eigenvalues.max();
        // The penalty has an exact two-dimensional null space (lines); snap
        // round-off there to zero so large penalties keep the line intact.
        let d: Vec<f64> = order
            .iter()
            .map(|&i| {
                let v = eig.eigenvalues[i];
                if v < 1e-11 * top {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let back = l_inv.transpose() * &u;
        let f = &b * &back;
        Ok(SplineBasis { knots, n, f, d, back })
    }

    pub(crate) fn fit(&self, ys: &[f64], smoothing: Smoothing) -> Result<SplineFit> {
        if ys.len() != self.n {
            return Err(Error::invalid(format!("expected {} targets, got {}", self.n, ys.len())));
        }
        let y = DVector::from_column_slice(ys);
        let b = self.f.transpose() * &y;
        let base_rss = (&y - &self.f * &b).norm_squared();
        let nf = self.n as f64;
        let rss_tr = |lambda: f64| -> (f64, f64) {
            let mut rss = base_rss;
            let mut tr = 0.0;
            for (bi, di) in b.iter().zip(&self.d) {
                let s = 1.0 / (1.0 + lambda * di);
                rss += (1.0 - s) * (1.0 - s) * bi * bi;
                tr += s;
            }
            (rss, tr)
        };
        let lambda = match smoothing {
            Smoothing::Lambda(l) => l,
            Smoothing::Gcv => {
                let dmax = self.d.iter().cloned().fold(0.0, f64::max);
                let dmin = self.d.iter().cloned().filter(|v| *v > dmax * 1e-14).fold(f64::INFINITY, f64::min);
                if dmax <= 0.0 || !dmin.is_finite() {
                    0.0
                } else {
                    let lo = (1e-6 / dmax).ln();
                    let hi = (1e6 / dmin).ln();
                    let score = |log_l: f64| {
                        let (rss, tr) = rss_tr(log_l.exp());
                        let dof = nf - tr;
                        if dof < 0.5 {
                            f64::INFINITY
                        } else {
                            nf * rss / (dof * dof)
                        }
                    };
                    minimise_log(lo, hi, GCV_GRID, score).exp()
                }
            }
        };
        let z = DVector::from_iterator(b.len(), b.iter().zip(&self.d).map(|(bi, di)| bi / (1.0 + lambda * di)));
        let coef = &self.back * z;
        let coef = coef.as_slice().to_vec();
        let (lo, hi) = (self.knots.lo(), self.knots.hi());
        let (v_lo, d_lo) = self.knots.eval(&coef, lo);
        let (v_hi, d_hi) = self.knots.eval(&coef, hi);
        Ok(SplineFit {
            knots: self.knots.clone(),
            coef,
            lambda,
            ends: [(lo, v_lo, d_lo), (hi, v_hi, d_hi)],
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SplineFit {
    knots: Knots,
    coef: Vec<f64>,
    pub lambda: f64,
    ends: [(f64, f64, f64); 2],
}

impl SplineFit {
    pub(crate) fn predict(&self, x: f64) -> f64 {
        let [(lo, v_lo, d_lo), (hi, v_hi, d_hi)] = self.ends;
        if x < lo {
            v_lo + d_lo * (x - lo)
        } else if x > hi {
            v_hi + d_hi * (x - hi)
        } else {
            self.knots.eval(&self.coef, x).0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_derivatives() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 / 29.0).powi(2)).collect();
        let k = Knots::new(&xs, 12);
        for &x in &[0.0, 0.013, 0.2, 0.5, 0.77, 1.0] {
            let s = k.span(x);
            let d = k.ders(s, x);
            let sum: f64 = d[0].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "x={x} sum={sum}");
            assert!(d[1].iter().sum::<f64>().abs() < 1e-9);
            assert!(d[2].iter().sum::<f64>().abs() < 1e-7);
        }
        // A spline with coefficients equal to the Greville abscissae is x itself.
        let grev: Vec<f64> = (0..k.n_basis).map(|i| (k.t[i + 1] + k.t[i + 2] + k.t[i + 3]) / 3.0).collect();
        for &x in &[0.0, 0.3, 0.9, 1.0] {
            let (v, dv) = k.eval(&grev, x);
            assert!((v - x).abs() < 1e-12);
            assert!((dv - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn penalty_annihilates_lines() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let k = Knots::new(&xs, 10);
        let om = k.penalty();
        let grev = DVector::from_iterator(10, (0..10).map(|i| (k.t[i + 1] + k.t[i + 2] + k.t[i + 3]) / 3.0));
        let ones = DVector::from_element(10, 1.0);
        assert!((&om * &grev).amax() < 1e-9);
        assert!((&om * &ones).amax() < 1e-9);
    }

    #[test]
    fn huge_lambda_gives_least_squares_line() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let basis = SplineBasis::new(&xs, 40).unwrap();
        let fit = basis.fit(&ys, Smoothing::Lambda(1e12)).unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        for &x in &[0.0, 0.35, 1.0, 1.5] {
            let line = my + slope * (x - mx);
            assert!((fit.predict(x) - line).abs() < 1e-5, "x={x} {} {line}", fit.predict(x));
        }
    }
}
