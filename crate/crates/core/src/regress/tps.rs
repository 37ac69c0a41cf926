//! Thin-plate smoothing spline on two features.
//!
//! `f(x) = d0 + d1 x1 + d2 x2 + sum_i c_i eta(|x - x_i|)` with
//! `eta(r) = r^2 log r`. With `T = [1 x1 x2]` and an orthonormal complement
//! `Q2` of its column space, the penalised solution is
//! `c = Q2 (Q2' E Q2 + rho I)^-1 Q2' y`, so one symmetric eigendecomposition
//! per input set makes every `rho` an O(n) evaluation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::gcv::{minimise_log, GCV_GRID};
use super::Smoothing;
use crate::error::{Error, Result};

#[inline]
fn eta(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

#[derive(Debug)]
pub(crate) struct TpsBasis {
    n: usize,
    e: DMatrix<f64>,
    q1: DMatrix<f64>,
    r: Matrix3<f64>,
    /// `Q2 U`, columns are the eigenvectors of the projected kernel.
    q2u: DMatrix<f64>,
    eig: Vec<f64>,
}

impl TpsBasis {
    pub(crate) fn new(xs: &[Vec<f64>]) -> Result<Self> {
        let n = xs.len();
        if n < 4 {
            return Err(Error::InsufficientData {
                kind: "thin-plate-2d",
                needed: 4,
                got: n,
            });
        }
        let e = DMatrix::from_fn(n, n, |i, j| {
            let dx = xs[i][0] - xs[j][0];
            let dy = xs[i][1] - xs[j][1];
            eta(dx * dx + dy * dy)
        });
        // Householder QR of [T | I] yields a full orthonormal basis whose
        // first three columns span the columns of T.
        let mut aug = DMatrix::zeros(n, n + 3);
        for i in 0..n {
            aug[(i, 0)] = 1.0;
            aug[(i, 1)] = xs[i][0];
            aug[(i, 2)] = xs[i][1];
            aug[(i, 3 + i)] = 1.0;
        }
        let qr = aug.qr();
        let q = qr.q();
        let r_full = qr.r();
        let r = Matrix3::from_fn(|i, j| r_full[(i, j)]);
        let scale = r_full[(0, 0)].abs().max(1.0);
        if (0..3).any(|i| r[(i, i)].abs() < 1e-10 * scale) {
            return Err(Error::NumericalDegeneracy(
                "thin-plate inputs are collinear".into(),
            ));
        }
        let q1 = q.columns(0, 3).into_owned();
        let q2 = q.columns(3, n - 3).into_owned();
        let m = q2.transpose() * &e * &q2;
        let m = (&m + m.transpose()) * 0.5;
        let se = m.symmetric_eigen();
        let k = n - 3;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
        let u = DMatrix::from_fn(k, k, |r, c| se.eigenvectors[(r, order[c])]);
        let eig = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let q2u = q2 * u;
        Ok(TpsBasis { n, e, q1, r, q2u, eig })
    }

    pub(crate) fn fit(&self, ys: &[f64], smoothing: Smoothing) -> Result<TpsFit> {
        if ys.len() != self.n {
            return Err(Error::invalid(format!("expected {} targets, got {}", self.n, ys.len())));
        }
        let y = DVector::from_column_slice(ys);
        let w = self.q2u.transpose() * &y;
        let nf = self.n as f64;
        let emin = self.eig.first().copied().unwrap_or(0.0);
        let emax = self.eig.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let rho = match smoothing {
            Smoothing::Lambda(l) => nf * l,
            Smoothing::Gcv => {
                let floor = if emin < 0.0 { -emin * (1.0 + 1e-9) } else { 0.0 };
                let score = |log_rho: f64| {
                    let rho = log_rho.exp();
                    if rho <= floor {
                        return f64::INFINITY;
                    }
                    let mut rss = 0.0;
                    let mut tr = 0.0;
                    for (wi, ei) in w.iter().zip(&self.eig) {
                        let a = rho / (ei + rho);
                        rss += a * a * wi * wi;
                        tr += a;
                    }
                    if tr < 0.5 {
                        f64::INFINITY
                    } else {
                        nf * rss / (tr * tr)
                    }
                };
                minimise_log((emax * 1e-10).ln(), (emax * 1e4).ln(), GCV_GRID, score).exp()
            }
        };
        let z = DVector::from_iterator(
            w.len(),
            w.iter().zip(&self.eig).map(|(wi, ei)| wi / (ei + rho)),
        );
        let c = &self.q2u * z;
        let resid = &y - &self.e * &c;
        let rhs: Vector3<f64> = (self.q1.transpose() * resid).fixed_rows::<3>(0).into_owned();
        let d = self
            .r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::NumericalDegeneracy("thin-plate polynomial part".into()))?;
        if c.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalDegeneracy("non-finite thin-plate coefficients".into()));
        }
        Ok(TpsFit {
            c: c.as_slice().to_vec(),
            d: [d[0], d[1], d[2]],
            rho,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TpsFit {
    c: Vec<f64>,
    d: [f64; 3],
    pub rho: f64,
}

impl TpsFit {
    pub(crate) fn predict(&self, centres: &[Vec<f64>], x: &[f64]) -> f64 {
        let mut v = self.d[0] + self.d[1] * x[0] + self.d[2] * x[1];
        for (ci, p) in self.c.iter().zip(centres) {
            let dx = x[0] - p[0];
            let dy = x[1] - p[1];
            v += ci * eta(dx * dx + dy * dy);
        }
        v
    }
}
