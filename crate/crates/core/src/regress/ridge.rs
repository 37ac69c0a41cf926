//! Polynomial least squares with an L2 penalty on all but the intercept.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exponent tuples of total degree `<= degree` in `d` variables, intercept first.
pub(crate) fn monomials(d: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0u32; d];
        push_with_total(&mut out, &mut cur, 0, total);
    }
    out
}

fn push_with_total(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_with_total(out, cur, pos + 1, left - e);
    }
}

fn features<'a>(terms: &'a [Vec<u32>], x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    terms
        .iter()
        .map(move |t| t.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product())
}

#[derive(Debug, Clone)]
pub(crate) struct RidgeFit {
    terms: Vec<Vec<u32>>,
    beta: Vec<f64>,
}

impl RidgeFit {
    pub(crate) fn fit(xs: &[Vec<f64>], ys: &[f64], degree: u32, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("ridge penalty must be finite and non-negative"));
        }
        let d = xs[0].len();
        let terms = monomials(d, degree);
        let f = terms.len();
        let n = xs.len();
        let mut a = DMatrix::zeros(n + f - 1, f);
        let mut b = DVector::zeros(n + f - 1);
        for (i, x) in xs.iter().enumerate() {
            for (j, v) in features(&terms, x).enumerate() {
                a[(i, j)] = v;
            }
            b[i] = ys[i];
        }
        let s = lambda.sqrt();
        for j in 1..f {
            a[(n + j - 1, j)] = s;
        }
        let svd = a.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let beta = svd
            .solve(&b, tol)
            .map_err(|e| Error::NumericalDegeneracy(format!("ridge solve: {e}")))?;
        Ok(RidgeFit {
            terms,
            beta: beta.as_slice().to_vec(),
        })
    }

    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        features(&self.terms, x).zip(&self.beta).map(|(f, b)| f * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(1, 3).len(), 4);
        assert_eq!(monomials(2, 2), vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn quadratic_exact() {
        let xs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 8.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x[0] + 3.0 * x[0] * x[0]).collect();
        let f = RidgeFit::fit(&xs, &ys, 2, 0.0).unwrap();
        assert!((f.predict(&[0.33]) - (1.0 - 0.66 + 3.0 * 0.33 * 0.33)).abs() < 1e-10);
    }

    #[test]
    fn big_penalty_keeps_mean() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let ys = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let f = RidgeFit::fit(&xs, &ys, 1, 1e14).unwrap();
        assert!((f.predict(&[10.0]) - 3.0).abs() < 1e-6);
    }
}
