//! One-step Q-values over the control space.
//!
//! For a belief `x` and control `u`, the Q-value is
//! `-gamma * Upsilon(m_beta, s_beta^2) + E[max(m_alpha(u, y), V(y))]`, the
//! expectation running over the posterior `y` reached after observing
//! `(h, t)` at `u`. [`QEvaluator::lambda`] estimates it by Monte Carlo on a
//! grid and smooths the grid values with a regressor; [`QEvaluator::otf`]
//! nests the same estimator to replace `V` by a recursively computed sup.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::basis::{BasisSet, ControlPoint};
use crate::belief::{BeliefState, NoiseModel, StepPlan};
use crate::error::{Error, Result};
use crate::regress::{prepare, FittedRegressor, PreparedFit, RegressionSpec};
use crate::rng::StreamKey;

/// Deepest nesting [`QEvaluator::otf`] accepts unless reconfigured.
pub const OTF_DEPTH_LIMIT: usize = 3;

const TIE_TOL: f64 = 1e-12;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `E[max(Y, 0)]` for `Y ~ N(m, s2)`.
pub fn upsilon(m: f64, s2: f64) -> Result<f64> {
    if !(s2 > 0.0) || !s2.is_finite() || !m.is_finite() {
        return Err(Error::invalid(format!("upsilon needs finite m and s2 > 0, got m={m}, s2={s2}")));
    }
    Ok(upsilon_sd(m, s2.sqrt()))
}

#[inline]
pub(crate) fn upsilon_sd(m: f64, s: f64) -> f64 {
    let z = m / s;
    let pdf = INV_SQRT_2PI * (-0.5 * z * z).exp();
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    (s * pdf + m * cdf).max(m.max(0.0))
}

/// Grid of controls, Monte Carlo sample count and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub grid: Vec<ControlPoint>,
    pub n_samples: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(grid: Vec<ControlPoint>, n_samples: usize, seed: u64) -> Result<Self> {
        let plan = SamplingPlan { grid, n_samples, seed };
        plan.validate()?;
        Ok(plan)
    }

    /// Tensor lattice with `per_dim` points `0, 1/(per_dim-1), ..., 1` per axis.
    pub fn lattice(p: usize, per_dim: usize, n_samples: usize, seed: u64) -> Result<Self> {
        if p == 0 || per_dim < 2 {
            return Err(Error::invalid("lattice needs p >= 1 and at least 2 points per axis"));
        }
        Self::new(lattice_points(p, per_dim), n_samples, seed)
    }

    /// 101 points on `[0, 1]` for one control, the 21 x 21 lattice for two,
    /// 5 points per axis beyond that.
    pub fn default_for(p: usize, n_samples: usize, seed: u64) -> Result<Self> {
        let per_dim = match p {
            1 => 101,
            2 => 21,
            _ => 5,
        };
        Self::lattice(p, per_dim, n_samples, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sampling grid is empty"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        let p = self.grid[0].dim();
        if self.grid.iter().any(|u| u.dim() != p) {
            return Err(Error::invalid("grid points have mixed dimensions"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.grid[0].dim()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplingPlan { seed, ..self.clone() }
    }

    pub fn with_samples(&self, n_samples: usize) -> Self {
        SamplingPlan { n_samples, ..self.clone() }
    }

    fn inputs(&self) -> Vec<Vec<f64>> {
        self.grid.iter().map(|u| u.coords().to_vec()).collect()
    }
}

fn lattice_points(p: usize, per_dim: usize) -> Vec<ControlPoint> {
    let step = 1.0 / (per_dim - 1) as f64;
    let total = per_dim.pow(p as u32);
    (0..total)
        .map(|mut flat| {
            let mut c = vec![0.0; p];
            for d in (0..p).rev() {
                c[d] = ((flat % per_dim) as f64 * step).min(1.0);
                flat /= per_dim;
            }
            ControlPoint::new(c).expect("lattice inside the cube")
        })
        .collect()
}

/// Default argmax lattice resolution per dimension.
pub fn default_resolution(p: usize) -> usize {
    match p {
        1 => 1001,
        2 => 101,
        _ => 11,
    }
}

/// The value-to-go used after the next observation.
pub trait ValueFunction: Sync {
    fn value(&self, x: &BeliefState) -> f64;

    /// Values at the posteriors reached from `plan` after each observation.
    /// Implementors may exploit that every such posterior shares its covariances.
    fn posterior_values(&self, plan: &StepPlan<'_>, obs: &[(f64, f64)]) -> Vec<f64> {
        obs.iter().map(|&(h, t)| self.value(&plan.posterior(h, t))).collect()
    }
}

impl<F: Fn(&BeliefState) -> f64 + Sync> ValueFunction for F {
    fn value(&self, x: &BeliefState) -> f64 {
        self(x)
    }
}

/// Continuation value inside the Q-value integrand.
#[derive(Clone, Copy)]
pub enum Continuation<'a> {
    /// Stop after the next observation (`V = -inf`).
    None,
    /// `scale * V(y)`.
    Value { f: &'a dyn ValueFunction, scale: f64 },
}

impl<'a> Continuation<'a> {
    pub fn value(f: &'a dyn ValueFunction) -> Self {
        Continuation::Value { f, scale: 1.0 }
    }

    /// `(1 - epsilon) * V`.
    pub fn damped(f: &'a dyn ValueFunction, epsilon: f64) -> Self {
        Continuation::Value { f, scale: 1.0 - epsilon }
    }

    pub fn scaled(f: &'a dyn ValueFunction, scale: f64) -> Self {
        Continuation::Value { f, scale }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Continuation::None)
    }
}

impl std::fmt::Debug for Continuation<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Continuation::None => write!(f, "None"),
            Continuation::Value { scale, .. } => write!(f, "Value(scale={scale})"),
        }
    }
}

/// Raw grid estimates and their smoothed curve.
#[derive(Debug, Clone)]
pub struct QCurve {
    regressor: FittedRegressor,
    grid: Vec<ControlPoint>,
    raw: Vec<f64>,
    point_se: Vec<f64>,
}

impl QCurve {
    pub fn regressor(&self) -> &FittedRegressor {
        &self.regressor
    }

    pub fn grid(&self) -> &[ControlPoint] {
        &self.grid
    }

    /// `p^i` at each grid point, in grid order.
    pub fn raw_values(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_points(&self) -> impl Iterator<Item = (&ControlPoint, f64)> {
        self.grid.iter().zip(self.raw.iter().copied())
    }

    /// Monte Carlo standard error of each `p^i`.
    pub fn point_se(&self) -> &[f64] {
        &self.point_se
    }

    /// Root mean square of the per-point standard errors.
    pub fn pooled_se(&self) -> f64 {
        (self.point_se.iter().map(|s| s * s).sum::<f64>() / self.point_se.len() as f64).sqrt()
    }

    /// Smoothed value at `u`.
    pub fn eval(&self, u: &ControlPoint) -> Result<f64> {
        self.regressor.predict(u.coords())
    }

    /// CSV with columns `u1..up,p`.
    pub fn raw_csv(&self) -> String {
        let p = self.grid[0].dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=p).map(|i| format!("u{i}")).collect();
        let _ = writeln!(out, "{},p", header.join(","));
        for (u, v) in self.raw_points() {
            let coords: Vec<String> = u.coords().iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{},{}", coords.join(","), v);
        }
        out
    }
}

/// Maximise the smoothed curve over a uniform lattice with `resolution`
/// points per axis. Iteration is lexicographic and a later point must beat the
/// incumbent by more than round-off (relative 1e-12), so ties go to the
/// lexicographically smallest control. The resolution is raised
/// to the number of distinct grid values per axis if it is smaller.
pub fn argmax_qcurve(q: &QCurve, resolution: usize) -> (ControlPoint, f64) {
    let p = q.grid[0].dim();
    let mut res = resolution.max(2);
    for d in 0..p {
        let mut vals: Vec<f64> = q.grid.iter().map(|u| u.coords()[d]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        res = res.max(vals.len());
    }
    let step = 1.0 / (res - 1) as f64;
    let mut idx = vec![0usize; p];
    let mut x = vec![0.0; p];
    let mut best_x = x.clone();
    let mut best_v = f64::NEG_INFINITY;
    loop {
        for d in 0..p {
            x[d] = (idx[d] as f64 * step).min(1.0);
        }
        let v = q.regressor.eval(&x);
        if best_v == f64::NEG_INFINITY || v > best_v + TIE_TOL * best_v.abs().max(1.0) {
            best_v = v;
            best_x.copy_from_slice(&x);
        }
        // odometer, last axis fastest
        let mut d = p;
        loop {
            if d == 0 {
                let u = ControlPoint::new(best_x).expect("lattice inside the cube");
                return (u, best_v);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < res {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Shared configuration for repeated Q-value estimates over one grid.
pub struct QEvaluator<'a> {
    basis: &'a BasisSet,
    noise: &'a NoiseModel,
    gamma: f64,
    plan: &'a SamplingPlan,
    prepared: PreparedFit,
    resolution: usize,
    depth_limit: usize,
}

impl<'a> QEvaluator<'a> {
    pub fn new(
        basis: &'a BasisSet,
        noise: &'a NoiseModel,
        gamma: f64,
        plan: &'a SamplingPlan,
        fit_spec: &RegressionSpec,
    ) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be finite and non-negative, got {gamma}")));
        }
        noise.validate()?;
        plan.validate()?;
        if plan.dim() != basis.dim_control() {
            return Err(Error::invalid(format!(
                "grid dimension {} does not match control dimension {}",
                plan.dim(),
                basis.dim_control()
            )));
        }
        Ok(QEvaluator {
            basis,
            noise,
            gamma,
            plan,
            prepared: prepare(fit_spec, plan.inputs())?,
            resolution: default_resolution(plan.dim()),
            depth_limit: OTF_DEPTH_LIMIT,
        })
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn with_depth_limit(mut self, limit: usize) -> Self {
        self.depth_limit = limit;
        self
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn plan(&self) -> &SamplingPlan {
        self.plan
    }

    /// Root stream of this evaluator's plan.
    pub fn root_key(&self) -> StreamKey {
        StreamKey::new(self.plan.seed)
    }

    pub fn argmax(&self, q: &QCurve) -> (ControlPoint, f64) {
        argmax_qcurve(q, self.resolution)
    }

    /// Q-value curve with the given continuation, drawing grid point `u`'s
    /// samples from `key.child_coords(u)`.
    pub fn lambda(&self, x: &BeliefState, cont: Continuation<'_>, key: StreamKey) -> Result<QCurve> {
        self.estimate(x, 1, cont, key)
    }

    /// Nested estimate: depth 1 is [`Self::lambda`] with `terminal`; deeper
    /// levels use the maximum of the child curve at every sampled posterior.
    pub fn otf(&self, x: &BeliefState, depth: usize, terminal: Continuation<'_>, key: StreamKey) -> Result<QCurve> {
        if depth == 0 {
            return Err(Error::invalid("OTF depth must be at least 1"));
        }
        if depth > self.depth_limit {
            return Err(Error::BudgetExceeded(format!(
                "OTF depth {depth} exceeds the limit {}",
                self.depth_limit
            )));
        }
        self.estimate(x, depth, terminal, key)
    }

    fn estimate(&self, x: &BeliefState, depth: usize, terminal: Continuation<'_>, key: StreamKey) -> Result<QCurve> {
        x.check_basis(self.basis)?;
        let points: Vec<(f64, f64)> = self
            .plan
            .grid
            .par_iter()
            .map(|u| self.point(x, u, depth, terminal, key.child_coords(u.coords())))
            .collect::<Result<_>>()?;
        let (raw, point_se): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteQValue {
                grid_index: i,
                value: raw[i],
            });
        }
        let regressor = self.prepared.fit(raw.clone(), key.raw())?;
        Ok(QCurve {
            regressor,
            grid: self.plan.grid.clone(),
            raw,
            point_se,
        })
    }

    /// `(p^i, standard error)` at one grid point.
    fn point(
        &self,
        x: &BeliefState,
        u: &ControlPoint,
        depth: usize,
        terminal: Continuation<'_>,
        key: StreamKey,
    ) -> Result<(f64, f64)> {
        let plan = StepPlan::new(x, u, self.basis, self.noise)?;
        let m = plan.moments;
        let cost = self.gamma * upsilon_sd(m.m_beta, m.s_beta);
        let ns = self.plan.n_samples;
        let mut rng = key.rng();
        let obs: Vec<(f64, f64)> = (0..ns)
            .map(|_| {
                let zh: f64 = rng.sample(StandardNormal);
                let zt: f64 = rng.sample(StandardNormal);
                (m.m_alpha + m.s_alpha * zh, m.m_beta + m.s_beta * zt)
            })
            .collect();
        let scores = obs.iter().map(|&(h, _)| plan.posterior_score_at_u(h));
        let integrand: Vec<f64> = if depth > 1 {
            let mut out = Vec::with_capacity(ns);
            for (k, (&(h, t), s)) in obs.iter().zip(scores).enumerate() {
                let y = plan.posterior(h, t);
                let child = self.estimate(&y, depth - 1, terminal, key.child(k as u64))?;
                let (_, sup) = self.argmax(&child);
                out.push(s.max(sup));
            }
            out
        } else {
            match terminal {
                Continuation::None => scores.collect(),
                Continuation::Value { f, scale } => {
                    let vals = f.posterior_values(&plan, &obs);
                    scores.zip(vals).map(|(s, v)| s.max(scale * v)).collect()
                }
            }
        };
        let nf = ns as f64;
        let mean = integrand.iter().sum::<f64>() / nf;
        let se = if ns > 1 {
            let var = integrand.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        Ok((mean - cost, se))
    }
}

/// One-shot Q-value estimate with streams rooted at `plan.seed`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_estimate(
    x: &BeliefState,
    cont: Continuation<'_>,
    gamma: f64,
    plan: &SamplingPlan,
    basis: &BasisSet,
    noise: &NoiseModel,
    fit_spec: &RegressionSpec,
) -> Result<QCurve> {
    let ev = QEvaluator::new(basis, noise, gamma, plan, fit_spec)?;
    ev.lambda(x, cont, ev.root_key())
}

/// One-shot nested estimate with streams rooted at `plan.seed`.
#[allow(clippy::too_many_arguments)]
pub fn otf(
    x: &BeliefState,
    depth: usize,
    terminal: Continuation<'_>,
    gamma: f64,
    plan: &SamplingPlan,
    basis: &BasisSet,
    noise: &NoiseModel,
    fit_spec: &RegressionSpec,
) -> Result<QCurve> {
    let ev = QEvaluator::new(basis, noise, gamma, plan, fit_spec)?;
    ev.otf(x, depth, terminal, ev.root_key())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::{prop_assert, proptest};

    fn cubic_state() -> BeliefState {
        BeliefState::new(
            DVector::from_vec(vec![0.4, 0.1, -0.2, 0.1]),
            DMatrix::identity(4, 4),
            DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.64, 4.0, 4.0, 4.0])),
        )
        .unwrap()
    }

    #[test]
    fn upsilon_examples() {
        assert!((upsilon(0.0, 1.0).unwrap() - 0.398_942_3).abs() < 1e-7);
        assert!(upsilon(-5.0, 0.01).unwrap() <= 1e-8);
        assert!(upsilon(1.0, 0.0).is_err());
        assert!(upsilon(1.0, -1.0).is_err());
    }

    #[test]
    fn upsilon_matches_monte_carlo() {
        // Independent estimate of E[max(Y, 0)] for Y ~ N(1, 0.25).
        let mut rng = StreamKey::new(11).rng();
        let n = 2_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let v = (1.0 + 0.5 * z).max(0.0);
            s += v;
            s2 += v * v;
        }
        let nf = n as f64;
        let mean = s / nf;
        let se = ((s2 / nf - mean * mean) / nf).sqrt();
        let u = upsilon(1.0, 0.25).unwrap();
        assert!((u - mean).abs() <= 3.0 * se, "{u} vs {mean} +- {se}");
        assert!((u - 1.00425).abs() < 5e-5);
    }

    proptest! {
        #[test]
        fn upsilon_bounds_and_monotone(m in -20.0f64..20.0, s in 0.01f64..10.0, dm in 0.0f64..1.0, ds in 0.0f64..1.0) {
            let u = upsilon(m, s * s).unwrap();
            prop_assert!(u >= m.max(0.0));
            prop_assert!(upsilon(m + dm, s * s).unwrap() >= u);
            if m < 0.0 {
                prop_assert!(upsilon(m, (s + ds).powi(2)).unwrap() >= u * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn truth_state_has_no_mc_noise() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = BeliefState::truth(
            DVector::from_vec(vec![0.4, 0.1, -0.2, 0.1]),
            DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]),
        );
        let plan = SamplingPlan::default_for(1, 7, 3).unwrap();
        let q = lambda_estimate(&x, Continuation::None, 0.16, &plan, &basis, &noise, &RegressionSpec::smoothing_spline())
            .unwrap();
        for (u, p) in q.raw_points() {
            let phi = basis.eval_phi(u).unwrap();
            let psi = basis.eval_psi(u).unwrap();
            let want = x.mu_alpha().dot(&phi) - 0.16 * upsilon(x.mu_beta().dot(&psi), 0.01).unwrap();
            assert!((p - want).abs() < 1e-12);
        }
        assert!(q.pooled_se() < 1e-12);
    }

    #[test]
    fn constant_basis_matches_closed_form() {
        let basis = BasisSet::constant(1);
        let noise = NoiseModel::new(0.1, 0.2).unwrap();
        let x = BeliefState::new(
            DVector::from_element(1, 0.3),
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 0.4),
            DMatrix::from_element(1, 1, 0.3),
        )
        .unwrap();
        let plan = SamplingPlan::default_for(1, 50, 8).unwrap();
        let q = lambda_estimate(&x, Continuation::None, 0.7, &plan, &basis, &noise, &RegressionSpec::smoothing_spline())
            .unwrap();
        let mean = q.raw_values().iter().sum::<f64>() / q.raw_values().len() as f64;
        let want = 0.3 - 0.7 * upsilon(0.4, 0.3 + 0.04).unwrap();
        // The grid mean averages 101 independent estimates.
        let se = q.pooled_se() / (q.raw_values().len() as f64).sqrt();
        assert!((mean - want).abs() <= 3.0 * se, "{mean} vs {want}, se {se}");
    }

    #[test]
    fn grid_permutation_leaves_points_unchanged() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = cubic_state();
        let plan = SamplingPlan::default_for(1, 10, 42).unwrap();
        let mut rev = plan.clone();
        rev.grid.reverse();
        let spec = RegressionSpec::smoothing_spline();
        let a = lambda_estimate(&x, Continuation::None, 0.16, &plan, &basis, &noise, &spec).unwrap();
        let b = lambda_estimate(&x, Continuation::None, 0.16, &rev, &basis, &noise, &spec).unwrap();
        for (i, v) in a.raw_values().iter().enumerate() {
            let j = plan.grid.len() - 1 - i;
            assert_eq!(v.to_bits(), b.raw_values()[j].to_bits());
        }
    }

    #[test]
    fn worker_count_does_not_matter() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = cubic_state();
        let plan = SamplingPlan::default_for(1, 10, 42).unwrap();
        let spec = RegressionSpec::smoothing_spline();
        let v = |y: &BeliefState| y.mu_alpha()[0] + 0.1 * y.sigma_alpha()[(0, 0)];
        let run = || lambda_estimate(&x, Continuation::value(&v), 0.16, &plan, &basis, &noise, &spec).unwrap();
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(run);
        for (p, q) in a.raw_values().iter().zip(b.raw_values()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
        let u = ControlPoint::scalar(0.37).unwrap();
        assert_eq!(a.eval(&u).unwrap().to_bits(), b.eval(&u).unwrap().to_bits());
    }

    #[test]
    fn continuation_only_adds() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = cubic_state();
        let plan = SamplingPlan::default_for(1, 10, 5).unwrap();
        let spec = RegressionSpec::smoothing_spline();
        let v = |_: &BeliefState| 0.2;
        let a = lambda_estimate(&x, Continuation::None, 0.16, &plan, &basis, &noise, &spec).unwrap();
        let b = lambda_estimate(&x, Continuation::value(&v), 0.16, &plan, &basis, &noise, &spec).unwrap();
        // Shared streams make the comparison pathwise.
        for (p, q) in a.raw_values().iter().zip(b.raw_values()) {
            assert!(q >= p);
        }
    }

    #[test]
    fn argmax_examples() {
        let plan = SamplingPlan::default_for(1, 1, 0).unwrap();
        let xs: Vec<Vec<f64>> = plan.grid.iter().map(|u| u.coords().to_vec()).collect();
        let fit = |ys: Vec<f64>| QCurve {
            regressor: crate::regress::fit(&RegressionSpec::smoothing_spline(), xs.clone(), ys.clone(), 0).unwrap(),
            grid: plan.grid.clone(),
            raw: ys,
            point_se: vec![0.0; 101],
        };
        let parabola = fit(xs.iter().map(|x| 1.0 - (x[0] - 0.6).powi(2)).collect());
        let (u, _) = argmax_qcurve(&parabola, 1001);
        assert!((u.coords()[0] - 0.6).abs() <= 0.001);
        let flat = fit(vec![0.25; 101]);
        let (u, v) = argmax_qcurve(&flat, 1001);
        assert_eq!(u.coords(), &[0.0]);
        assert!((v - 0.25).abs() < 1e-12);
        let (u, _) = argmax_qcurve(&parabola, 101);
        let scaled = u.coords()[0] * 100.0;
        assert!((scaled - scaled.round()).abs() < 1e-9);
        // too coarse a resolution is raised to the grid size
        let (u, _) = argmax_qcurve(&parabola, 3);
        assert!((u.coords()[0] - 0.6).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn argmax_2d_lexicographic_ties() {
        let plan = SamplingPlan::default_for(2, 1, 0).unwrap();
        let xs: Vec<Vec<f64>> = plan.grid.iter().map(|u| u.coords().to_vec()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -(x[0] - 0.3).powi(2) - (x[1] - 0.8).powi(2)).collect();
        let q = QCurve {
            regressor: crate::regress::fit(&RegressionSpec::thin_plate(), xs, ys, 0).unwrap(),
            grid: plan.grid.clone(),
            raw: vec![0.0; 441],
            point_se: vec![0.0; 441],
        };
        let (u, _) = argmax_qcurve(&q, 101);
        assert!((u.coords()[0] - 0.3).abs() <= 0.011 && (u.coords()[1] - 0.8).abs() <= 0.011);
        let flat = QCurve {
            regressor: crate::regress::fit(&RegressionSpec::PolynomialRidge { degree: 0, lambda: 0.0 }, q.regressor.inputs().to_vec(), vec![1.0; 441], 0).unwrap(),
            ..q
        };
        assert_eq!(argmax_qcurve(&flat, 101).0.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn otf_depth_one_is_lambda() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = cubic_state();
        let plan = SamplingPlan::default_for(1, 5, 9).unwrap();
        let spec = RegressionSpec::smoothing_spline();
        let a = lambda_estimate(&x, Continuation::None, 0.16, &plan, &basis, &noise, &spec).unwrap();
        let b = otf(&x, 1, Continuation::None, 0.16, &plan, &basis, &noise, &spec).unwrap();
        for (p, q) in a.raw_values().iter().zip(b.raw_values()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
        assert!(matches!(
            otf(&x, 4, Continuation::None, 0.16, &plan, &basis, &noise, &spec),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn otf_depth_two_at_truth_only_adds_cost() {
        let basis = BasisSet::constant(1);
        let noise = NoiseModel::new(0.1, 0.1).unwrap();
        let x = BeliefState::truth(DVector::from_element(1, 0.5), DVector::from_element(1, 0.3));
        let plan = SamplingPlan::lattice(1, 11, 4, 1).unwrap();
        let spec = RegressionSpec::smoothing_spline();
        let ev = QEvaluator::new(&basis, &noise, 0.2, &plan, &spec).unwrap();
        let (_, v1) = ev.argmax(&ev.otf(&x, 1, Continuation::None, ev.root_key()).unwrap());
        let (_, v2) = ev.argmax(&ev.otf(&x, 2, Continuation::None, ev.root_key()).unwrap());
        let bound = 0.2 * upsilon(0.3, 0.01).unwrap();
        assert!((v1 - v2).abs() <= bound + 1e-9, "{v1} {v2} {bound}");
    }

    #[test]
    fn raw_csv_has_header_and_rows() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let plan = SamplingPlan::lattice(1, 5, 2, 0).unwrap();
        let q = lambda_estimate(&cubic_state(), Continuation::None, 0.16, &plan, &basis, &noise, &RegressionSpec::smoothing_spline())
            .unwrap();
        let csv = q.raw_csv();
        assert!(csv.starts_with("u1,p\n0,"));
        assert_eq!(csv.lines().count(), 6);
    }
}
