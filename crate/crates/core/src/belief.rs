//! Gaussian beliefs over the score and cost coefficients.
//!
//! The score coefficients `alpha` and cost coefficients `beta` are a priori
//! independent Gaussians, and each observation `(h, t)` at control `u` is a
//! scalar linear-Gaussian measurement of `alpha . phi(u)` and
//! `beta . psi(u)`. The posterior therefore stays Gaussian and is carried as
//! the 4-tuple `(mu_alpha, Sigma_alpha, mu_beta, Sigma_beta)`.
//!
//! Covariances are updated with the inversion-free rank-one form
//! `S1 = S - S f f' S / (f' S f + sigma^2)`, which is well defined for
//! singular (including zero) covariance matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, ControlPoint};
use crate::error::{Error, Result};

/// Largest asymmetry accepted when constructing a state.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated (and clamped to zero).
pub const EIGEN_TOL: f64 = 1e-10;
/// Clamps larger than this are reported by [`BeliefState::sanitize`].
pub const CLAMP_FLAG: f64 = 1e-8;

/// Observation noise standard deviations, constant in the control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_h: f64,
    pub sigma_t: f64,
}

impl NoiseModel {
    pub fn new(sigma_h: f64, sigma_t: f64) -> Result<Self> {
        let n = NoiseModel { sigma_h, sigma_t };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_h > 0.0 && self.sigma_h.is_finite() && self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::invalid(format!(
                "noise levels must be positive and finite, got sigma_h={}, sigma_t={}",
                self.sigma_h, self.sigma_t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeliefRecord", into = "BeliefRecord")]
pub struct BeliefState {
    mu_alpha: DVector<f64>,
    sigma_alpha: DMatrix<f64>,
    mu_beta: DVector<f64>,
    sigma_beta: DMatrix<f64>,
}

/// On-disk layout: explicit `j`, `k` and row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub j: usize,
    pub k: usize,
    pub mu_alpha: Vec<f64>,
    pub sigma_alpha: Vec<f64>,
    pub mu_beta: Vec<f64>,
    pub sigma_beta: Vec<f64>,
}

impl TryFrom<BeliefRecord> for BeliefState {
    type Error = Error;
    fn try_from(r: BeliefRecord) -> Result<Self> {
        if r.mu_alpha.len() != r.j || r.sigma_alpha.len() != r.j * r.j {
            return Err(Error::invalid(format!("belief record: alpha block does not match j={}", r.j)));
        }
        if r.mu_beta.len() != r.k || r.sigma_beta.len() != r.k * r.k {
            return Err(Error::invalid(format!("belief record: beta block does not match k={}", r.k)));
        }
        BeliefState::new(
            DVector::from_vec(r.mu_alpha),
            DMatrix::from_row_slice(r.j, r.j, &r.sigma_alpha),
            DVector::from_vec(r.mu_beta),
            DMatrix::from_row_slice(r.k, r.k, &r.sigma_beta),
        )
    }
}

impl From<BeliefState> for BeliefRecord {
    fn from(x: BeliefState) -> Self {
        BeliefRecord {
            j: x.n_score(),
            k: x.n_cost(),
            mu_alpha: x.mu_alpha.as_slice().to_vec(),
            sigma_alpha: row_major(&x.sigma_alpha),
            mu_beta: x.mu_beta.as_slice().to_vec(),
            sigma_beta: row_major(&x.sigma_beta),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl BeliefState {
    /// Validating constructor: finite entries, square symmetric covariances
    /// and eigenvalues no lower than `-EIGEN_TOL` (those are clamped).
    pub fn new(
        mu_alpha: DVector<f64>,
        sigma_alpha: DMatrix<f64>,
        mu_beta: DVector<f64>,
        sigma_beta: DMatrix<f64>,
    ) -> Result<Self> {
        let sa = check_block("alpha", &mu_alpha, sigma_alpha)?;
        let sb = check_block("beta", &mu_beta, sigma_beta)?;
        Ok(BeliefState {
            mu_alpha,
            sigma_alpha: sa,
            mu_beta,
            sigma_beta: sb,
        })
    }

    /// A state with both covariances zero.
    pub fn truth(mu_alpha: DVector<f64>, mu_beta: DVector<f64>) -> Self {
        let j = mu_alpha.len();
        let k = mu_beta.len();
        BeliefState {
            mu_alpha,
            sigma_alpha: DMatrix::zeros(j, j),
            mu_beta,
            sigma_beta: DMatrix::zeros(k, k),
        }
    }

    pub(crate) fn from_parts_unchecked(
        mu_alpha: DVector<f64>,
        sigma_alpha: DMatrix<f64>,
        mu_beta: DVector<f64>,
        sigma_beta: DMatrix<f64>,
    ) -> Self {
        BeliefState {
            mu_alpha,
            sigma_alpha,
            mu_beta,
            sigma_beta,
        }
    }

    pub fn mu_alpha(&self) -> &DVector<f64> {
        &self.mu_alpha
    }
    pub fn sigma_alpha(&self) -> &DMatrix<f64> {
        &self.sigma_alpha
    }
    pub fn mu_beta(&self) -> &DVector<f64> {
        &self.mu_beta
    }
    pub fn sigma_beta(&self) -> &DMatrix<f64> {
        &self.sigma_beta
    }
    pub fn n_score(&self) -> usize {
        self.mu_alpha.len()
    }
    pub fn n_cost(&self) -> usize {
        self.mu_beta.len()
    }

    pub fn is_truth(&self) -> bool {
        self.sigma_alpha.iter().all(|v| *v == 0.0) && self.sigma_beta.iter().all(|v| *v == 0.0)
    }

    /// Same means, both covariances multiplied by `factor`.
    pub fn scale_covariances(&self, factor: f64) -> Self {
        BeliefState {
            mu_alpha: self.mu_alpha.clone(),
            sigma_alpha: &self.sigma_alpha * factor,
            mu_beta: self.mu_beta.clone(),
            sigma_beta: &self.sigma_beta * factor,
        }
    }

    pub fn check_basis(&self, basis: &BasisSet) -> Result<()> {
        if self.n_score() != basis.n_score() || self.n_cost() != basis.n_cost() {
            return Err(Error::invalid(format!(
                "belief has (J, K) = ({}, {}), basis has ({}, {})",
                self.n_score(),
                self.n_cost(),
                basis.n_score(),
                basis.n_cost()
            )));
        }
        Ok(())
    }

    /// Re-symmetrise and clamp negative eigenvalues of both covariances.
    ///
    /// Returns the repaired state and the largest clamp applied; a clamp above
    /// [`CLAMP_FLAG`] is logged as a warning.
    pub fn sanitize(&self) -> (BeliefState, f64) {
        let (sa, ca) = clamp_psd(&self.sigma_alpha);
        let (sb, cb) = clamp_psd(&self.sigma_beta);
        let clamp = ca.max(cb);
        if clamp > CLAMP_FLAG {
            log::warn!("belief covariance needed an eigenvalue clamp of {clamp:.3e}");
        }
        (
            BeliefState {
                mu_alpha: self.mu_alpha.clone(),
                sigma_alpha: sa,
                mu_beta: self.mu_beta.clone(),
                sigma_beta: sb,
            },
            clamp,
        )
    }
}

fn check_block(name: &str, mu: &DVector<f64>, sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mu.len();
    if n == 0 {
        return Err(Error::invalid(format!("{name}: empty mean vector")));
    }
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::invalid(format!(
            "{name}: covariance is {}x{}, mean has length {n}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name}: non-finite entry")));
    }
    let asym = (&sigma - sigma.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::invalid(format!("{name}: covariance asymmetric by {asym:.3e}")));
    }
    let sym = symmetrize(sigma);
    let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -EIGEN_TOL {
        return Err(Error::invalid(format!(
            "{name}: covariance not positive semi-definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    if min_eig < 0.0 {
        Ok(clamp_psd(&sym).0)
    } else {
        Ok(sym)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn clamp_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = symmetrize(m.clone()).symmetric_eigen();
    let worst = eig.eigenvalues.min();
    if worst >= 0.0 {
        return (symmetrize(m.clone()), 0.0);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    (symmetrize(rebuilt), -worst)
}

/// Moments of the one-step predictive distribution of `(h, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMoments {
    pub m_alpha: f64,
    pub s_alpha: f64,
    pub m_beta: f64,
    pub s_beta: f64,
}

/// The part of a Kalman step that does not depend on the observation.
///
/// For a fixed state and control the posterior covariances and the gains are
/// shared by every possible observation; only the means move.
#[derive(Debug, Clone)]
pub struct StepPlan<'a> {
    prior: &'a BeliefState,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub moments: PredictiveMoments,
    gain_alpha: DVector<f64>,
    gain_beta: DVector<f64>,
    sigma_alpha1: DMatrix<f64>,
    sigma_beta1: DMatrix<f64>,
    /// `phi' gain_alpha`: sensitivity of the posterior mean score at `u` to the innovation.
    score_sensitivity: f64,
}

struct Block {
    mean: f64,
    var: f64,
    gain: DVector<f64>,
    cov1: DMatrix<f64>,
}

fn plan_block(mu: &DVector<f64>, sigma: &DMatrix<f64>, f: &DVector<f64>, noise_var: f64) -> Result<Block> {
    let sf = sigma * f;
    let quad = f.dot(&sf);
    if quad < -EIGEN_TOL * (1.0 + f.norm_squared()) {
        return Err(Error::NumericalDegeneracy(format!(
            "negative predictive variance component {quad:.3e}"
        )));
    }
    let quad = quad.max(0.0);
    let denom = quad + noise_var;
    let cov1 = symmetrize(sigma - (&sf * sf.transpose()) / denom);
    let gain = sf / denom;
    Ok(Block {
        mean: mu.dot(f),
        var: denom,
        gain,
        cov1,
    })
}

impl<'a> StepPlan<'a> {
    pub fn new(x: &'a BeliefState, u: &ControlPoint, basis: &BasisSet, noise: &NoiseModel) -> Result<Self> {
        x.check_basis(basis)?;
        let phi = basis.eval_phi(u)?;
        let psi = basis.eval_psi(u)?;
        let a = plan_block(&x.mu_alpha, &x.sigma_alpha, &phi, noise.sigma_h * noise.sigma_h)?;
        let b = plan_block(&x.mu_beta, &x.sigma_beta, &psi, noise.sigma_t * noise.sigma_t)?;
        let score_sensitivity = phi.dot(&a.gain);
        Ok(StepPlan {
            prior: x,
            moments: PredictiveMoments {
                m_alpha: a.mean,
                s_alpha: a.var.sqrt(),
                m_beta: b.mean,
                s_beta: b.var.sqrt(),
            },
            phi,
            psi,
            gain_alpha: a.gain,
            gain_beta: b.gain,
            sigma_alpha1: a.cov1,
            sigma_beta1: b.cov1,
            score_sensitivity,
        })
    }

    pub fn posterior_mu_alpha(&self, h: f64) -> DVector<f64> {
        &self.prior.mu_alpha + &self.gain_alpha * (h - self.moments.m_alpha)
    }

    pub fn posterior_mu_beta(&self, t: f64) -> DVector<f64> {
        &self.prior.mu_beta + &self.gain_beta * (t - self.moments.m_beta)
    }

    /// `m_alpha(u, y)` for the posterior `y` after observing score `h` at `u`.
    #[inline]
    pub fn posterior_score_at_u(&self, h: f64) -> f64 {
        self.moments.m_alpha + self.score_sensitivity * (h - self.moments.m_alpha)
    }

    pub fn posterior_sigma_alpha(&self) -> &DMatrix<f64> {
        &self.sigma_alpha1
    }

    pub fn posterior_sigma_beta(&self) -> &DMatrix<f64> {
        &self.sigma_beta1
    }

    pub fn posterior(&self, h: f64, t: f64) -> BeliefState {
        BeliefState::from_parts_unchecked(
            self.posterior_mu_alpha(h),
            self.sigma_alpha1.clone(),
            self.posterior_mu_beta(t),
            self.sigma_beta1.clone(),
        )
    }
}

pub fn kalman_update(
    x: &BeliefState,
    u: &ControlPoint,
    h: f64,
    t: f64,
    basis: &BasisSet,
    noise: &NoiseModel,
) -> Result<BeliefState> {
    if !h.is_finite() || !t.is_finite() {
        return Err(Error::InvalidObservation(format!("non-finite observation h={h}, t={t}")));
    }
    Ok(StepPlan::new(x, u, basis, noise)?.posterior(h, t))
}

pub fn predictive_moments(
    x: &BeliefState,
    u: &ControlPoint,
    basis: &BasisSet,
    noise: &NoiseModel,
) -> Result<PredictiveMoments> {
    x.check_basis(basis)?;
    let phi = basis.eval_phi(u)?;
    let psi = basis.eval_psi(u)?;
    let var = |sigma: &DMatrix<f64>, f: &DVector<f64>, noise_var: f64| -> Result<f64> {
        let q = f.dot(&(sigma * f));
        if q < -EIGEN_TOL * (1.0 + f.norm_squared()) {
            return Err(Error::NumericalDegeneracy(format!("negative predictive variance component {q:.3e}")));
        }
        Ok(q.max(0.0) + noise_var)
    };
    Ok(PredictiveMoments {
        m_alpha: x.mu_alpha.dot(&phi),
        s_alpha: var(&x.sigma_alpha, &phi, noise.sigma_h * noise.sigma_h)?.sqrt(),
        m_beta: x.mu_beta.dot(&psi),
        s_beta: var(&x.sigma_beta, &psi, noise.sigma_t * noise.sigma_t)?.sqrt(),
    })
}

/// One simulated step of the observable Markov chain.
#[derive(Debug, Clone)]
pub struct Transition {
    pub h: f64,
    pub t: f64,
    pub next: BeliefState,
}

/// Draw `(h, t)` from the predictive normals (score first, then cost) and
/// apply the filter.
pub fn sample_transition<R: Rng + ?Sized>(
    x: &BeliefState,
    u: &ControlPoint,
    basis: &BasisSet,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Transition> {
    let plan = StepPlan::new(x, u, basis, noise)?;
    let m = plan.moments;
    let zh: f64 = rng.sample(StandardNormal);
    let zt: f64 = rng.sample(StandardNormal);
    let h = m.m_alpha + m.s_alpha * zh;
    let t = m.m_beta + m.s_beta * zt;
    Ok(Transition {
        h,
        t,
        next: plan.posterior(h, t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn scalar_state(ma: f64, sa: f64, mb: f64, sb: f64) -> BeliefState {
        BeliefState::new(
            DVector::from_element(1, ma),
            DMatrix::from_element(1, 1, sa),
            DVector::from_element(1, mb),
            DMatrix::from_element(1, 1, sb),
        )
        .unwrap()
    }

    fn u(v: f64) -> ControlPoint {
        ControlPoint::scalar(v).unwrap()
    }

    #[test]
    fn conjugate_scalar_update() {
        let basis = BasisSet::constant(1);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let x = scalar_state(0.0, 1.0, 0.0, 1.0);
        let y = kalman_update(&x, &u(0.3), 1.0, 0.0, &basis, &noise).unwrap();
        assert!((y.mu_alpha()[0] - 0.5).abs() < 1e-15);
        assert!((y.sigma_alpha()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_mean_shrinks_cov() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = BeliefState::new(
            DVector::from_vec(vec![0.4, 0.1, -0.2, 0.1]),
            DMatrix::identity(4, 4),
            DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.64, 4.0, 4.0, 4.0])),
        )
        .unwrap();
        let uu = u(0.8);
        let m = predictive_moments(&x, &uu, &basis, &noise).unwrap();
        let y = kalman_update(&x, &uu, m.m_alpha, m.m_beta, &basis, &noise).unwrap();
        assert!((y.mu_alpha() - x.mu_alpha()).amax() < 1e-15);
        assert!(y.sigma_alpha().trace() < x.sigma_alpha().trace());
    }

    #[test]
    fn truth_ignores_observations() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = BeliefState::truth(DVector::from_vec(vec![0.4, 0.0, 0.0, 0.0]), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let y = kalman_update(&x, &u(0.2), 7.0, -3.0, &basis, &noise).unwrap();
        assert_eq!(y, x);
        assert!(y.is_truth());
    }

    #[test]
    fn predictive_examples() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let truth = BeliefState::truth(DVector::from_vec(vec![0.4, 0.1, -0.2, 0.1]), DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]));
        let m = predictive_moments(&truth, &u(0.9), &basis, &noise).unwrap();
        assert_eq!(m.s_alpha, 0.05);
        assert_eq!(m.s_beta, 0.1);
        let m = predictive_moments(&truth, &u(0.5), &basis, &noise).unwrap();
        assert!((m.m_alpha - 0.4).abs() < 1e-15);

        let c = BasisSet::constant(1);
        let x = scalar_state(0.0, 0.75, 0.0, 1.0);
        let m = predictive_moments(&x, &u(0.1), &c, &NoiseModel::new(0.5, 1.0).unwrap()).unwrap();
        assert!((m.s_alpha - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let basis = BasisSet::constant(1);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let x = scalar_state(0.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            kalman_update(&x, &u(0.1), f64::NAN, 0.0, &basis, &noise),
            Err(Error::InvalidObservation(_))
        ));
        assert!(matches!(
            kalman_update(&x, &u(0.1), 0.0, 0.0, &BasisSet::cubic_1d(), &noise),
            Err(Error::InvalidArgument(_))
        ));
        assert!(NoiseModel::new(0.0, 1.0).is_err());
        let bad = BeliefState::new(
            DVector::from_element(2, 0.0),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DVector::from_element(1, 0.0),
            DMatrix::identity(1, 1),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let sa = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-11]);
        let x = BeliefState::new(DVector::zeros(2), sa, DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let min = x.sigma_alpha().clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-15);
        let (_, clamp) = x.sanitize();
        assert!(clamp < CLAMP_FLAG);
    }

    #[test]
    fn record_roundtrip() {
        let x = BeliefState::new(
            DVector::from_vec(vec![0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0]),
            DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert!(s.contains("\"j\":2") && s.contains("\"sigma_alpha\":[2.0,0.5,0.5,1.0]"));
        let back: BeliefState = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let basis = BasisSet::cubic_1d();
        let noise = NoiseModel::new(0.05, 0.1).unwrap();
        let x = BeliefState::new(
            DVector::from_vec(vec![0.4, 0.1, -0.2, 0.1]),
            DMatrix::identity(4, 4),
            DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]),
            DMatrix::identity(4, 4),
        )
        .unwrap();
        let a = sample_transition(&x, &u(0.3), &basis, &noise, &mut StreamKey::new(5).rng()).unwrap();
        let b = sample_transition(&x, &u(0.3), &basis, &noise, &mut StreamKey::new(5).rng()).unwrap();
        assert_eq!(a.h.to_bits(), b.h.to_bits());
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.next, b.next);
    }
}
