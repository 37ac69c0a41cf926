//! Value maps: learnt approximations of the optimal value over belief states.
//!
//! A map is built by backward induction over a cloud of belief states. Level 1
//! is the value of stopping after exactly one more epoch; level `n + 1` is the
//! best Q-value when continuing with level `n`. Each level is a regressor over
//! a fixed featurisation of the belief state.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, ControlPoint};
use crate::belief::{BeliefState, NoiseModel, StepPlan};
use crate::error::{Error, Result};
use crate::qvalue::{Continuation, QEvaluator, SamplingPlan, ValueFunction};
use crate::regress::{prepare, FittedRegressor, RegressionSpec};
use crate::rng::{label, StreamKey};

/// Layout version of [`featurize`].
pub const FEATURIZATION_VERSION: u32 = 1;
/// Version of the on-disk map archive.
pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "autobct-value-map";
const COVARIANCE_RETRIES: usize = 100;

/// Number of features for `J` score and `K` cost coefficients.
pub fn feature_len(j: usize, k: usize) -> usize {
    j + k + j * (j + 1) / 2 + k * (k + 1) / 2
}

/// `mu_alpha`, `mu_beta`, then the row-major upper triangles of
/// `Sigma_alpha` and `Sigma_beta`.
pub fn featurize(x: &BeliefState) -> Vec<f64> {
    let (j, k) = (x.n_score(), x.n_cost());
    let mut f = Vec::with_capacity(feature_len(j, k));
    f.extend(x.mu_alpha().iter());
    f.extend(x.mu_beta().iter());
    push_upper(&mut f, x.sigma_alpha());
    push_upper(&mut f, x.sigma_beta());
    f
}

fn push_upper(f: &mut Vec<f64>, m: &DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in r..n {
            f.push(m[(r, c)]);
        }
    }
}

fn read_upper(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut i = 0;
    for r in 0..n {
        for c in r..n {
            m[(r, c)] = v[i];
            m[(c, r)] = v[i];
            i += 1;
        }
    }
    m
}

/// Inverse of [`featurize`].
pub fn unfeaturize(f: &[f64], j: usize, k: usize) -> Result<BeliefState> {
    if f.len() != feature_len(j, k) {
        return Err(Error::invalid(format!(
            "expected {} features for (J, K) = ({j}, {k}), got {}",
            feature_len(j, k),
            f.len()
        )));
    }
    let tj = j * (j + 1) / 2;
    BeliefState::new(
        DVector::from_column_slice(&f[..j]),
        read_upper(&f[j + k..j + k + tj], j),
        DVector::from_column_slice(&f[j..j + k]),
        read_upper(&f[j + k + tj..], k),
    )
}

/// Symmetric square root `R` with `R R' = m` for a PSD matrix.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Scale matrix of the Wishart-style covariance draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceScale {
    /// The centre state's covariance, so draws average to it.
    #[default]
    Centre,
    Identity,
}

/// Propagation of sampled ground truths through the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentConfig {
    pub n_shapes: usize,
    pub depth: usize,
    /// Control grid walked at every node.
    pub grid: Vec<ControlPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudConfig {
    /// Number of sampled `(mu, Sigma)` pairs.
    pub n_c: usize,
    /// Covariance scalings `k / K`, `k = 0..=K`.
    pub k: usize,
    /// Centre of the mean law and (by default) the covariance scale.
    pub centre: BeliefState,
    #[serde(default = "one")]
    pub mean_sd: f64,
    #[serde(default)]
    pub covariance_scale: CovarianceScale,
    /// Degrees of freedom of the score and cost covariance draws; default J and K.
    #[serde(default)]
    pub dof: Option<(usize, usize)>,
    #[serde(default)]
    pub enrichment: Option<EnrichmentConfig>,
}

fn one() -> f64 {
    1.0
}

impl CloudConfig {
    /// `n_c` samples at `k + 1` scales, no enrichment.
    pub fn new(centre: BeliefState, n_c: usize, k: usize) -> Self {
        CloudConfig {
            n_c,
            k,
            centre,
            mean_sd: 1.0,
            covariance_scale: CovarianceScale::Centre,
            dof: None,
            enrichment: None,
        }
    }

    pub fn with_enrichment(mut self, n_shapes: usize, depth: usize, grid: Vec<ControlPoint>) -> Self {
        self.enrichment = Some(EnrichmentConfig { n_shapes, depth, grid });
        self
    }

    /// Desk-scale defaults: 300 samples, K = 4, 10 shapes to depth 3 on a
    /// 5-point-per-axis grid. About 3,000 states for one control.
    pub fn desk(centre: BeliefState, p: usize) -> Result<Self> {
        let grid = SamplingPlan::lattice(p, 5, 1, 0)?.grid;
        Ok(CloudConfig::new(centre, 300, 4).with_enrichment(10, 3, grid))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudProvenance {
    pub config: CloudConfig,
    pub seed: u64,
    pub basis: BasisSet,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cloud {
    pub states: Vec<BeliefState>,
    pub truth_count: usize,
    pub provenance: CloudProvenance,
}

impl Cloud {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Wrap explicit states (for tests and hand-made clouds).
    pub fn from_states(states: Vec<BeliefState>, basis: &BasisSet, noise: &NoiseModel) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("cloud must contain at least one state"));
        }
        for x in &states {
            x.check_basis(basis)?;
        }
        let truth_count = states.iter().filter(|x| x.is_truth()).count();
        let centre = states[0].clone();
        Ok(Cloud {
            states,
            truth_count,
            provenance: CloudProvenance {
                config: CloudConfig::new(centre, 0, 0),
                seed: 0,
                basis: basis.clone(),
                noise: *noise,
            },
        })
    }
}

fn sample_covariance<R: Rng>(scale_root: &DMatrix<f64>, dof: usize, rng: &mut R) -> DMatrix<f64> {
    let n = scale_root.nrows();
    let mut w = DMatrix::zeros(n, n);
    for _ in 0..dof {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = scale_root * z;
        w += &v * v.transpose();
    }
    w / dof as f64
}

fn sample_block<R: Rng>(
    name: &str,
    centre_mu: &DVector<f64>,
    root: &DMatrix<f64>,
    dof: usize,
    mean_sd: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = centre_mu.len();
    let mu = DVector::from_fn(n, |i, _| centre_mu[i] + mean_sd * rng.sample::<f64, _>(StandardNormal));
    for _ in 0..COVARIANCE_RETRIES {
        let s = sample_covariance(root, dof, rng);
        let s = (&s + s.transpose()) * 0.5;
        if s.iter().all(|v| v.is_finite()) && s.clone().symmetric_eigen().eigenvalues.min() >= -1e-10 {
            return Ok((mu, s));
        }
    }
    Err(Error::NumericalDegeneracy(format!(
        "{name} covariance draw failed {COVARIANCE_RETRIES} times"
    )))
}

/// Sample the scaled family and append enrichment paths.
pub fn build_cloud(config: &CloudConfig, basis: &BasisSet, noise: &NoiseModel, seed: u64) -> Result<Cloud> {
    if config.n_c == 0 {
        return Err(Error::invalid("N_c must be at least 1"));
    }
    if !(config.mean_sd >= 0.0 && config.mean_sd.is_finite()) {
        return Err(Error::invalid("mean_sd must be finite and non-negative"));
    }
    noise.validate()?;
    let centre = &config.centre;
    centre.check_basis(basis)?;
    let (j, k) = (basis.n_score(), basis.n_cost());
    let (dof_a, dof_b) = config.dof.unwrap_or((j, k));
    if dof_a == 0 || dof_b == 0 {
        return Err(Error::invalid("covariance degrees of freedom must be positive"));
    }
    let (root_a, root_b) = match config.covariance_scale {
        CovarianceScale::Centre => (psd_sqrt(centre.sigma_alpha()), psd_sqrt(centre.sigma_beta())),
        CovarianceScale::Identity => (DMatrix::identity(j, j), DMatrix::identity(k, k)),
    };
    let root = StreamKey::new(seed).child(label::CLOUD);
    let mut states = Vec::with_capacity(config.n_c * (config.k + 1));
    for i in 0..config.n_c {
        let mut rng = root.child(i as u64).rng();
        let (ma, sa) = sample_block("score", centre.mu_alpha(), &root_a, dof_a, config.mean_sd, &mut rng)?;
        let (mb, sb) = sample_block("cost", centre.mu_beta(), &root_b, dof_b, config.mean_sd, &mut rng)?;
        let base = BeliefState::new(ma, sa, mb, sb)?;
        for kk in 0..=config.k {
            if kk == 0 {
                states.push(BeliefState::truth(base.mu_alpha().clone(), base.mu_beta().clone()));
            } else {
                states.push(base.scale_covariances(kk as f64 / config.k as f64));
            }
        }
    }
    if let Some(e) = &config.enrichment {
        states.extend(enrich(centre, e, basis, noise, seed)?);
    }
    let truth_count = states.iter().filter(|x| x.is_truth()).count();
    Ok(Cloud {
        states,
        truth_count,
        provenance: CloudProvenance {
            config: config.clone(),
            seed,
            basis: basis.clone(),
            noise: *noise,
        },
    })
}

/// Least-squares coefficients of `g` in the given terms, fitted on a fine lattice.
fn project<F: Fn(&[f64]) -> f64>(basis_terms: &[crate::basis::Term], p: usize, g: F) -> DVector<f64> {
    let pts = SamplingPlan::lattice(p, if p == 1 { 101 } else { 21 }, 1, 0)
        .expect("static lattice")
        .grid;
    let a = DMatrix::from_fn(pts.len(), basis_terms.len(), |r, c| {
        crate::basis::eval_terms(&basis_terms[c..c + 1], pts[r].coords())[0]
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|u| g(u.coords())));
    let svd = a.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    svd.solve(&b, tol).expect("SVD computed with both factors")
}

/// Ground truth drawn for one enrichment path.
#[derive(Debug, Clone)]
pub struct SampledShape {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

/// Random unimodal score (concave quadratic with peak in `[0.1, 0.9]^p`) and
/// increasing positive cost, projected onto the basis.
pub fn sample_shape<R: Rng>(basis: &BasisSet, rng: &mut R) -> SampledShape {
    let p = basis.dim_control();
    let peak: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..0.9)).collect();
    let top = rng.random_range(0.5..1.0);
    let curv = rng.random_range(0.3..1.5);
    let base_cost = rng.random_range(0.02..0.3);
    let slope = rng.random_range(0.2..1.0);
    let score = |u: &[f64]| top - curv * u.iter().zip(&peak).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let cost = |u: &[f64]| base_cost + slope * u.iter().sum::<f64>() / p as f64;
    SampledShape {
        alpha: project(basis.score_terms(), p, score),
        beta: project(basis.cost_terms(), p, cost),
    }
}

fn enrich(
    start: &BeliefState,
    cfg: &EnrichmentConfig,
    basis: &BasisSet,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<BeliefState>> {
    if cfg.n_shapes == 0 || cfg.depth == 0 {
        return Ok(Vec::new());
    }
    if cfg.grid.is_empty() {
        return Err(Error::invalid("enrichment grid is empty"));
    }
    let root = StreamKey::new(seed).child(label::ENRICH);
    let mut out = Vec::new();
    for s in 0..cfg.n_shapes {
        let key = root.child(s as u64);
        let shape = sample_shape(basis, &mut key.child(0).rng());
        let mut rng = key.child(1).rng();
        // Depth-first over the control tree; children in grid order.
        let mut stack: Vec<(BeliefState, usize)> = vec![(start.clone(), 0)];
        let mut visited = Vec::new();
        while let Some((x, d)) = stack.pop() {
            if d == cfg.depth {
                continue;
            }
            let mut children = Vec::with_capacity(cfg.grid.len());
            for u in &cfg.grid {
                let plan = StepPlan::new(&x, u, basis, noise)?;
                let h = shape.alpha.dot(&plan.phi) + noise.sigma_h * rng.sample::<f64, _>(StandardNormal);
                let t = shape.beta.dot(&plan.psi) + noise.sigma_t * rng.sample::<f64, _>(StandardNormal);
                children.push(plan.posterior(h, t));
            }
            for c in children.into_iter().rev() {
                visited.push(c.clone());
                stack.push((c, d + 1));
            }
        }
        out.extend(visited);
    }
    Ok(out)
}

/// Everything needed to rebuild a map and to check it fits a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub format_version: u32,
    pub featurization_version: u32,
    pub gamma: f64,
    pub noise: NoiseModel,
    pub basis: BasisSet,
    pub dim_control: usize,
    pub depth: usize,
    pub plan: SamplingPlan,
    pub qfit: RegressionSpec,
    pub vfit: RegressionSpec,
    pub resolution: usize,
    pub cloud: CloudProvenance,
    pub cloud_size: usize,
    pub truth_count: usize,
}

impl MapMetadata {
    /// Short descriptor used in incompatibility errors.
    pub fn descriptor(&self) -> String {
        format!(
            "p={}, J={}, K={}, gamma={}, N={}, format v{}, features v{}",
            self.dim_control,
            self.basis.n_score(),
            self.basis.n_cost(),
            self.gamma,
            self.depth,
            self.format_version,
            self.featurization_version
        )
    }
}

/// Per-level diagnostics collected during a build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub mean_target: f64,
    pub min_target: f64,
    pub max_target: f64,
    pub mean_target_se: f64,
    pub fit_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueMap {
    pub metadata: MapMetadata,
    levels: Vec<FittedRegressor>,
    /// Monte Carlo standard error of each training target, per level.
    target_se: Vec<Vec<f64>>,
    reports: Vec<LevelReport>,
}

/// One level of a map viewed as a value function.
#[derive(Clone, Copy)]
pub struct LevelValue<'a> {
    reg: &'a FittedRegressor,
    j: usize,
    k: usize,
}

impl LevelValue<'_> {
    pub fn of_features(&self, f: &[f64]) -> f64 {
        self.reg.eval(f)
    }
}

impl ValueFunction for LevelValue<'_> {
    fn value(&self, x: &BeliefState) -> f64 {
        self.reg.eval(&featurize(x))
    }

    fn posterior_values(&self, plan: &StepPlan<'_>, obs: &[(f64, f64)]) -> Vec<f64> {
        // Posteriors from one step share covariances; only the mean block changes.
        let mut f = Vec::with_capacity(feature_len(self.j, self.k));
        f.resize(self.j + self.k, 0.0);
        push_upper(&mut f, plan.posterior_sigma_alpha());
        push_upper(&mut f, plan.posterior_sigma_beta());
        obs.iter()
            .map(|&(h, t)| {
                let ma = plan.posterior_mu_alpha(h);
                let mb = plan.posterior_mu_beta(t);
                f[..self.j].copy_from_slice(ma.as_slice());
                f[self.j..self.j + self.k].copy_from_slice(mb.as_slice());
                self.reg.eval(&f)
            })
            .collect()
    }
}

impl ValueMap {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `n` (1-based).
    pub fn level(&self, n: usize) -> Result<LevelValue<'_>> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::invalid(format!("level {n} outside 1..={}", self.levels.len())));
        }
        Ok(LevelValue {
            reg: &self.levels[n - 1],
            j: self.metadata.basis.n_score(),
            k: self.metadata.basis.n_cost(),
        })
    }

    pub fn top(&self) -> LevelValue<'_> {
        self.level(self.depth()).expect("maps have at least one level")
    }

    pub fn value(&self, n: usize, x: &BeliefState) -> Result<f64> {
        x.check_basis(&self.metadata.basis)?;
        Ok(self.level(n)?.value(x))
    }

    pub fn regressor(&self, n: usize) -> Result<&FittedRegressor> {
        Ok(self.level(n)?.reg)
    }

    /// Training targets of level `n`: the Q-value maxima at each cloud state.
    pub fn targets(&self, n: usize) -> Result<&[f64]> {
        Ok(self.level(n)?.reg.targets())
    }

    pub fn target_se(&self, n: usize) -> Result<&[f64]> {
        self.level(n)?;
        Ok(&self.target_se[n - 1])
    }

    pub fn reports(&self) -> &[LevelReport] {
        &self.reports
    }

    /// Cloud states recovered from the retained training inputs.
    pub fn cloud_states(&self) -> Result<Vec<BeliefState>> {
        let (j, k) = (self.metadata.basis.n_score(), self.metadata.basis.n_cost());
        self.levels[0].inputs().iter().map(|f| unfeaturize(f, j, k)).collect()
    }

    /// Refuse to serve a problem with a different control dimension, basis or
    /// trade-off coefficient (the last unless `allow_gamma` is set).
    pub fn check_compatible(&self, basis: &BasisSet, gamma: f64, allow_gamma: bool) -> Result<()> {
        let m = &self.metadata;
        let problem = format!(
            "p={}, J={}, K={}, gamma={gamma}",
            basis.dim_control(),
            basis.n_score(),
            basis.n_cost()
        );
        if m.dim_control != basis.dim_control() || &m.basis != basis {
            return Err(Error::IncompatibleMap {
                expected: problem,
                found: m.descriptor(),
            });
        }
        if !allow_gamma && m.gamma != gamma {
            return Err(Error::IncompatibleMap {
                expected: problem,
                found: m.descriptor(),
            });
        }
        Ok(())
    }
}

/// Backward induction over `cloud`.
///
/// Level `n` at cloud state `j` draws its Monte Carlo samples from the stream
/// `seed / VALUE_ITERATION / n / j`, so the build is independent of thread count.
#[allow(clippy::too_many_arguments)]
pub fn build_value_map(
    cloud: &Cloud,
    depth: usize,
    gamma: f64,
    plan: &SamplingPlan,
    basis: &BasisSet,
    noise: &NoiseModel,
    qfit: &RegressionSpec,
    vfit: &RegressionSpec,
) -> Result<ValueMap> {
    if depth == 0 {
        return Err(Error::invalid("map depth must be at least 1"));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cloud is empty"));
    }
    for x in &cloud.states {
        x.check_basis(basis)?;
    }
    let ev = QEvaluator::new(basis, noise, gamma, plan, qfit)?;
    let features: Vec<Vec<f64>> = cloud.states.iter().map(featurize).collect();
    let vprep = prepare(vfit, features).map_err(|e| Error::MapBuild {
        level: 1,
        state: None,
        source: Box::new(e),
    })?;
    let root = StreamKey::new(plan.seed);
    let (j, k) = (basis.n_score(), basis.n_cost());
    let mut levels: Vec<FittedRegressor> = Vec::with_capacity(depth);
    let mut target_se = Vec::with_capacity(depth);
    let mut reports = Vec::with_capacity(depth);
    for n in 1..=depth {
        let started = Instant::now();
        let prev = levels.last().map(|reg| LevelValue { reg, j, k });
        let cont = match &prev {
            None => Continuation::None,
            Some(v) => Continuation::value(v),
        };
        let key = root.child(label::VALUE_ITERATION).child(n as u64);
        let results: Vec<(f64, f64)> = cloud
            .states
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let q = ev.lambda(x, cont, key.child(i as u64)).map_err(|e| Error::MapBuild {
                    level: n,
                    state: Some(i),
                    source: Box::new(e),
                })?;
                Ok((ev.argmax(&q).1, q.pooled_se()))
            })
            .collect::<Result<_>>()?;
        let (targets, ses): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
        let fit_seed = root.child(label::VALUE_FIT).child(n as u64).raw();
        let reg = vprep.fit(targets.clone(), fit_seed).map_err(|e| Error::MapBuild {
            level: n,
            state: None,
            source: Box::new(e),
        })?;
        let nf = targets.len() as f64;
        reports.push(LevelReport {
            level: n,
            mean_target: targets.iter().sum::<f64>() / nf,
            min_target: targets.iter().cloned().fold(f64::INFINITY, f64::min),
            max_target: targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_target_se: ses.iter().sum::<f64>() / nf,
            fit_mse: reg.training_mse(),
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!("value map level {n}/{depth} built in {:.1}s", started.elapsed().as_secs_f64());
        levels.push(reg);
        target_se.push(ses);
    }
    Ok(ValueMap {
        metadata: MapMetadata {
            format_version: FORMAT_VERSION,
            featurization_version: FEATURIZATION_VERSION,
            gamma,
            noise: *noise,
            basis: basis.clone(),
            dim_control: basis.dim_control(),
            depth,
            plan: plan.clone(),
            qfit: qfit.clone(),
            vfit: vfit.clone(),
            resolution: ev.resolution(),
            cloud: cloud.provenance.clone(),
            cloud_size: cloud.len(),
            truth_count: cloud.truth_count,
        },
        levels,
        target_se,
        reports,
    })
}

#[derive(Serialize, Deserialize)]
struct MapArchive {
    format: String,
    format_version: u32,
    featurization_version: u32,
    map: serde_json::Value,
}

pub fn save_map(map: &ValueMap, path: impl AsRef<Path>) -> Result<()> {
    let archive = MapArchive {
        format: FORMAT_TAG.into(),
        format_version: FORMAT_VERSION,
        featurization_version: FEATURIZATION_VERSION,
        map: serde_json::to_value(map)?,
    };
    fs::write(path, serde_json::to_vec(&archive)?)?;
    Ok(())
}

/// Read a map archive, refitting every level from its retained pairs.
pub fn load_map(path: impl AsRef<Path>) -> Result<ValueMap> {
    let bytes = fs::read(path)?;
    let archive: MapArchive = serde_json::from_slice(&bytes)?;
    let ours = format!("{FORMAT_TAG} format v{FORMAT_VERSION}, features v{FEATURIZATION_VERSION}");
    if archive.format != FORMAT_TAG
        || archive.format_version != FORMAT_VERSION
        || archive.featurization_version != FEATURIZATION_VERSION
    {
        return Err(Error::IncompatibleMap {
            expected: ours,
            found: format!(
                "{} format v{}, features v{}",
                archive.format, archive.format_version, archive.featurization_version
            ),
        });
    }
    let map: ValueMap = serde_json::from_value(archive.map)?;
    if map.levels.is_empty() || map.levels.len() != map.metadata.depth || map.target_se.len() != map.levels.len() {
        return Err(Error::Config("map archive has inconsistent level counts".into()));
    }
    Ok(map)
}

/// Monte Carlo estimate of `E|alpha| * sup_u |phi(u)|` for
/// `alpha ~ N(mu_alpha, Sigma_alpha)`; returns `(estimate, standard error)`.
pub fn score_upper_bound(x: &BeliefState, basis: &BasisSet, draws: usize, key: StreamKey) -> Result<(f64, f64)> {
    x.check_basis(basis)?;
    if draws < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let root = psd_sqrt(x.sigma_alpha());
    let j = x.n_score();
    let mut rng = key.rng();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let z = DVector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = (x.mu_alpha() + &root * z).norm();
        s += a;
        s2 += a * a;
    }
    let n = draws as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    let sup = basis.sup_phi_norm();
    Ok((mean * sup, (var / n).sqrt() * sup))
}
