//! Regression backends for Q-value curves over controls and value surfaces
//! over belief-state features.
//!
//! A [`FittedRegressor`] keeps its training pairs and seed; serialising it
//! writes only those, and deserialising refits. When many targets share one
//! set of inputs (every Q-curve over the same grid), [`prepare`] factors the
//! input-only work once and [`PreparedFit::fit`] reuses it.

mod forest;
mod gcv;
mod ridge;
mod spline;
mod tps;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use forest::ForestParams;
pub use spline::DEFAULT_MAX_BASIS;

use crate::error::{Error, Result};

/// How a penalised smoother picks its smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Generalised cross-validation.
    #[default]
    Gcv,
    /// Fixed penalty weight.
    Lambda(f64),
}

fn default_max_basis() -> usize {
    DEFAULT_MAX_BASIS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressionSpec {
    #[serde(rename = "smoothing-spline-1d")]
    SmoothingSpline1d {
        #[serde(default)]
        smoothing: Smoothing,
        #[serde(default = "default_max_basis")]
        max_basis: usize,
    },
    #[serde(rename = "thin-plate-2d")]
    ThinPlate2d {
        #[serde(default)]
        smoothing: Smoothing,
    },
    TreeEnsemble(ForestParams),
    PolynomialRidge {
        degree: u32,
        #[serde(default)]
        lambda: f64,
    },
}

impl RegressionSpec {
    pub fn smoothing_spline() -> Self {
        RegressionSpec::SmoothingSpline1d {
            smoothing: Smoothing::Gcv,
            max_basis: DEFAULT_MAX_BASIS,
        }
    }

    pub fn thin_plate() -> Self {
        RegressionSpec::ThinPlate2d {
            smoothing: Smoothing::Gcv,
        }
    }

    pub fn tree_ensemble() -> Self {
        RegressionSpec::TreeEnsemble(ForestParams::default())
    }

    /// Default curve fitter for a control space of dimension `p`.
    pub fn default_for_controls(p: usize) -> Self {
        match p {
            1 => Self::smoothing_spline(),
            2 => Self::thin_plate(),
            _ => RegressionSpec::PolynomialRidge {
                degree: 2,
                lambda: 1e-6,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RegressionSpec::SmoothingSpline1d { .. } => "smoothing-spline-1d",
            RegressionSpec::ThinPlate2d { .. } => "thin-plate-2d",
            RegressionSpec::TreeEnsemble(_) => "tree-ensemble",
            RegressionSpec::PolynomialRidge { .. } => "polynomial-ridge",
        }
    }

    /// Required input dimension, if the kind fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            RegressionSpec::SmoothingSpline1d { .. } => Some(1),
            RegressionSpec::ThinPlate2d { .. } => Some(2),
            _ => None,
        }
    }

    pub fn min_samples(&self) -> usize {
        match self {
            RegressionSpec::SmoothingSpline1d { .. } | RegressionSpec::ThinPlate2d { .. } => 4,
            // A single pair still defines a (constant) ensemble.
            RegressionSpec::TreeEnsemble(_) => 1,
            RegressionSpec::PolynomialRidge { .. } => 2,
        }
    }
}

#[derive(Debug)]
enum Engine {
    Spline(spline::SplineBasis),
    Tps(tps::TpsBasis),
    Plain,
}

/// A regression spec bound to a fixed set of inputs.
#[derive(Debug)]
pub struct PreparedFit {
    spec: RegressionSpec,
    xs: Arc<Vec<Vec<f64>>>,
    engine: Engine,
}

/// Validate inputs and precompute whatever does not depend on the targets.
pub fn prepare(spec: &RegressionSpec, xs: Vec<Vec<f64>>) -> Result<PreparedFit> {
    let kind = spec.kind();
    if xs.len() < spec.min_samples() {
        return Err(Error::InsufficientData {
            kind,
            needed: spec.min_samples(),
            got: xs.len(),
        });
    }
    let d = xs[0].len();
    if d == 0 {
        return Err(Error::invalid("feature vectors must be non-empty"));
    }
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("inconsistent feature dimensionality"));
    }
    if let Some(want) = spec.input_dim() {
        if want != d {
            return Err(Error::invalid(format!("{kind} needs {want} feature(s), got {d}")));
        }
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let engine = match spec {
        RegressionSpec::SmoothingSpline1d { max_basis, .. } => {
            let flat: Vec<f64> = xs.iter().map(|x| x[0]).collect();
            Engine::Spline(spline::SplineBasis::new(&flat, *max_basis)?)
        }
        RegressionSpec::ThinPlate2d { .. } => Engine::Tps(tps::TpsBasis::new(&xs)?),
        RegressionSpec::TreeEnsemble(p) => {
            if p.n_trees == 0 {
                return Err(Error::invalid("tree ensemble needs at least one tree"));
            }
            Engine::Plain
        }
        RegressionSpec::PolynomialRidge { .. } => Engine::Plain,
    };
    Ok(PreparedFit {
        spec: spec.clone(),
        xs: Arc::new(xs),
        engine,
    })
}

impl PreparedFit {
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn fit(&self, ys: Vec<f64>, seed: u64) -> Result<FittedRegressor> {
        if ys.len() != self.xs.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                self.xs.len(),
                ys.len()
            )));
        }
        if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite target at index {i}")));
        }
        let model = match (&self.spec, &self.engine) {
            (RegressionSpec::SmoothingSpline1d { smoothing, .. }, Engine::Spline(b)) => {
                Model::Spline(b.fit(&ys, *smoothing)?)
            }
            (RegressionSpec::ThinPlate2d { smoothing }, Engine::Tps(b)) => Model::Tps(b.fit(&ys, *smoothing)?),
            (RegressionSpec::TreeEnsemble(p), _) => Model::Forest(forest::Forest::fit(&self.xs, &ys, p, seed)),
            (RegressionSpec::PolynomialRidge { degree, lambda }, _) => {
                Model::Ridge(ridge::RidgeFit::fit(&self.xs, &ys, *degree, *lambda)?)
            }
            _ => unreachable!("engine always matches spec"),
        };
        Ok(FittedRegressor {
            spec: self.spec.clone(),
            seed,
            xs: Arc::clone(&self.xs),
            ys,
            model,
        })
    }
}

#[derive(Debug, Clone)]
enum Model {
    Spline(spline::SplineFit),
    Tps(tps::TpsFit),
    Forest(forest::Forest),
    Ridge(ridge::RidgeFit),
}

/// An immutable fitted model together with the data that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RegressorRecord", into = "RegressorRecord")]
pub struct FittedRegressor {
    spec: RegressionSpec,
    seed: u64,
    xs: Arc<Vec<Vec<f64>>>,
    ys: Vec<f64>,
    model: Model,
}

#[derive(Serialize, Deserialize)]
struct RegressorRecord {
    spec: RegressionSpec,
    seed: u64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl TryFrom<RegressorRecord> for FittedRegressor {
    type Error = Error;
    fn try_from(r: RegressorRecord) -> Result<Self> {
        fit(&r.spec, r.xs, r.ys, r.seed)
    }
}

impl From<FittedRegressor> for RegressorRecord {
    fn from(f: FittedRegressor) -> Self {
        RegressorRecord {
            spec: f.spec,
            seed: f.seed,
            xs: Arc::try_unwrap(f.xs).unwrap_or_else(|a| (*a).clone()),
            ys: f.ys,
        }
    }
}

pub fn fit(spec: &RegressionSpec, xs: Vec<Vec<f64>>, ys: Vec<f64>, seed: u64) -> Result<FittedRegressor> {
    prepare(spec, xs)?.fit(ys, seed)
}

impl FittedRegressor {
    pub fn spec(&self) -> &RegressionSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn targets(&self) -> &[f64] {
        &self.ys
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature vector has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.eval(x))
    }

    /// Prediction without the dimension check.
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Spline(s) => s.predict(x[0]),
            Model::Tps(t) => t.predict(&self.xs, x),
            Model::Forest(f) => f.predict(x),
            Model::Ridge(r) => r.predict(x),
        }
    }

    /// Selected penalty weight for the spline kinds.
    pub fn smoothing_parameter(&self) -> Option<f64> {
        match &self.model {
            Model::Spline(s) => Some(s.lambda),
            Model::Tps(t) => Some(t.rho / self.ys.len() as f64),
            _ => None,
        }
    }

    /// Mean squared error on the training pairs.
    pub fn training_mse(&self) -> f64 {
        let n = self.ys.len() as f64;
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| (self.eval(x) - y).powi(2))
            .sum::<f64>()
            / n
    }
}
