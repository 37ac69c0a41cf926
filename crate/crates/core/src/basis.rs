//! Control space and the polynomial basis families for score and cost.
//!
//! Controls live in the unit cube `[0, 1]^p`. Both the score map `H` and the
//! cost map `T` are linear combinations of centred monomials
//! `prod_i (u_i - 0.5)^e_i`; a term is identified by its exponent tuple and
//! its position in the term list is the coefficient index.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset subtracted from every coordinate before raising to a power.
pub const CENTER: f64 = 0.5;

/// A point of the normalised control space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlPoint(Vec<f64>);

impl ControlPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("control point must have at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::invalid(format!("control coordinate {c} outside [0, 1]")));
        }
        Ok(ControlPoint(coords))
    }

    pub fn scalar(u: f64) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ControlPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ControlPoint::new(v)
    }
}

impl From<ControlPoint> for Vec<f64> {
    fn from(u: ControlPoint) -> Self {
        u.0
    }
}

impl AsRef<[f64]> for ControlPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Exponent tuple of one centred monomial.
pub type Term = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisRecord", into = "BasisRecord")]
pub struct BasisSet {
    dim_control: usize,
    score_terms: Vec<Term>,
    cost_terms: Vec<Term>,
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    dim_control: usize,
    score_terms: Vec<Term>,
    cost_terms: Vec<Term>,
}

impl TryFrom<BasisRecord> for BasisSet {
    type Error = Error;
    fn try_from(r: BasisRecord) -> Result<Self> {
        BasisSet::new(r.dim_control, r.score_terms, r.cost_terms)
    }
}

impl From<BasisSet> for BasisRecord {
    fn from(b: BasisSet) -> Self {
        BasisRecord {
            dim_control: b.dim_control,
            score_terms: b.score_terms,
            cost_terms: b.cost_terms,
        }
    }
}

impl BasisSet {
    pub fn new(dim_control: usize, score_terms: Vec<Term>, cost_terms: Vec<Term>) -> Result<Self> {
        if dim_control == 0 {
            return Err(Error::invalid("control dimension must be at least 1"));
        }
        for (name, terms) in [("score", &score_terms), ("cost", &cost_terms)] {
            if terms.is_empty() {
                return Err(Error::invalid(format!("{name} basis must have at least one term")));
            }
            if let Some(t) = terms.iter().find(|t| t.len() != dim_control) {
                return Err(Error::invalid(format!(
                    "{name} term {t:?} has {} exponents, expected {dim_control}",
                    t.len()
                )));
            }
        }
        Ok(BasisSet {
            dim_control,
            score_terms,
            cost_terms,
        })
    }

    /// `{1, u-0.5, (u-0.5)^2, (u-0.5)^3}` for both score and cost.
    pub fn cubic_1d() -> Self {
        let terms: Vec<Term> = (0..4).map(|k| vec![k]).collect();
        BasisSet::new(1, terms.clone(), terms).expect("static basis")
    }

    /// Same family on both maps, in the order
    /// `(u1-.5)^0..4, (u2-.5)^1..4, (u1-.5)(u2-.5)`.
    pub fn quartic_2d() -> Self {
        let mut terms: Vec<Term> = (0..=4).map(|k| vec![k, 0]).collect();
        terms.extend((1..=4).map(|k| vec![0, k]));
        terms.push(vec![1, 1]);
        BasisSet::new(2, terms.clone(), terms).expect("static basis")
    }

    /// Single constant term on both maps (J = K = 1).
    pub fn constant(dim_control: usize) -> Self {
        let t = vec![vec![0; dim_control]];
        BasisSet::new(dim_control, t.clone(), t).expect("static basis")
    }

    pub fn dim_control(&self) -> usize {
        self.dim_control
    }

    /// J
    pub fn n_score(&self) -> usize {
        self.score_terms.len()
    }

    /// K
    pub fn n_cost(&self) -> usize {
        self.cost_terms.len()
    }

    pub fn score_terms(&self) -> &[Term] {
        &self.score_terms
    }

    pub fn cost_terms(&self) -> &[Term] {
        &self.cost_terms
    }

    pub fn eval_phi(&self, u: &ControlPoint) -> Result<DVector<f64>> {
        self.check_dim(u)?;
        Ok(eval_terms(&self.score_terms, u.coords()))
    }

    pub fn eval_psi(&self, u: &ControlPoint) -> Result<DVector<f64>> {
        self.check_dim(u)?;
        Ok(eval_terms(&self.cost_terms, u.coords()))
    }

    /// `sup_u |phi(u)|` over the cube.
    ///
    /// Every centred monomial attains its largest magnitude `0.5^degree` at
    /// any vertex, so the supremum of the Euclidean norm is attained there too.
    pub fn sup_phi_norm(&self) -> f64 {
        sup_norm(&self.score_terms)
    }

    pub fn sup_psi_norm(&self) -> f64 {
        sup_norm(&self.cost_terms)
    }

    fn check_dim(&self, u: &ControlPoint) -> Result<()> {
        if u.dim() != self.dim_control {
            return Err(Error::invalid(format!(
                "control has dimension {}, basis expects {}",
                u.dim(),
                self.dim_control
            )));
        }
        Ok(())
    }
}

pub(crate) fn eval_terms(terms: &[Term], u: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        terms.len(),
        terms.iter().map(|t| {
            t.iter()
                .zip(u)
                .map(|(&e, &x)| (x - CENTER).powi(e as i32))
                .product::<f64>()
        }),
    )
}

fn sup_norm(terms: &[Term]) -> f64 {
    terms
        .iter()
        .map(|t| CENTER.powi(2 * t.iter().sum::<u32>() as i32))
        .sum::<f64>()
        .sqrt()
}
