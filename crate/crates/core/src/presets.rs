//! Bundled problem definitions for the published experiments.
//!
//! Each preset carries the basis, noise levels, prior, transforms and control
//! mappings of one experiment, with `gamma = 0.16` throughout. The JSON files
//! live under `presets/` and are compiled in.

use serde::{Deserialize, Serialize};

use crate::controller::ProblemSpec;
use crate::error::{Error, Result};
use crate::oracle::{CostShape, ScoreShape, TrainerConfig};
use crate::regress::RegressionSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub problem: ProblemSpec,
    /// Regression used for the per-epoch Q-curve.
    pub qfit: RegressionSpec,
}

const FILES: [(&str, &str); 8] = [
    ("synthetic", include_str!("../presets/synthetic.json")),
    ("cnn-batch", include_str!("../presets/cnn-batch.json")),
    ("cnn-r", include_str!("../presets/cnn-r.json")),
    ("cnn-2d", include_str!("../presets/cnn-2d.json")),
    ("higgs", include_str!("../presets/higgs.json")),
    ("intel", include_str!("../presets/intel.json")),
    ("fraud-1d", include_str!("../presets/fraud-1d.json")),
    ("fraud-2d", include_str!("../presets/fraud-2d.json")),
];

pub fn names() -> Vec<&'static str> {
    FILES.iter().map(|(n, _)| *n).collect()
}

pub fn load(name: &str) -> Result<Preset> {
    let (_, text) = FILES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; known: {}", names().join(", "))))?;
    let p: Preset = serde_json::from_str(text)?;
    p.problem.validate()?;
    Ok(p)
}

pub fn synthetic() -> Preset {
    load("synthetic").expect("bundled preset")
}

/// Analytic stand-in for the random-forest trainer of the synthetic preset:
/// `H(u) = 0.99 - 0.44 exp(-10u)` and `T(u) = 0.05 + 0.75u` in transformed
/// units, close to the scores and costs observed in the published run.
pub fn synthetic_trainer() -> TrainerConfig {
    TrainerConfig::Analytic {
        score: ScoreShape::Saturating {
            top: 0.99,
            gap: 0.44,
            rate: 10.0,
        },
        cost: CostShape::Linear { base: 0.05, slope: 0.75 },
        noise: None,
    }
}
