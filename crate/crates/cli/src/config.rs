use std::path::{Path, PathBuf};

use autobct::controller::{ProblemSpec, RunSettings, DEFAULT_BUDGET_GUARD};
use autobct::oracle::TrainerConfig;
use autobct::presets;
use autobct::qvalue::SamplingPlan;
use autobct::regress::RegressionSpec;
use autobct::valuemap::{CloudConfig, CovarianceScale};
use autobct::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid and Monte Carlo sample count; the grid is a lattice with `per_dim`
/// points per axis (101, 21 or 5 by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub per_dim: Option<usize>,
    pub n_samples: usize,
}

impl PlanConfig {
    pub fn plan(&self, p: usize, seed: u64) -> Result<SamplingPlan> {
        match self.per_dim {
            Some(k) => SamplingPlan::lattice(p, k, self.n_samples, seed),
            None => SamplingPlan::default_for(p, self.n_samples, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichSettings {
    pub n_shapes: usize,
    pub depth: usize,
    pub per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSettings {
    pub n_c: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub mean_sd: f64,
    #[serde(default)]
    pub covariance_scale: CovarianceScale,
    #[serde(default)]
    pub dof: Option<(usize, usize)>,
    #[serde(default)]
    pub enrichment: Option<EnrichSettings>,
}

fn one() -> f64 {
    1.0
}

impl Default for CloudSettings {
    fn default() -> Self {
        CloudSettings {
            n_c: 300,
            k: 4,
            mean_sd: 1.0,
            covariance_scale: CovarianceScale::Centre,
            dof: None,
            enrichment: Some(EnrichSettings {
                n_shapes: 10,
                depth: 3,
                per_dim: 5,
            }),
        }
    }
}

impl CloudSettings {
    pub fn cloud_config(&self, problem: &ProblemSpec) -> Result<CloudConfig> {
        let mut c = CloudConfig::new(problem.prior.clone(), self.n_c, self.k);
        c.mean_sd = self.mean_sd;
        c.covariance_scale = self.covariance_scale;
        c.dof = self.dof;
        if let Some(e) = &self.enrichment {
            let grid = SamplingPlan::lattice(problem.dim(), e.per_dim, 1, 0)?.grid;
            c = c.with_enrichment(e.n_shapes, e.depth, grid);
        }
        Ok(c)
    }
}

fn default_depth() -> usize {
    3
}

fn default_build_plan() -> PlanConfig {
    PlanConfig {
        per_dim: None,
        n_samples: 20,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSettings {
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub cloud: CloudSettings,
    #[serde(default = "default_build_plan")]
    pub plan: PlanConfig,
    #[serde(default = "RegressionSpec::tree_ensemble")]
    pub vfit: RegressionSpec,
}

impl Default for BuildSettings {
    fn default() -> Self {
        BuildSettings {
            depth: default_depth(),
            cloud: CloudSettings::default(),
            plan: default_build_plan(),
            vfit: RegressionSpec::tree_ensemble(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtfSettings {
    pub depth: usize,
    pub plan: PlanConfig,
    #[serde(default)]
    pub plan_first: Option<PlanConfig>,
}

fn default_episodes() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
}

fn default_guard() -> usize {
    DEFAULT_BUDGET_GUARD
}

/// The single JSON document every command reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled preset supplying `problem` and `qfit` when those are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qfit: Option<RegressionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otf: Option<OtfSettings>,
    #[serde(default)]
    pub build: BuildSettings,
    /// Plan of the per-epoch Q-curve; defaults to the build grid with ten
    /// times the samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_plan: Option<PlanConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_guard")]
    pub budget_guard: usize,
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub allow_gamma_override: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSettings>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fill `problem` and `qfit` from the preset and check the problem.
    pub fn resolve(mut self) -> Result<Self> {
        let preset = self.preset.as_deref().map(presets::load).transpose()?;
        if self.problem.is_none() {
            self.problem = Some(
                preset
                    .as_ref()
                    .map(|p| p.problem.clone())
                    .ok_or_else(|| Error::Config("missing field `problem` (or a `preset`)".into()))?,
            );
        }
        let problem = self.problem.as_ref().expect("set above");
        problem.validate()?;
        if self.qfit.is_none() {
            self.qfit = Some(match &preset {
                Some(p) if p.problem.dim() == problem.dim() => p.qfit.clone(),
                _ => RegressionSpec::default_for_controls(problem.dim()),
            });
        }
        Ok(self)
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem.as_ref().expect("resolved config")
    }

    pub fn qfit(&self) -> &RegressionSpec {
        self.qfit.as_ref().expect("resolved config")
    }

    pub fn trainer(&self) -> Result<&TrainerConfig> {
        self.trainer
            .as_ref()
            .ok_or_else(|| Error::Config("missing field `trainer`".into()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("autobct-output"))
    }

    pub fn run_plan(&self) -> PlanConfig {
        self.run_plan.clone().unwrap_or(PlanConfig {
            per_dim: self.build.plan.per_dim,
            n_samples: 10 * self.build.plan.n_samples,
        })
    }

    pub fn settings(&self, plan: SamplingPlan) -> RunSettings {
        let mut s = RunSettings::new(plan, self.qfit().clone()).with_budget_guard(self.budget_guard);
        s.resolution = self.resolution;
        s.allow_gamma_override = self.allow_gamma_override;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::from_json(r#"{"preset":"synthetic","seed":4,"map_path":"m.json"}"#)
            .unwrap()
            .resolve()
            .unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = RunConfig::from_json(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.clone().resolve().unwrap(), cfg);
        assert_eq!(cfg.run_plan().n_samples, 200);
    }

    #[test]
    fn missing_basis_is_named() {
        let err = RunConfig::from_json(
            r#"{"problem":{"gamma":0.16,"noise":{"sigma_h":0.05,"sigma_t":0.1},"prior":{"j":1,"k":1,"mu_alpha":[0.0],"sigma_alpha":[1.0],"mu_beta":[0.0],"sigma_beta":[1.0]},"score_transform":{"kind":"affine","lo":0.0,"hi":1.0},"cost_transform":{"kind":"affine","lo":0.0,"hi":1.0},"control_maps":[]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("basis"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"preset":"synthetic","sede":1}"#).is_err());
    }
}
