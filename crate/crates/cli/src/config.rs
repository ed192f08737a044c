//! Pipeline configuration: a versioned JSON document with strict keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pgrom::basis::LeftTrainingOptions;
use pgrom::fom::NewtonSettings;
use pgrom::strategy::{Strategy, Tolerances};
use pgrom::testbed::{BarSpec, FeProblem, Material, PulseSpec, RotatingPulse, SaintVenantBar};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Bar(BarSpec),
    RotatingPulse(PulseSpec),
}

/// A parameter vector, or for the pulse a material name standing for its
/// diffusion coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParameterSpec {
    Values(Vec<f64>),
    Material(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub problem: ProblemConfig,
    pub training: Vec<ParameterSpec>,
    #[serde(default)]
    pub testing: Vec<ParameterSpec>,
    pub tolerances: Tolerances,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub left_training: LeftTrainingOptions,
    /// Train the cubature on Newton iterates as well as converged states.
    #[serde(default = "yes")]
    pub cubature_iterates: bool,
    pub strategies: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("pgrom-out")
}

fn material(name: &str) -> Option<Material> {
    [Material::ethylene_glycol(), Material::sae30_oil(), Material::glycerol()]
        .into_iter()
        .find(|m| m.name == name)
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_owned() } else { path };
            CliError::Validation(vec![format!("{field}: {}", e.inner())])
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn build_problem(&self) -> pgrom::Result<Box<dyn FeProblem>> {
        Ok(match &self.problem {
            ProblemConfig::Bar(spec) => Box::new(SaintVenantBar::new(spec.clone())?),
            ProblemConfig::RotatingPulse(spec) => Box::new(RotatingPulse::new(spec.clone())?),
        })
    }

    fn resolve(&self, field: &str, specs: &[ParameterSpec], errors: &mut Vec<String>) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            let at = format!("{field}[{i}]");
            match (spec, &self.problem) {
                (ParameterSpec::Values(v), ProblemConfig::Bar(_)) => {
                    if v.len() != 1 || !(v[0] >= 0.0) || !v[0].is_finite() {
                        errors.push(format!("{at}: the bar takes one finite load parameter alpha >= 0, got {v:?}"));
                    }
                    out.push(v.clone());
                }
                (ParameterSpec::Values(v), ProblemConfig::RotatingPulse(_)) => {
                    if v.len() != 1 || !(v[0] > 0.0) || !v[0].is_finite() {
                        errors.push(format!("{at}: the pulse takes one positive diffusion coefficient, got {v:?}"));
                    }
                    out.push(v.clone());
                }
                (ParameterSpec::Material(name), ProblemConfig::RotatingPulse(_)) => match material(name) {
                    Some(m) => out.push(vec![m.diffusion_coefficient()]),
                    None => errors.push(format!(
                        "{at}: unknown material {name:?}; valid names: ethylene-glycol, sae30-oil, glycerol"
                    )),
                },
                (ParameterSpec::Material(name), ProblemConfig::Bar(_)) => {
                    errors.push(format!("{at}: material {name:?} given but the bar takes numeric parameters"))
                }
            }
        }
        out
    }

    /// Checks every field and resolves parameters and strategies.
    pub fn validate(&self) -> Result<ValidConfig, CliError> {
        let mut errors = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version: unsupported version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if let Err(e) = self.build_problem() {
            errors.push(format!("problem: {e}"));
        }
        if self.training.is_empty() {
            errors.push("training: at least one training parameter is required".into());
        }
        let training = self.resolve("training", &self.training, &mut errors);
        let testing = self.resolve("testing", &self.testing, &mut errors);
        let t = &self.tolerances;
        for (name, v) in [("eps_u", t.eps_u), ("eps_psi_j", t.eps_psi_j), ("eps_r", t.eps_r), ("eps_ecm", t.eps_ecm)] {
            if !(0.0..=1.0).contains(&v) {
                errors.push(format!("tolerances.{name}: {v} is outside [0, 1]"));
            }
        }
        if let Err(e) = self.newton.validate() {
            errors.push(format!("newton: {e}"));
        }
        if self.strategies.is_empty() {
            errors.push("strategies: at least one strategy is required".into());
        }
        let mut strategies = Vec::new();
        for (i, name) in self.strategies.iter().enumerate() {
            match name.parse::<Strategy>() {
                Ok(s) if strategies.contains(&s) => errors.push(format!("strategies[{i}]: {s} is listed twice")),
                Ok(s) => strategies.push(s),
                Err(e) => errors.push(format!("strategies[{i}]: {e}")),
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            errors.push("output_dir: must not be empty".into());
        }
        if !errors.is_empty() {
            return Err(CliError::Validation(errors));
        }
        Ok(ValidConfig { config: self.clone(), training, testing, strategies })
    }
}

/// A validated configuration with resolved parameters.
#[derive(Debug, Clone)]
pub struct ValidConfig {
    pub config: PipelineConfig,
    pub training: Vec<Vec<f64>>,
    pub testing: Vec<Vec<f64>>,
    pub strategies: Vec<Strategy>,
}

impl ValidConfig {
    /// Replaces the configured strategy list by `names`.
    pub fn with_strategies(mut self, names: &[String]) -> Result<Self, CliError> {
        if names.is_empty() {
            return Ok(self);
        }
        self.config.strategies = names.to_vec();
        self.config.validate()
    }

    pub fn with_output_dir(mut self, dir: Option<PathBuf>) -> Self {
        if let Some(dir) = dir {
            self.config.output_dir = dir;
        }
        self
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }
}
