//! TOML run configurations for the `simulate` and `analyze` commands.
//!
//! Both are parsed with unknown keys rejected, and every error message names
//! the offending key path.

use std::path::{Path, PathBuf};

use cde_core::simulation::{Criterion, DgmParams, Method, PhiKind, ScenarioConfig};
use cde_core::ColumnRoles;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::preprocess::Step;
use crate::CliError;

/// Parses TOML into `T`, reporting the key path on failure.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("key `{path}`: {}", e.inner()))
    })
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_toml(&text)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Runtime(format!("cannot serialise config echo: {e}")))
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` round-trip as strings.
pub mod seed_repr {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if let Ok(v) = i64::try_from(*seed) {
            s.serialize_i64(v)
        } else {
            s.serialize_str(&seed.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_seed() -> u64 {
    2024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub n: usize,
    pub reps: usize,
    pub method: Method,
    pub criterion: Criterion,
    #[serde(default)]
    pub phi: PhiKind,
    #[serde(default = "default_levels")]
    pub m_levels: Vec<f64>,
    #[serde(default = "default_sim_confidence")]
    pub confidence: f64,
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 10.0, 20.0]
}

fn default_sim_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_seed", with = "seed_repr")]
    pub seed: u64,
    #[serde(default)]
    pub dgm: DgmParams,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioEntry>,
}

impl SimulateConfig {
    pub fn scenario_configs(&self) -> Result<Vec<ScenarioConfig>, CliError> {
        if self.scenarios.is_empty() {
            return Err(CliError::Config("key `scenario`: at least one [[scenario]] table is required".into()));
        }
        self.scenarios
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let cfg = ScenarioConfig {
                    n: s.n,
                    reps: s.reps,
                    seed: self.seed,
                    method: s.method,
                    criterion: s.criterion,
                    phi: s.phi,
                    m_levels: s.m_levels.clone(),
                    confidence: s.confidence,
                    dgm: self.dgm,
                };
                cfg.validate()
                    .map_err(|e| CliError::Config(format!("key `scenario[{k}]`: {e}")))?;
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV path, relative to the config file unless absolute.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub tau1: Vec<String>,
    #[serde(default)]
    pub tau2: Vec<String>,
    /// Instrument generators, one per effect-model term and in the same order.
    pub instruments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlleleScoreSection {
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityChoice {
    #[default]
    ConstantMean,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySection {
    #[serde(default)]
    pub kind: PropensityChoice,
    #[serde(default)]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default)]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub label: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    /// Empty means the full effect model only.
    #[serde(default)]
    pub candidates: Vec<CandidateEntry>,
}

fn default_criterion() -> Criterion {
    Criterion::Gic
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            criterion: default_criterion(),
            candidates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Mediator levels, one value per mediator component for each level.
    #[serde(default = "default_report_levels")]
    pub levels: Vec<Vec<f64>>,
    #[serde(default = "default_analyze_confidence")]
    pub confidence: f64,
}

fn default_report_levels() -> Vec<Vec<f64>> {
    vec![vec![0.0], vec![10.0], vec![20.0]]
}

fn default_analyze_confidence() -> f64 {
    0.99
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            levels: default_report_levels(),
            confidence: default_analyze_confidence(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub data: DataSection,
    pub roles: ColumnRoles,
    #[serde(default, rename = "preprocess")]
    pub steps: Vec<Step>,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allele_score: Option<AlleleScoreSection>,
    #[serde(default)]
    pub propensity: PropensitySection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub report: ReportSection,
}

impl AnalyzeConfig {
    pub fn data_path(&self, config_path: &Path) -> PathBuf {
        if self.data.path.is_absolute() {
            self.data.path.clone()
        } else {
            config_path.parent().unwrap_or(Path::new(".")).join(&self.data.path)
        }
    }
}
