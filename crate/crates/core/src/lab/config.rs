//! Experiment configuration (TOML) with path-qualified validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::SimulationSpec;
use super::LabError;
use crate::actuarial::{EconomicAssumptions, MakehamParams};
use crate::classifiers::{presets, ModelKind, ModelSpec};
use crate::portfolio::PricingBasis;
use crate::resampling::{ResamplePlan, Scheme};
use crate::surrender::SurrenderProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Required, either here or on the command line.
    pub seed: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub profile: ProfileSection,
    #[serde(default)]
    pub portfolio: PortfolioSection,
    #[serde(default)]
    pub mortality: MakehamParams,
    #[serde(default)]
    pub economics: EconomicAssumptions,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub models: ModelsSection,
    pub resampling: Option<ResamplingSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    /// Directory relative paths resolve against (the config file's directory).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioSection {
    pub n0: usize,
    pub horizon: u32,
    pub new_business_rate: f64,
    pub tie_rule: bool,
}

impl Default for PortfolioSection {
    fn default() -> Self {
        let s = SimulationSpec::default();
        Self {
            n0: s.n0,
            horizon: s.horizon,
            new_business_rate: s.new_business_rate,
            tie_rule: s.tie_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub share: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { share: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsSection {
    pub roster: Vec<String>,
    /// Profile whose tuned hyperparameters seed every model (1 to 4).
    pub preset: u8,
    /// Per-model hyperparameter overrides, keyed by model name.
    pub overrides: BTreeMap<String, toml::Table>,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            roster: ["baseline", "logistic_bag", "random_forest", "gbt"]
                .map(String::from)
                .to_vec(),
            preset: 1,
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResamplingSection {
    pub scheme: String,
    #[serde(default = "half")]
    pub target_minority_share: f64,
    #[serde(default = "five")]
    pub smote_k: usize,
}

fn half() -> f64 {
    0.5
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Confidence level of the yearly bands.
    #[serde(alias = "alpha")]
    pub level: f64,
    pub thresholds: Vec<f64>,
    /// Map predictions of resampled models back to the original base rate.
    pub bias_correction: bool,
    /// Model examined by the bias study.
    pub study_model: String,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            level: 0.95,
            thresholds: vec![0.5],
            bias_correction: true,
            study_model: "logistic_bag".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses TOML text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, LabError> {
        let de = toml::Deserializer::parse(text).map_err(|e| LabError::config(origin, e.to_string().trim()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            LabError::config(format!("{origin}:{path}"), e.into_inner().to_string().trim())
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn profile_path(&self) -> PathBuf {
        self.resolve(&self.profile.path)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn seed(&self) -> Result<u64, LabError> {
        self.seed
            .ok_or_else(|| LabError::config("seed", "missing; set `seed` in the config or pass --seed"))
    }

    pub fn load_profile(&self) -> Result<SurrenderProfile, LabError> {
        let path = self.profile_path();
        if !path.is_file() {
            return Err(LabError::config("profile.path", format!("{} does not exist", path.display())));
        }
        Ok(SurrenderProfile::load(&path)?)
    }

    pub fn simulation(&self) -> SimulationSpec {
        SimulationSpec {
            n0: self.portfolio.n0,
            horizon: self.portfolio.horizon,
            new_business_rate: self.portfolio.new_business_rate,
            pricing: PricingBasis {
                economics: self.economics,
                mortality: self.mortality,
            },
            tie_rule: self.portfolio.tie_rule,
        }
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, LabError> {
        let mut kinds = Vec::new();
        for (i, name) in self.models.roster.iter().enumerate() {
            let kind: ModelKind = name
                .parse()
                .map_err(|e: String| LabError::config(format!("models.roster[{i}]"), e))?;
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        Ok(kinds)
    }

    /// Preset hyperparameters of `kind` with the configured overrides applied.
    pub fn model_spec(&self, kind: ModelKind) -> Result<ModelSpec, LabError> {
        let preset = presets::spec(kind, self.models.preset)
            .ok_or_else(|| LabError::config("models.preset", format!("no preset {}", self.models.preset)))?;
        let overrides = self
            .models
            .overrides
            .iter()
            .filter(|(name, _)| name.parse::<ModelKind>().ok() == Some(kind))
            .collect::<Vec<_>>();
        if overrides.is_empty() {
            return Ok(preset);
        }
        let mut value = serde_json::to_value(&preset).expect("model specs serialize");
        let obj = value.as_object_mut().expect("tagged spec is an object");
        for (name, table) in &overrides {
            for (key, v) in table.iter() {
                let v = serde_json::to_value(v).map_err(|e| LabError::config(format!("models.overrides.{name}.{key}"), e.to_string()))?;
                obj.insert(key.clone(), v);
            }
        }
        let spec: ModelSpec = serde_json::from_value(value).map_err(|e| {
            LabError::config(format!("models.overrides.{}", overrides[0].0), e.to_string())
        })?;
        spec.validate()
            .map_err(|e| LabError::config(format!("models.overrides.{}", overrides[0].0), e.to_string()))?;
        Ok(spec)
    }

    pub fn resample_plan(&self) -> Result<Option<ResamplePlan>, LabError> {
        let Some(r) = &self.resampling else {
            return Ok(None);
        };
        let scheme: Scheme = r
            .scheme
            .parse()
            .map_err(|e: String| LabError::config("resampling.scheme", e))?;
        let plan = ResamplePlan {
            scheme,
            target_minority_share: r.target_minority_share,
            smote_k: r.smote_k,
            seed: self.seed()?,
        };
        plan.validate()
            .map_err(|e| LabError::config("resampling", e.to_string()))?;
        Ok(Some(plan))
    }

    /// Semantic checks beyond the schema; the first failure is reported.
    pub fn validate(&self) -> Result<(), LabError> {
        self.seed()?;
        self.load_profile()?;
        let p = &self.portfolio;
        if p.n0 == 0 {
            return Err(LabError::config("portfolio.n0", "must be positive"));
        }
        if p.horizon < 2 {
            return Err(LabError::config("portfolio.horizon", "needs at least 2 years to split"));
        }
        if !(p.new_business_rate >= 0.0 && p.new_business_rate.is_finite()) {
            return Err(LabError::config("portfolio.new_business_rate", "must be a non-negative number"));
        }
        self.mortality
            .validate()
            .map_err(|e| LabError::config("mortality", e.to_string()))?;
        self.economics
            .validate()
            .map_err(|e| LabError::config("economics", e.to_string()))?;
        if !(self.split.share > 0.0 && self.split.share < 1.0) {
            return Err(LabError::config("split.share", "must lie in (0, 1)"));
        }
        if self.models.roster.is_empty() {
            return Err(LabError::config("models.roster", "is empty"));
        }
        for kind in self.model_kinds()? {
            self.model_spec(kind)?;
        }
        for name in self.models.overrides.keys() {
            name.parse::<ModelKind>()
                .map_err(|e| LabError::config(format!("models.overrides.{name}"), e))?;
        }
        self.resample_plan()?;
        let e = &self.evaluation;
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(LabError::config("evaluation.level", "must lie in (0, 1)"));
        }
        if e.thresholds.is_empty() {
            return Err(LabError::config("evaluation.thresholds", "is empty"));
        }
        for (i, t) in e.thresholds.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(LabError::config(format!("evaluation.thresholds[{i}]"), "must lie in [0, 1]"));
            }
        }
        e.study_model
            .parse::<ModelKind>()
            .map_err(|m| LabError::config("evaluation.study_model", m))?;
        Ok(())
    }

    /// Canonical serialization, the input of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
