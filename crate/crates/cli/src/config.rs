//! Pipeline configuration file (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use phar_core::attrib::OcclusionBaseline;
use phar_core::fuse::{FusionConfig, FusionMethod, WeightMetric};
use phar_core::{ExtractionConfig, ObjectiveParams, PlotSpec, TuneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub jobs: Option<usize>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    #[serde(default)]
    pub attributions: Vec<SourceSection>,
    #[serde(default)]
    pub extract: ExtractionConfig,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub fusion: Option<FusionSection>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub stats: Option<StatsSection>,
    #[serde(default)]
    pub plot: Option<PlotSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    #[serde(default = "default_predictor")]
    pub kind: String,
}

fn default_predictor() -> String {
    "centroid".into()
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            kind: default_predictor(),
        }
    }
}

/// One explainer output: an attribution CSV, anchor rule text, or an
/// occlusion baseline computed on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub tag: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub anchor: Option<PathBuf>,
    #[serde(default)]
    pub occlusion: Option<OcclusionBaseline>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Attributions(PathBuf),
    Anchor(PathBuf),
    Occlusion(OcclusionBaseline),
}

impl SourceSection {
    pub fn kind(&self) -> Result<SourceKind> {
        match (&self.path, &self.anchor, self.occlusion) {
            (Some(p), None, None) => Ok(SourceKind::Attributions(p.clone())),
            (None, Some(p), None) => Ok(SourceKind::Anchor(p.clone())),
            (None, None, Some(b)) => Ok(SourceKind::Occlusion(b)),
            _ => bail!(
                "attribution source {:?} needs exactly one of path, anchor or occlusion",
                self.tag
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub methods: Vec<FusionMethod>,
    #[serde(default)]
    pub weight_metric: WeightMetric,
    #[serde(default = "default_presence")]
    pub presence_threshold: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_lambda_ratio")]
    pub lambda_ratio: f64,
    #[serde(default = "default_beta_tol")]
    pub beta_zero_tol: f64,
}

fn default_presence() -> f64 {
    0.5
}

fn default_lambda_ratio() -> f64 {
    0.01
}

fn default_beta_tol() -> f64 {
    1e-6
}

impl FusionSection {
    pub fn config_for(&self, method: FusionMethod, objective: ObjectiveParams) -> FusionConfig {
        FusionConfig {
            method,
            weight_metric: self.weight_metric,
            presence_threshold: self.presence_threshold,
            lambda: self.lambda,
            lambda_ratio: self.lambda_ratio,
            beta_zero_tol: self.beta_zero_tol,
            objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub objective: ObjectiveParams,
}

fn yes() -> bool {
    true
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            enabled: true,
            objective: ObjectiveParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSection {
    /// Also plot every source rule set, not only fused ones.
    #[serde(default = "yes")]
    pub sources: bool,
    #[serde(default)]
    pub spec: PlotSpec,
}

/// A parsed config together with its raw text and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.extract.validate()?;
        config.evaluate.objective.validate()?;
        for s in &config.attributions {
            s.kind()?;
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self {
            config,
            text,
            base_dir,
        })
    }

    /// Paths in the config are relative to the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}
