//! Interval rules for time-series classifiers, built from feature
//! attributions.
//!
//! The crate turns per-instance attribution scores into half-open interval
//! rules, scores them by coverage and confidence, fuses rules coming from
//! several explainers and compares the results with rank statistics.

pub mod anchor;
pub mod attrib;
pub mod config;
pub mod dataset;
pub mod error;
pub mod extract;
pub mod fuse;
pub mod metrics;
pub mod predict;
pub mod rule;
pub mod ruleset;
pub mod stats;
pub mod synth;
pub mod tune;
pub mod viz;

pub use anchor::{parse_anchor_rules, parse_anchor_text, ANCHOR_TAG};
pub use attrib::{load_attributions, occlusion_attribution, AttributionTensor, OcclusionBaseline};
pub use config::{DeltaSource, ExtractionConfig};
pub use dataset::{ClassLabel, Dataset, Split, SplitSelector};
pub use error::{Error, Result};
pub use extract::{extract_ruleset, Extractor};
pub use fuse::{fuse, FusionConfig, FusionMethod, WeightMetric};
pub use metrics::{objective, report, EvalSplit, MetricsReport, ObjectiveParams};
pub use predict::{Classifier, ExternalPredictor, FnClassifier, Predictor, PredictorKind};
pub use rule::{Condition, FeatureId, Interval, Rule};
pub use ruleset::{ConfigSnapshot, RuleSet};
pub use tune::{tune, TuneConfig, TuneOutcome};
pub use viz::{render_svg, PlotSpec};
