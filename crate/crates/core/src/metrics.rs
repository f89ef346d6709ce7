//! Rule quality: coverage, confidence, the penalized objective `M(n)` and
//! per-ruleset aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Dataset, SplitSelector};
use crate::error::{Error, Result};
use crate::predict::Classifier;
use crate::rule::Rule;
use crate::ruleset::RuleSet;

/// Evaluation instances together with the model's labels for them.
///
/// Built once per (dataset, predictor, split) and shared by every rule that
/// is scored against it.
pub struct EvalSplit<'a> {
    dataset: &'a Dataset,
    indices: Vec<usize>,
    predictions: Vec<ClassLabel>,
}

impl<'a> EvalSplit<'a> {
    pub fn new(dataset: &'a Dataset, predictor: &dyn Classifier, split: SplitSelector) -> Result<Self> {
        let indices = dataset.indices(split);
        Self::from_indices(dataset, predictor, indices)
    }

    pub fn from_indices(dataset: &'a Dataset, predictor: &dyn Classifier, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("evaluation split is empty".into()));
        }
        let predictions = predictor.predict_batch(&dataset.gather(&indices))?;
        Ok(Self {
            dataset,
            indices,
            predictions,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn predictions(&self) -> &[ClassLabel] {
        &self.predictions
    }

    /// `(|S(R)|, |T(R)|)`: satisfying instances and those among them whose
    /// predicted label equals the rule's class.
    pub fn counts(&self, rule: &Rule) -> Result<(usize, usize)> {
        let ds = self.dataset;
        rule.check_bounds(ds.timesteps(), ds.channels())?;
        let mut satisfied = 0;
        let mut agreeing = 0;
        for (&n, &pred) in self.indices.iter().zip(&self.predictions) {
            if rule.matches(ds.instance(n), ds.channels()) {
                satisfied += 1;
                if pred == rule.predicted_class() {
                    agreeing += 1;
                }
            }
        }
        Ok((satisfied, agreeing))
    }

    /// `(CONF, COV)` of a rule on this split.
    pub fn quality(&self, rule: &Rule) -> Result<(Option<f64>, f64)> {
        let (satisfied, agreeing) = self.counts(rule)?;
        let coverage = satisfied as f64 / self.len() as f64;
        let confidence = (satisfied > 0).then(|| agreeing as f64 / satisfied as f64);
        Ok((confidence, coverage))
    }
}

/// Fraction of evaluation instances satisfying the rule.
pub fn coverage(rule: &Rule, eval: &EvalSplit<'_>) -> Result<f64> {
    Ok(eval.quality(rule)?.1)
}

/// Fraction of satisfying instances predicted as the rule's class; `None`
/// when no instance satisfies the rule.
pub fn confidence(rule: &Rule, eval: &EvalSplit<'_>) -> Result<Option<f64>> {
    Ok(eval.quality(rule)?.0)
}

/// Copy of `rule` with confidence and coverage recomputed on `eval`.
pub fn annotate(rule: &Rule, eval: &EvalSplit<'_>) -> Result<Rule> {
    let (conf, cov) = eval.quality(rule)?;
    Ok(rule.clone().with_quality(conf, cov))
}

/// Recomputes confidence and coverage of every rule in the set.
pub fn annotate_ruleset(ruleset: &RuleSet, eval: &EvalSplit<'_>) -> Result<RuleSet> {
    let mut out = ruleset.clone();
    for rule in out.rules.values_mut().flatten() {
        *rule = annotate(rule, eval)?;
    }
    Ok(out)
}

/// Thresholds of the sequential penalties applied to `COV x CONF`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub tau_conf: f64,
    pub tau_cov: f64,
    pub tau_feat: f64,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            tau_conf: 0.5,
            tau_cov: 0.01,
            tau_feat: 10.0,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if [self.tau_conf, self.tau_cov, self.tau_feat]
            .iter()
            .all(|&v| v.is_finite() && v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::Config(format!("objective thresholds must be positive: {self:?}")))
        }
    }
}

/// `M(n)` from already-evaluated figures. Absent rules and undefined
/// confidence score zero.
pub fn objective_value(
    confidence: Option<f64>,
    coverage: f64,
    feature_count: usize,
    params: &ObjectiveParams,
) -> f64 {
    let Some(conf) = confidence else {
        return 0.0;
    };
    if feature_count == 0 {
        return 0.0;
    }
    let mut m = coverage * conf;
    if conf > 0.0 && conf < params.tau_conf {
        m *= conf / params.tau_conf;
    }
    if coverage > 0.0 && coverage < params.tau_cov {
        m *= coverage / params.tau_cov;
    }
    let count = feature_count as f64;
    if count > params.tau_feat {
        m *= params.tau_feat / count;
    }
    m
}

/// `M(n)` of a rule using its stored confidence and coverage.
pub fn objective(rule: Option<&Rule>, params: &ObjectiveParams) -> f64 {
    rule.map_or(0.0, |r| {
        objective_value(r.confidence(), r.coverage(), r.feature_count(), params)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance: usize,
    pub has_rule: bool,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "COV")]
    pub coverage: Option<f64>,
    #[serde(rename = "CONF")]
    pub confidence: Option<f64>,
    pub feature_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub provenance: String,
    pub instances: usize,
    #[serde(rename = "mean_M")]
    pub mean_m: f64,
    #[serde(rename = "ER")]
    pub explained_ratio: f64,
    #[serde(rename = "mean_CONF")]
    pub mean_confidence: Option<f64>,
    #[serde(rename = "mean_COV")]
    pub mean_coverage: Option<f64>,
    pub mean_features: Option<f64>,
    pub median_features: Option<f64>,
    #[serde(rename = "CONF_x_ER")]
    pub conf_er: Option<f64>,
    #[serde(rename = "CONF_x_COV_x_ER")]
    pub conf_cov_er: Option<f64>,
    pub per_instance: Vec<InstanceMetrics>,
}

impl MetricsReport {
    /// Looks up an aggregate by its JSON field name (`mean_M`, `ER`, ...).
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "mean_M" => Some(self.mean_m),
            "ER" => Some(self.explained_ratio),
            "mean_CONF" => self.mean_confidence,
            "mean_COV" => self.mean_coverage,
            "mean_features" => self.mean_features,
            "median_features" => self.median_features,
            "CONF_x_ER" => self.conf_er,
            "CONF_x_COV_x_ER" => self.conf_cov_er,
            _ => None,
        }
    }

    pub const METRIC_NAMES: [&'static str; 8] = [
        "mean_M",
        "ER",
        "mean_CONF",
        "mean_COV",
        "mean_features",
        "median_features",
        "CONF_x_ER",
        "CONF_x_COV_x_ER",
    ];
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Per-instance metrics with COV/CONF recomputed on `eval`.
pub fn instance_metrics(
    instance: usize,
    rule: Option<&Rule>,
    eval: &EvalSplit<'_>,
    params: &ObjectiveParams,
) -> Result<InstanceMetrics> {
    Ok(match rule {
        None => InstanceMetrics {
            instance,
            has_rule: false,
            m: 0.0,
            coverage: None,
            confidence: None,
            feature_count: 0,
        },
        Some(rule) => {
            let (conf, cov) = eval.quality(rule)?;
            InstanceMetrics {
                instance,
                has_rule: true,
                m: objective_value(conf, cov, rule.feature_count(), params),
                coverage: Some(cov),
                confidence: conf,
                feature_count: rule.feature_count(),
            }
        }
    })
}

/// Mean of `M(n)` over all explained instances, in instance order.
pub fn mean_objective(per_instance: &[InstanceMetrics]) -> f64 {
    if per_instance.is_empty() {
        return 0.0;
    }
    per_instance.iter().map(|m| m.m).sum::<f64>() / per_instance.len() as f64
}

/// Aggregates a rule set. `M̄` averages over every explained instance (absent
/// rules count as zero); the CONF/COV/feature means cover only instances
/// with rules.
pub fn report(ruleset: &RuleSet, eval: &EvalSplit<'_>, params: &ObjectiveParams) -> Result<MetricsReport> {
    let per_instance = ruleset
        .rules
        .iter()
        .map(|(&n, rule)| instance_metrics(n, rule.as_ref(), eval, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(
        eval.dataset().name(),
        &ruleset.provenance,
        per_instance,
    ))
}

pub fn summarize(dataset: &str, provenance: &str, mut per_instance: Vec<InstanceMetrics>) -> MetricsReport {
    per_instance.sort_by_key(|m| m.instance);
    let instances = per_instance.len();
    let with_rules: Vec<&InstanceMetrics> = per_instance.iter().filter(|m| m.has_rule).collect();
    let explained_ratio = if instances == 0 {
        0.0
    } else {
        with_rules.len() as f64 / instances as f64
    };
    let confs: Vec<f64> = with_rules.iter().filter_map(|m| m.confidence).collect();
    let covs: Vec<f64> = with_rules.iter().filter_map(|m| m.coverage).collect();
    let feats: Vec<f64> = with_rules.iter().map(|m| m.feature_count as f64).collect();
    let mean_confidence = mean(&confs);
    let mean_coverage = mean(&covs);
    MetricsReport {
        dataset: dataset.to_string(),
        provenance: provenance.to_string(),
        instances,
        mean_m: mean_objective(&per_instance),
        explained_ratio,
        mean_confidence,
        mean_coverage,
        mean_features: mean(&feats),
        median_features: median(&feats),
        conf_er: mean_confidence.map(|c| c * explained_ratio),
        conf_cov_er: mean_confidence
            .zip(mean_coverage)
            .map(|(c, v)| c * v * explained_ratio),
        per_instance,
    }
}

/// Per-instance `M(n)` keyed by instance, for paired comparisons.
pub fn objective_by_instance(report: &MetricsReport) -> BTreeMap<usize, f64> {
    report.per_instance.iter().map(|m| (m.instance, m.m)).collect()
}
