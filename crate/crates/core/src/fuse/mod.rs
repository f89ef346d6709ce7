//! Combining per-instance rules from several explainers into one rule set.

pub mod lasso;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::metrics::{annotate_ruleset, objective, EvalSplit, ObjectiveParams};
use crate::predict::Classifier;
use crate::rule::{Condition, FeatureId, Interval, Rule, RuleShape};
use crate::ruleset::{ConfigSnapshot, RuleSet};

use lasso::{LassoProblem, LassoSolution, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Intersection,
    Union,
    Weighted,
    Lasso,
    LassoGlobal,
    Best,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 6] = [
        FusionMethod::Intersection,
        FusionMethod::Union,
        FusionMethod::Weighted,
        FusionMethod::Lasso,
        FusionMethod::LassoGlobal,
        FusionMethod::Best,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::Intersection => "intersection",
            FusionMethod::Union => "union",
            FusionMethod::Weighted => "weighted",
            FusionMethod::Lasso => "lasso",
            FusionMethod::LassoGlobal => "lasso_global",
            FusionMethod::Best => "best",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "intersection" => Ok(FusionMethod::Intersection),
            "union" => Ok(FusionMethod::Union),
            "weighted" => Ok(FusionMethod::Weighted),
            "lasso" | "lasso_local" => Ok(FusionMethod::Lasso),
            "lasso_global" | "global_lasso" => Ok(FusionMethod::LassoGlobal),
            "best" => Ok(FusionMethod::Best),
            _ => Err(Error::Config(format!("unknown fusion method {s:?}"))),
        }
    }
}

/// Per-rule quantity used by weighted and best-of fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMetric {
    #[default]
    Confidence,
    Coverage,
    Objective,
}

impl WeightMetric {
    /// `None` when the metric is undefined for the rule.
    pub fn value(self, rule: &Rule, params: &ObjectiveParams) -> Option<f64> {
        match self {
            WeightMetric::Confidence => rule.confidence(),
            WeightMetric::Coverage => Some(rule.coverage()),
            WeightMetric::Objective => Some(objective(Some(rule), params)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub method: FusionMethod,
    #[serde(default)]
    pub weight_metric: WeightMetric,
    /// A feature survives weighted fusion when its weighted presence is
    /// strictly above this value.
    #[serde(default = "default_presence")]
    pub presence_threshold: f64,
    /// Explicit penalty; when absent `lambda_ratio * lambda_max` is used.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_lambda_ratio")]
    pub lambda_ratio: f64,
    #[serde(default = "default_beta_tol")]
    pub beta_zero_tol: f64,
    #[serde(default)]
    pub objective: ObjectiveParams,
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

impl FusionConfig {
    pub fn new(method: FusionMethod) -> Self {
        Self {
            method,
            weight_metric: WeightMetric::default(),
            presence_threshold: default_presence(),
            lambda: None,
            lambda_ratio: default_lambda_ratio(),
            beta_zero_tol: default_beta_tol(),
            objective: ObjectiveParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.presence_threshold) {
            return Err(Error::Config(format!(
                "presence_threshold {} outside [0, 1)",
                self.presence_threshold
            )));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.lambda_ratio.is_finite() && self.lambda_ratio > 0.0) {
            return Err(Error::Config(format!(
                "lambda_ratio must be positive, got {}",
                self.lambda_ratio
            )));
        }
        if self.beta_zero_tol.is_nan() || self.beta_zero_tol < 0.0 {
            return Err(Error::Config("beta_zero_tol must be non-negative".into()));
        }
        self.objective.validate()
    }
}

/// Order used to break ties between sources.
pub fn source_priority(tag: &str) -> (usize, String) {
    let rank = match tag {
        "ANCHOR" => 0,
        "LIME" => 1,
        "SHAP" => 2,
        _ => 3,
    };
    (rank, tag.to_string())
}

fn hull(a: &Interval, b: &Interval) -> Option<Interval> {
    Some(a.hull(b))
}

/// Common class of the rules present for `instance`, or a conflict error.
pub fn reference_class(sources: &[&RuleSet], instance: usize) -> Result<Option<ClassLabel>> {
    let mut class = None;
    for rule in sources.iter().filter_map(|s| s.rule(instance)) {
        match class {
            None => class = Some(rule.predicted_class()),
            Some(c) if c != rule.predicted_class() => {
                return Err(Error::FusionConflict { instance });
            }
            Some(_) => {}
        }
    }
    Ok(class)
}

pub fn fuse_intersection(sources: &[&RuleSet], instance: usize) -> Result<Option<Rule>> {
    let Some(class) = reference_class(sources, instance)? else {
        return Ok(None);
    };
    let mut rules = Vec::with_capacity(sources.len());
    for s in sources {
        match s.rule(instance) {
            Some(r) => rules.push(r),
            None => return Ok(None),
        }
    }
    let mut conditions = Vec::new();
    'features: for cond in rules[0].conditions() {
        let mut interval = cond.interval;
        for other in &rules[1..] {
            let Some(c) = other.condition_for(cond.feature) else {
                continue 'features;
            };
            match interval.intersect(&c.interval) {
                Some(i) => interval = i,
                None => return Ok(None),
            }
        }
        conditions.push(Condition::new(cond.feature, interval));
    }
    if conditions.is_empty() {
        return Ok(None);
    }
    Ok(Some(Rule::new(conditions, class, instance)?))
}

pub fn fuse_union(sources: &[&RuleSet], instance: usize) -> Result<Option<Rule>> {
    let Some(class) = reference_class(sources, instance)? else {
        return Ok(None);
    };
    let conditions = sources
        .iter()
        .filter_map(|s| s.rule(instance))
        .flat_map(|r| r.conditions().iter().copied());
    Ok(Rule::from_merged(conditions, class, instance, hull))
}

pub fn fuse_weighted(
    sources: &[&RuleSet],
    instance: usize,
    metric: WeightMetric,
    threshold: f64,
    params: &ObjectiveParams,
) -> Result<Option<Rule>> {
    let Some(class) = reference_class(sources, instance)? else {
        return Ok(None);
    };
    let weighted: Vec<(&Rule, f64)> = sources
        .iter()
        .filter_map(|s| s.rule(instance))
        .map(|r| (r, metric.value(r, params).unwrap_or(0.0).max(0.0)))
        .collect();
    let total: f64 = weighted.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights { instance });
    }
    let mut presence: BTreeMap<FeatureId, f64> = BTreeMap::new();
    for (rule, w) in &weighted {
        for c in rule.conditions() {
            *presence.entry(c.feature).or_default() += w;
        }
    }
    let kept: BTreeSet<FeatureId> = presence
        .into_iter()
        .filter(|(_, p)| p / total > threshold)
        .map(|(f, _)| f)
        .collect();
    let conditions = weighted
        .iter()
        .flat_map(|(r, _)| r.conditions().iter().copied())
        .filter(|c| kept.contains(&c.feature));
    Ok(Rule::from_merged(conditions, class, instance, hull))
}

/// Highest-scoring source rule. Undefined scores rank below every defined
/// one; ties go to the earlier source in [`source_priority`] order.
pub fn fuse_best(
    sources: &[&RuleSet],
    instance: usize,
    metric: WeightMetric,
    params: &ObjectiveParams,
) -> Result<Option<Rule>> {
    reference_class(sources, instance)?;
    let mut order: Vec<&RuleSet> = sources.to_vec();
    order.sort_by_key(|s| source_priority(&s.provenance));
    let mut best: Option<(&Rule, f64)> = None;
    for s in order {
        let Some(rule) = s.rule(instance) else { continue };
        let score = metric.value(rule, params).unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((rule, score));
        }
    }
    Ok(best.map(|(r, _)| r.clone().with_source_instance(instance)))
}

/// TRAIN-side data shared by the lasso variants.
pub struct TrainContext<'a> {
    pub rows: Vec<&'a [f64]>,
    pub predictions: Vec<ClassLabel>,
    pub channels: usize,
}

impl<'a> TrainContext<'a> {
    pub fn new(eval: &EvalSplit<'a>, predictor: &dyn Classifier) -> Result<Self> {
        let dataset = eval.dataset();
        let indices = dataset.train_indices();
        if indices.is_empty() {
            return Err(Error::Fit("lasso fusion needs TRAIN instances".into()));
        }
        let predictions = predictor.predict_batch(&dataset.gather(&indices))?;
        Ok(Self {
            rows: indices.iter().map(|&i| dataset.instance(i)).collect(),
            predictions,
            channels: dataset.channels(),
        })
    }

    fn indicator(&self, cond: &Condition) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| f64::from(u8::from(cond.is_satisfied_by(row, self.channels))))
            .collect()
    }

    fn targets(&self, class: ClassLabel) -> Vec<f64> {
        self.predictions
            .iter()
            .map(|&p| f64::from(u8::from(p == class)))
            .collect()
    }
}

fn solve_with_config(problem: &LassoProblem, config: &FusionConfig) -> Option<LassoSolution> {
    let lambda = match config.lambda {
        Some(l) => l,
        None => {
            let lmax = problem.lambda_max();
            if lmax <= 0.0 {
                return None;
            }
            config.lambda_ratio * lmax
        }
    };
    let sol = lasso::solve(problem, lambda, &SolverOptions::default());
    if !sol.converged {
        log::warn!(
            "lasso did not converge after {} sweeps; using the last iterate",
            sol.sweeps
        );
    }
    Some(sol)
}

/// Per-instance lasso: candidate conditions from every source are columns,
/// TRAIN agreement with the instance's class is the response, and surviving
/// conditions on the same feature are merged by union.
pub fn fuse_lasso_local(
    sources: &[&RuleSet],
    instance: usize,
    train: &TrainContext<'_>,
    config: &FusionConfig,
) -> Result<Option<Rule>> {
    let Some(class) = reference_class(sources, instance)? else {
        return Ok(None);
    };
    let candidates: Vec<Condition> = sources
        .iter()
        .filter_map(|s| s.rule(instance))
        .flat_map(|r| r.conditions().iter().copied())
        .collect();
    let problem = LassoProblem::with_intercept(
        train.targets(class),
        candidates.iter().map(|c| train.indicator(c)).collect(),
    );
    let Some(sol) = solve_with_config(&problem, config) else {
        return Ok(None);
    };
    let survivors = candidates
        .into_iter()
        .zip(&sol.coefficients)
        .filter(|(_, b)| b.abs() > config.beta_zero_tol)
        .map(|(c, _)| c);
    Ok(Rule::from_merged(survivors, class, instance, hull))
}

type ColumnKey = (ClassLabel, FeatureId, u64, u64);

fn column_key(class: ClassLabel, c: &Condition) -> ColumnKey {
    (
        class,
        c.feature,
        c.interval.lower().to_bits(),
        c.interval.upper().to_bits(),
    )
}

/// One lasso over all instances. Each class contributes a block of TRAIN rows
/// with its own intercept; a condition column is non-zero only in the block
/// of the class its rule predicts. Instances without any source rule receive
/// the most frequent fused rule of their predicted class (or overall).
pub fn fuse_lasso_global(
    sources: &[&RuleSet],
    domain: &[usize],
    predicted: &BTreeMap<usize, ClassLabel>,
    train: &TrainContext<'_>,
    config: &FusionConfig,
) -> Result<BTreeMap<usize, Option<Rule>>> {
    let mut per_instance: Vec<(usize, Option<(ClassLabel, Vec<Condition>)>)> = Vec::new();
    let mut columns: BTreeMap<ColumnKey, Condition> = BTreeMap::new();
    for &n in domain {
        let entry = match reference_class(sources, n)? {
            Some(class) => {
                let conds: Vec<Condition> = sources
                    .iter()
                    .filter_map(|s| s.rule(n))
                    .flat_map(|r| r.conditions().iter().copied())
                    .collect();
                for c in &conds {
                    columns.insert(column_key(class, c), *c);
                }
                Some((class, conds))
            }
            None => None,
        };
        per_instance.push((n, entry));
    }

    let classes: Vec<ClassLabel> = columns
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let block = train.rows.len();
    let total_rows = block * classes.len();
    let block_of: HashMap<ClassLabel, usize> =
        classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut y = vec![0.0; total_rows];
    let mut intercepts = vec![vec![0.0; total_rows]; classes.len()];
    for (b, &class) in classes.iter().enumerate() {
        let targets = train.targets(class);
        y[b * block..(b + 1) * block].copy_from_slice(&targets);
        intercepts[b][b * block..(b + 1) * block].fill(1.0);
    }
    let keys: Vec<ColumnKey> = columns.keys().copied().collect();
    let penalized: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|key| {
            let b = block_of[&key.0];
            let mut col = vec![0.0; total_rows];
            col[b * block..(b + 1) * block].copy_from_slice(&train.indicator(&columns[key]));
            col
        })
        .collect();
    let problem = LassoProblem {
        y,
        unpenalized: intercepts,
        penalized,
    };

    let surviving: BTreeSet<ColumnKey> = match solve_with_config(&problem, config) {
        Some(sol) => keys
            .iter()
            .zip(&sol.coefficients)
            .filter(|(_, b)| b.abs() > config.beta_zero_tol)
            .map(|(k, _)| *k)
            .collect(),
        None => BTreeSet::new(),
    };

    let mut out: BTreeMap<usize, Option<Rule>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (n, entry) in per_instance {
        match entry {
            Some((class, conds)) => {
                let kept = conds
                    .into_iter()
                    .filter(|c| surviving.contains(&column_key(class, c)));
                out.insert(n, Rule::from_merged(kept, class, n, hull));
            }
            None => missing.push(n),
        }
    }

    let imputations = impute_table(&out);
    for n in missing {
        let pick = predicted
            .get(&n)
            .and_then(|c| imputations.by_class.get(c))
            .or(imputations.overall.as_ref())
            .map(|r| r.clone().with_source_instance(n));
        out.insert(n, pick);
    }
    Ok(out)
}

struct Imputations {
    by_class: HashMap<ClassLabel, Rule>,
    overall: Option<Rule>,
}

/// Most frequent rule structure, per class and overall. Ties go to the
/// structure first seen at the lowest instance index.
fn impute_table(fused: &BTreeMap<usize, Option<Rule>>) -> Imputations {
    let mut counts: HashMap<RuleShape, (usize, usize, &Rule)> = HashMap::new();
    for (&n, rule) in fused {
        if let Some(r) = rule {
            counts.entry(r.shape()).or_insert((0, n, r)).0 += 1;
        }
    }
    let better = |a: &(usize, usize, &Rule), b: &(usize, usize, &Rule)| {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    };
    let mut by_class: HashMap<ClassLabel, (usize, usize, &Rule)> = HashMap::new();
    let mut overall: Option<(usize, usize, &Rule)> = None;
    for entry in counts.values() {
        let class = entry.2.predicted_class();
        match by_class.get(&class) {
            Some(cur) if !better(entry, cur) => {}
            _ => {
                by_class.insert(class, *entry);
            }
        }
        if overall.as_ref().is_none_or(|cur| better(entry, cur)) {
            overall = Some(*entry);
        }
    }
    Imputations {
        by_class: by_class
            .into_iter()
            .map(|(c, e)| (c, e.2.clone()))
            .collect(),
        overall: overall.map(|e| e.2.clone()),
    }
}

/// Provenance string of a fused set, e.g. `ANCHOR+LIME+SHAP/lasso`.
pub fn fused_provenance(sources: &[&RuleSet], method: FusionMethod) -> String {
    let tags: BTreeSet<&str> = sources.iter().map(|s| s.provenance.as_str()).collect();
    format!("{}/{}", tags.into_iter().collect::<Vec<_>>().join("+"), method)
}

/// Fuses `sources` over the union of their explained instances.
///
/// Source confidence and coverage are recomputed on `eval` before fusing, and
/// the fused rules are annotated on `eval` afterwards.
pub fn fuse(
    sources: &[RuleSet],
    eval: &EvalSplit<'_>,
    predictor: &dyn Classifier,
    config: &FusionConfig,
) -> Result<RuleSet> {
    config.validate()?;
    if sources.is_empty() {
        return Err(Error::Config("fusion needs at least one source".into()));
    }
    let annotated: Vec<RuleSet> = sources
        .iter()
        .map(|s| annotate_ruleset(s, eval))
        .collect::<Result<_>>()?;
    let mut refs: Vec<&RuleSet> = annotated.iter().collect();
    refs.sort_by_key(|s| source_priority(&s.provenance));
    let domain: Vec<usize> = refs
        .iter()
        .flat_map(|s| s.rules.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dataset = eval.dataset();
    for &n in &domain {
        if n >= dataset.len() {
            return Err(Error::Ingest(format!(
                "rule for instance {n} but the dataset has {} instances",
                dataset.len()
            )));
        }
        reference_class(&refs, n)?;
    }

    let rules: BTreeMap<usize, Option<Rule>> = match config.method {
        FusionMethod::LassoGlobal => {
            let train = TrainContext::new(eval, predictor)?;
            let preds = predictor.predict_batch(&dataset.gather(&domain))?;
            let predicted = domain.iter().copied().zip(preds).collect();
            fuse_lasso_global(&refs, &domain, &predicted, &train, config)?
        }
        method => {
            let train = if method == FusionMethod::Lasso {
                Some(TrainContext::new(eval, predictor)?)
            } else {
                None
            };
            domain
                .par_iter()
                .map(|&n| {
                    let rule = match method {
                        FusionMethod::Intersection => fuse_intersection(&refs, n),
                        FusionMethod::Union => fuse_union(&refs, n),
                        FusionMethod::Weighted => fuse_weighted(
                            &refs,
                            n,
                            config.weight_metric,
                            config.presence_threshold,
                            &config.objective,
                        ),
                        FusionMethod::Best => {
                            fuse_best(&refs, n, config.weight_metric, &config.objective)
                        }
                        FusionMethod::Lasso => {
                            fuse_lasso_local(&refs, n, train.as_ref().unwrap(), config)
                        }
                        FusionMethod::LassoGlobal => unreachable!(),
                    }?;
                    Ok((n, rule))
                })
                .collect::<Result<_>>()?
        }
    };

    let fused = RuleSet {
        provenance: fused_provenance(&refs, config.method),
        rules,
        config: ConfigSnapshot::Fusion(config.clone()),
    };
    annotate_ruleset(&fused, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Split};
    use crate::predict::FnClassifier;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn rule(conds: &[(usize, f64, f64)], class: i64) -> Rule {
        Rule::new(
            conds
                .iter()
                .map(|&(t, a, b)| Condition::new(FeatureId::new(t, 0), iv(a, b)))
                .collect(),
            ClassLabel(class),
            0,
        )
        .unwrap()
    }

    fn set(tag: &str, r: Option<Rule>) -> RuleSet {
        let mut rs = RuleSet::new(tag, ConfigSnapshot::Unknown);
        rs.rules.insert(0, r);
        rs
    }

    #[test]
    fn intersection_and_union() {
        let a = set("SHAP", Some(rule(&[(1, 0.0, 2.0), (2, 0.0, 1.0)], 0)));
        let b = set("LIME", Some(rule(&[(1, 1.0, 3.0), (4, 0.0, 1.0)], 0)));
        let srcs = [&a, &b];
        let i = fuse_intersection(&srcs, 0).unwrap().unwrap();
        assert_eq!(i.feature_count(), 1);
        assert_eq!(i.conditions()[0].interval, iv(1.0, 2.0));
        let u = fuse_union(&srcs, 0).unwrap().unwrap();
        assert_eq!(u.feature_count(), 3);
        assert_eq!(u.condition_for(FeatureId::new(1, 0)).unwrap().interval, iv(0.0, 3.0));
    }

    #[test]
    fn intersection_absent_cases() {
        let a = set("SHAP", Some(rule(&[(1, 0.0, 1.0)], 0)));
        let disjoint = set("LIME", Some(rule(&[(1, 2.0, 3.0)], 0)));
        let other_feature = set("LIME", Some(rule(&[(2, 0.0, 1.0)], 0)));
        let absent = set("LIME", None);
        assert!(fuse_intersection(&[&a, &disjoint], 0).unwrap().is_none());
        assert!(fuse_intersection(&[&a, &other_feature], 0).unwrap().is_none());
        assert!(fuse_intersection(&[&a, &absent], 0).unwrap().is_none());
        assert!(fuse_union(&[&a, &absent], 0).unwrap().is_some());
    }

    #[test]
    fn conflicting_classes_rejected() {
        let a = set("SHAP", Some(rule(&[(1, 0.0, 1.0)], 0)));
        let b = set("LIME", Some(rule(&[(1, 0.0, 1.0)], 1)));
        assert!(matches!(
            fuse_union(&[&a, &b], 0),
            Err(Error::FusionConflict { instance: 0 })
        ));
    }

    #[test]
    fn weighted_presence_is_strict() {
        let params = ObjectiveParams::default();
        let a = set("SHAP", Some(rule(&[(1, 0.0, 1.0)], 0).with_quality(Some(0.5), 0.1)));
        let b = set("LIME", Some(rule(&[(2, 0.0, 1.0)], 0).with_quality(Some(0.5), 0.1)));
        let srcs = [&a, &b];
        assert!(fuse_weighted(&srcs, 0, WeightMetric::Confidence, 0.5, &params)
            .unwrap()
            .is_none());
        let r = fuse_weighted(&srcs, 0, WeightMetric::Confidence, 0.49, &params)
            .unwrap()
            .unwrap();
        assert_eq!(r.feature_count(), 2);
        let zero = set("SHAP", Some(rule(&[(1, 0.0, 1.0)], 0).with_quality(Some(0.0), 0.1)));
        assert!(matches!(
            fuse_weighted(&[&zero], 0, WeightMetric::Confidence, 0.5, &params),
            Err(Error::DegenerateWeights { instance: 0 })
        ));
    }

    #[test]
    fn best_prefers_priority_on_ties() {
        let params = ObjectiveParams::default();
        let shap = set("SHAP", Some(rule(&[(1, 0.0, 1.0)], 0).with_quality(Some(0.8), 0.1)));
        let anchor = set("ANCHOR", Some(rule(&[(2, 0.0, 1.0)], 0).with_quality(Some(0.8), 0.1)));
        let lime = set("LIME", Some(rule(&[(3, 0.0, 1.0)], 0).with_quality(None, 0.0)));
        let r = fuse_best(&[&shap, &lime, &anchor], 0, WeightMetric::Confidence, &params)
            .unwrap()
            .unwrap();
        assert!(r.condition_for(FeatureId::new(2, 0)).is_some());
        let r = fuse_best(&[&lime], 0, WeightMetric::Confidence, &params)
            .unwrap()
            .unwrap();
        assert!(r.condition_for(FeatureId::new(3, 0)).is_some());
    }

    fn toy_dataset() -> Dataset {
        // feature 0 decides the class; feature 1 is noise
        let n = 40;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut split = Vec::new();
        for i in 0..n {
            let x0 = (i as f64) / n as f64;
            let x1 = ((i * 7) % 11) as f64 / 11.0;
            values.extend([x0, x1]);
            labels.push(ClassLabel(i64::from(x0 > 0.5)));
            split.push(if i % 2 == 0 { Split::Train } else { Split::Test });
        }
        Dataset::new("toy", 2, 1, values, labels, split).unwrap()
    }

    fn toy_predictor() -> FnClassifier<impl Fn(&[f64]) -> ClassLabel + Send + Sync> {
        FnClassifier::new(2, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.5)))
    }

    #[test]
    fn local_lasso_drops_noise_condition() {
        let ds = toy_dataset();
        let pred = toy_predictor();
        let eval = EvalSplit::new(&ds, &pred, crate::dataset::SplitSelector::Test).unwrap();
        let train = TrainContext::new(&eval, &pred).unwrap();
        let a = set("SHAP", Some(rule(&[(0, 0.5, f64::INFINITY)], 1)));
        let b = set("LIME", Some(rule(&[(1, 0.3, 0.7)], 1)));
        let cfg = FusionConfig::new(FusionMethod::Lasso);
        let r = fuse_lasso_local(&[&a, &b], 0, &train, &cfg).unwrap().unwrap();
        assert_eq!(r.feature_count(), 1);
        assert_eq!(r.conditions()[0].feature, FeatureId::new(0, 0));
    }

    #[test]
    fn global_lasso_imputes_missing_instances() {
        let ds = toy_dataset();
        let pred = toy_predictor();
        let mut a = RuleSet::new("SHAP", ConfigSnapshot::Unknown);
        a.rules.insert(1, Some(rule(&[(0, 0.5, f64::INFINITY)], 1)));
        a.rules.insert(3, Some(rule(&[(0, f64::NEG_INFINITY, 0.5)], 0)));
        a.rules.insert(39, None);
        a.rules.insert(5, None);
        let eval = EvalSplit::new(&ds, &pred, crate::dataset::SplitSelector::Test).unwrap();
        let fused = fuse(&[a], &eval, &pred, &FusionConfig::new(FusionMethod::LassoGlobal)).unwrap();
        assert_eq!(fused.provenance, "SHAP/lasso_global");
        let r39 = fused.rule(39).unwrap();
        assert_eq!(r39.predicted_class(), ClassLabel(1));
        assert_eq!(r39.source_instance(), 39);
        assert_eq!(fused.rule(5).unwrap().predicted_class(), ClassLabel(0));
        assert_eq!(fused.rule(1).unwrap().confidence(), Some(1.0));
    }

    #[test]
    fn provenance_sorts_tags() {
        let a = set("SHAP", None);
        let b = set("ANCHOR", None);
        let c = set("LIME", None);
        assert_eq!(
            fused_provenance(&[&a, &b, &c], FusionMethod::Lasso),
            "ANCHOR+LIME+SHAP/lasso"
        );
    }

    #[test]
    fn method_parsing() {
        for m in FusionMethod::ALL {
            assert_eq!(m.name().parse::<FusionMethod>().unwrap(), m);
        }
        assert!("magic".parse::<FusionMethod>().is_err());
    }
}
