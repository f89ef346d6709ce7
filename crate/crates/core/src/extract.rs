//! Attribution-to-rule transformation.
//!
//! Important features are those whose absolute attribution reaches a
//! percentile threshold computed on TRAIN rows. For each explained instance
//! the important features are perturbed jointly and uniformly; the class
//! preserving samples define one half-open interval per feature.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attrib::{train_rows, AttributionTensor};
use crate::config::{DeltaSource, ExtractionConfig};
use crate::dataset::{ClassLabel, Dataset, SplitSelector};
use crate::error::{Error, Result};
use crate::metrics::{annotate, EvalSplit};
use crate::predict::Classifier;
use crate::rule::{Condition, FeatureId, Interval, Rule};
use crate::ruleset::{ConfigSnapshot, RuleSet};

/// Percentile `p` in `[0, 100]` of an ascending-sorted slice, interpolating
/// linearly between the closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    quantile(sorted, p / 100.0)
}

/// Quantile `q` in `[0, 1]` of an ascending-sorted slice (linear
/// interpolation between closest ranks).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn sorted_abs(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.map(f64::abs).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Global(f64),
    PerFeature(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    pub thresholds: Thresholds,
    pub percentile: u32,
}

impl ThresholdSet {
    pub fn for_feature(&self, flat_index: usize) -> f64 {
        match &self.thresholds {
            Thresholds::Global(t) => *t,
            Thresholds::PerFeature(ts) => ts[flat_index],
        }
    }
}

/// Thresholds from the TRAIN rows of `attr`.
pub fn compute_thresholds(
    attr: &AttributionTensor,
    dataset: &Dataset,
    config: &ExtractionConfig,
) -> Result<ThresholdSet> {
    let rows = train_rows(attr, dataset);
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "attributions {:?} contain no TRAIN rows to derive thresholds from",
            attr.explainer_tag()
        )));
    }
    Ok(thresholds_from_rows(&rows, config.percentile, config.global_threshold))
}

pub fn thresholds_from_rows(rows: &[&[f64]], percentile_p: u32, global: bool) -> ThresholdSet {
    let p = f64::from(percentile_p);
    let thresholds = if global {
        let all = sorted_abs(rows.iter().flat_map(|r| r.iter().copied()));
        Thresholds::Global(percentile(&all, p))
    } else {
        let width = rows[0].len();
        Thresholds::PerFeature(
            (0..width)
                .map(|f| percentile(&sorted_abs(rows.iter().map(|r| r[f])), p))
                .collect(),
        )
    };
    ThresholdSet {
        thresholds,
        percentile: percentile_p,
    }
}

/// Features with `|e| >= threshold`, in canonical order. A zero attribution
/// never marks a feature as important, even when the threshold is zero.
pub fn select_important(row: &[f64], thresholds: &ThresholdSet, channels: usize) -> Vec<FeatureId> {
    row.iter()
        .enumerate()
        .filter(|&(f, e)| e.abs() > 0.0 && e.abs() >= thresholds.for_feature(f))
        .map(|(f, _)| FeatureId::from_flat_index(f, channels))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    /// Half-width per flat feature index.
    pub deltas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    /// `delta_f = sigma * std_f`, with the standard deviation taken over TRAIN
    /// (raw values or absolute attributions per `config.delta_source`).
    pub fn from_config(attr: &AttributionTensor, dataset: &Dataset, config: &ExtractionConfig) -> Result<Self> {
        let width = dataset.feature_count();
        let columns: Vec<Vec<f64>> = match config.delta_source {
            DeltaSource::Values => {
                let train = dataset.train_indices();
                if train.is_empty() {
                    return Err(Error::Config("TRAIN split is empty".into()));
                }
                (0..width)
                    .map(|f| train.iter().map(|&n| dataset.instance(n)[f]).collect())
                    .collect()
            }
            DeltaSource::Attributions => {
                let rows = train_rows(attr, dataset);
                if rows.is_empty() {
                    return Err(Error::Config("no TRAIN attribution rows".into()));
                }
                (0..width)
                    .map(|f| rows.iter().map(|r| r[f].abs()).collect())
                    .collect()
            }
        };
        Ok(Self {
            deltas: columns
                .iter()
                .map(|c| config.sigma * population_std(c))
                .collect(),
            samples: config.samples,
            seed: config.seed,
        })
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Per-instance RNG, independent of scheduling.
pub fn instance_rng(seed: u64, instance: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ instance as u64)
}

/// Derives the interval rule for instance `n` over `features`.
///
/// Draws `spec.samples` joint perturbations, keeps those the predictor maps
/// to `c_ref`, and takes the `[q, 1 - q]` quantile hull of the kept values
/// per feature, widened so the source value lies inside `(l, u]`. Returns
/// `None` when `features` is empty or no sample keeps the class.
pub fn derive_rule(
    n: usize,
    features: &[FeatureId],
    c_ref: ClassLabel,
    dataset: &Dataset,
    predictor: &dyn Classifier,
    spec: &PerturbationSpec,
    hull_quantile: f64,
) -> Result<Option<Rule>> {
    if features.is_empty() || spec.samples == 0 {
        return Ok(None);
    }
    let channels = dataset.channels();
    let width = dataset.feature_count();
    let x = dataset.instance(n);
    let slots: Vec<usize> = features.iter().map(|f| f.flat_index(channels)).collect();
    let dists: Vec<Option<Uniform<f64>>> = slots
        .iter()
        .map(|&f| {
            let delta = spec.deltas[f];
            (delta > 0.0)
                .then(|| Uniform::new(x[f] - delta, x[f] + delta).ok())
                .flatten()
        })
        .collect();

    let mut rng = instance_rng(spec.seed, n);
    let mut batch = Vec::with_capacity(spec.samples * width);
    for _ in 0..spec.samples {
        let start = batch.len();
        batch.extend_from_slice(x);
        for (&f, dist) in slots.iter().zip(&dists) {
            if let Some(dist) = dist {
                batch[start + f] = dist.sample(&mut rng);
            }
        }
    }
    let labels = predictor.predict_batch(&batch)?;

    let kept: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == c_ref)
        .map(|(m, _)| m)
        .collect();
    if kept.is_empty() {
        return Ok(None);
    }

    let mut conditions = Vec::with_capacity(features.len());
    for (feature, &f) in features.iter().zip(&slots) {
        let mut values: Vec<f64> = kept.iter().map(|&m| batch[m * width + f]).collect();
        values.sort_by(f64::total_cmp);
        let mut lower = quantile(&values, hull_quantile);
        let mut upper = quantile(&values, 1.0 - hull_quantile);
        if upper < x[f] {
            upper = x[f];
        }
        if lower >= x[f] {
            lower = x[f].next_down();
        }
        conditions.push(Condition::new(*feature, Interval::new(lower, upper)?));
    }
    Ok(Some(Rule::new(conditions, c_ref, n)?))
}

/// Prepared extraction state for one attribution tensor and configuration.
pub struct Extractor<'a> {
    attr: &'a AttributionTensor,
    dataset: &'a Dataset,
    predictor: &'a dyn Classifier,
    config: ExtractionConfig,
    thresholds: ThresholdSet,
    spec: PerturbationSpec,
}

impl<'a> Extractor<'a> {
    pub fn new(
        attr: &'a AttributionTensor,
        dataset: &'a Dataset,
        predictor: &'a dyn Classifier,
        config: &ExtractionConfig,
    ) -> Result<Self> {
        if (attr.timesteps(), attr.channels()) != (dataset.timesteps(), dataset.channels()) {
            return Err(Error::dimension(
                format!("{}x{}", dataset.timesteps(), dataset.channels()),
                format!("{}x{}", attr.timesteps(), attr.channels()),
            ));
        }
        if !(0.0..=0.5).contains(&config.hull_quantile) {
            return Err(Error::Config(format!(
                "hull_quantile {} outside [0, 0.5]",
                config.hull_quantile
            )));
        }
        Ok(Self {
            attr,
            dataset,
            predictor,
            thresholds: compute_thresholds(attr, dataset, config)?,
            spec: PerturbationSpec::from_config(attr, dataset, config)?,
            config: config.clone(),
        })
    }

    pub fn thresholds(&self) -> &ThresholdSet {
        &self.thresholds
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    /// Attribution rows that receive rules, in index order.
    pub fn explained_instances(&self) -> Vec<usize> {
        let selector = self.config.explain;
        self.attr
            .instance_indices()
            .filter(|&n| selector.matches(self.dataset.split_of(n)))
            .collect()
    }

    pub fn important_features(&self, n: usize) -> Vec<FeatureId> {
        self.attr.row(n).map_or_else(Vec::new, |row| {
            select_important(row, &self.thresholds, self.dataset.channels())
        })
    }

    pub fn rule_for(&self, n: usize) -> Result<Option<Rule>> {
        let features = self.important_features(n);
        if features.is_empty() {
            return Ok(None);
        }
        let c_ref = self.predictor.predict_one(self.dataset.instance(n))?;
        derive_rule(
            n,
            &features,
            c_ref,
            self.dataset,
            self.predictor,
            &self.spec,
            self.config.hull_quantile,
        )
    }

    /// Rules for `instances`, computed in parallel.
    pub fn rules_for(&self, instances: &[usize]) -> Result<Vec<(usize, Option<Rule>)>> {
        instances
            .par_iter()
            .map(|&n| self.rule_for(n).map(|r| (n, r)))
            .collect()
    }
}

/// Full extraction: thresholds, perturbation intervals and TEST-split
/// confidence/coverage for every explained instance.
pub fn extract_ruleset(
    attr: &AttributionTensor,
    dataset: &Dataset,
    predictor: &dyn Classifier,
    config: &ExtractionConfig,
) -> Result<RuleSet> {
    let extractor = Extractor::new(attr, dataset, predictor, config)?;
    let eval = EvalSplit::new(dataset, predictor, SplitSelector::Test)?;
    let mut rs = RuleSet::new(attr.explainer_tag(), ConfigSnapshot::Extraction(config.clone()));
    for (n, rule) in extractor.rules_for(&extractor.explained_instances())? {
        let rule = rule.map(|r| annotate(&r, &eval)).transpose()?;
        rs.rules.insert(n, rule);
    }
    Ok(rs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::predict::FnClassifier;
    use std::collections::BTreeMap;

    #[test]
    fn percentile_linear_interpolation() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 50.0), 2.5);
        assert_eq!(percentile(&[7.0; 5], 83.0), 7.0);
        assert_eq!(percentile(&[0.0, 10.0], 99.0), 9.9);
        assert_eq!(percentile(&[3.0], 60.0), 3.0);
    }

    #[test]
    fn per_feature_thresholds() {
        let rows: Vec<&[f64]> = vec![&[0.0, 0.0], &[10.0, 2.0]];
        let t = thresholds_from_rows(&rows, 99, false);
        let Thresholds::PerFeature(ts) = &t.thresholds else { panic!() };
        assert!((ts[0] - 9.9).abs() < 1e-12);
        assert!((ts[1] - 1.98).abs() < 1e-12);
        let g = thresholds_from_rows(&[&[1.0, -2.0], &[3.0, 4.0]], 50, true);
        assert_eq!(g.thresholds, Thresholds::Global(2.5));
    }

    #[test]
    fn selection_is_inclusive() {
        let t = ThresholdSet {
            thresholds: Thresholds::Global(0.5),
            percentile: 90,
        };
        assert_eq!(select_important(&[0.9, 0.1], &t, 1), vec![FeatureId::new(0, 0)]);
        assert!(select_important(&[0.2, -0.1], &t, 1).is_empty());
        assert_eq!(select_important(&[0.5, -0.5], &t, 1).len(), 2);
    }

    fn single(x0: f64) -> Dataset {
        Dataset::new("s", 2, 1, vec![x0, 3.0], vec![ClassLabel(0)], vec![Split::Test]).unwrap()
    }

    fn spec(delta: f64, samples: usize) -> PerturbationSpec {
        PerturbationSpec {
            deltas: vec![delta, delta],
            samples,
            seed: 11,
        }
    }

    #[test]
    fn boundary_predictor_interval() {
        let ds = single(0.0);
        let model = FnClassifier::new(2, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.5)));
        let rule = derive_rule(0, &[FeatureId::new(0, 0)], ClassLabel(0), &ds, &model, &spec(1.0, 10_000), 0.0)
            .unwrap()
            .unwrap();
        let iv = rule.conditions()[0].interval;
        assert!(iv.lower() >= -1.0 && iv.upper() <= 0.5, "{iv}");
        assert!(iv.contains(0.0));
        assert!(0.5 - iv.upper() < 1e-3, "{iv}");
    }

    #[test]
    fn constant_predictor_keeps_full_hull() {
        let ds = single(2.0);
        let model = FnClassifier::new(2, 1, |_: &[f64]| ClassLabel(0));
        let rule = derive_rule(0, &[FeatureId::new(0, 0)], ClassLabel(0), &ds, &model, &spec(0.5, 5000), 0.0)
            .unwrap()
            .unwrap();
        let iv = rule.conditions()[0].interval;
        assert!((iv.lower() - 1.5).abs() < 1e-3 && (iv.upper() - 2.5).abs() < 1e-3, "{iv}");
    }

    #[test]
    fn adversarial_predictor_gives_no_rule() {
        let ds = single(2.0);
        let model = FnClassifier::new(2, 1, |x: &[f64]| ClassLabel(i64::from(x[0] != 2.0)));
        let rule = derive_rule(0, &[FeatureId::new(0, 0)], ClassLabel(0), &ds, &model, &spec(0.5, 1000), 0.0).unwrap();
        assert!(rule.is_none());
        assert!(derive_rule(0, &[], ClassLabel(0), &ds, &model, &spec(0.5, 1000), 0.0).unwrap().is_none());
    }

    #[test]
    fn zero_delta_still_covers_source() {
        let ds = single(2.0);
        let model = FnClassifier::new(2, 1, |_: &[f64]| ClassLabel(0));
        let rule = derive_rule(0, &[FeatureId::new(1, 0)], ClassLabel(0), &ds, &model, &spec(0.0, 1000), 0.01)
            .unwrap()
            .unwrap();
        assert!(rule.is_satisfied_by(ds.instance(0), 2, 1).unwrap());
    }

    #[test]
    fn zero_attributions_give_empty_ruleset() {
        let ds = Dataset::new(
            "z",
            2,
            1,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![ClassLabel(0), ClassLabel(1)],
            vec![Split::Train, Split::Test],
        )
        .unwrap();
        let rows = BTreeMap::from([(0, vec![0.0, 0.0]), (1, vec![0.0, 0.0])]);
        let attr = AttributionTensor::new("ZERO", 2, 1, rows).unwrap();
        let model = FnClassifier::new(2, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 1.0)));
        let cfg = ExtractionConfig {
            samples: 1000,
            ..ExtractionConfig::default()
        };
        let rs = extract_ruleset(&attr, &ds, &model, &cfg).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.rule_count(), 0);
    }
}
