//! Synthetic datasets and explainer outputs for tests and demos.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attrib::AttributionTensor;
use crate::dataset::{ClassLabel, Dataset, Split, SplitSelector};
use crate::error::Result;
use crate::metrics::EvalSplit;
use crate::predict::{Classifier, FnClassifier};
use crate::rule::{Condition, FeatureId, Interval, Rule};

pub const SINE_INSTANCES: usize = 60;
pub const SINE_TIMESTEPS: usize = 24;

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite standard deviation")
}

/// Two classes: a sine wave (class 0) and the same wave shifted by a
/// quarter period (class 1), with amplitude jitter and additive noise.
/// Instances alternate between TRAIN (even) and TEST (odd).
pub fn sine_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(0.2);
    let (n, t) = (SINE_INSTANCES, SINE_TIMESTEPS);
    let mut values = Vec::with_capacity(n * t);
    let mut labels = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i / 2) % 2;
        let shift = if class == 0 { 0.0 } else { PI / 2.0 };
        let amplitude = rng.random_range(0.8..1.2);
        for step in 0..t {
            let phase = 2.0 * PI * step as f64 / t as f64 + shift;
            values.push(amplitude * phase.sin() + noise.sample(&mut rng));
        }
        labels.push(ClassLabel(class as i64));
        split.push(if i % 2 == 0 { Split::Train } else { Split::Test });
    }
    Dataset::new("SyntheticSine", t, 1, values, labels, split).expect("well-formed synthetic data")
}

fn class_means(dataset: &Dataset, predictions: &[ClassLabel]) -> BTreeMap<ClassLabel, Vec<f64>> {
    let width = dataset.feature_count();
    let mut sums: BTreeMap<ClassLabel, (Vec<f64>, usize)> = BTreeMap::new();
    for (n, &c) in predictions.iter().enumerate() {
        let entry = sums.entry(c).or_insert_with(|| (vec![0.0; width], 0));
        for (s, v) in entry.0.iter_mut().zip(dataset.instance(n)) {
            *s += v;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(c, (s, k))| (c, s.into_iter().map(|v| v / k as f64).collect()))
        .collect()
}

/// Saliency-style attributions for every instance: the instance's deviation
/// from the overall mean, weighted by how far its predicted class's mean
/// departs from the overall mean, plus Gaussian noise of scale `noise`.
pub fn synthetic_attributions(
    dataset: &Dataset,
    predictor: &dyn Classifier,
    tag: &str,
    noise: f64,
    seed: u64,
) -> Result<AttributionTensor> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let predictions = predictor.predict_batch(&dataset.gather(&all))?;
    let means = class_means(dataset, &predictions);
    let width = dataset.feature_count();
    let overall: Vec<f64> = (0..width)
        .map(|f| all.iter().map(|&n| dataset.instance(n)[f]).sum::<f64>() / all.len() as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = normal(noise);
    let rows = all
        .iter()
        .map(|&n| {
            let mu = &means[&predictions[n]];
            let x = dataset.instance(n);
            let row = (0..width)
                .map(|f| (mu[f] - overall[f]) * (x[f] - overall[f]) + dist.sample(&mut rng))
                .collect();
            (n, row)
        })
        .collect();
    AttributionTensor::new(tag, dataset.timesteps(), dataset.channels(), rows)
}

/// Anchor-style rule text for the TEST split: two conditions on the most
/// class-separating timesteps, split at the overall mean, with the
/// instance's predicted class and TEST confidence/coverage.
pub fn synthetic_anchor_text(dataset: &Dataset, predictor: &dyn Classifier) -> Result<String> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let predictions = predictor.predict_batch(&dataset.gather(&all))?;
    let means = class_means(dataset, &predictions);
    let width = dataset.feature_count();
    let overall: Vec<f64> = (0..width)
        .map(|f| all.iter().map(|&n| dataset.instance(n)[f]).sum::<f64>() / all.len() as f64)
        .collect();
    let separation: Vec<f64> = (0..width)
        .map(|f| {
            let vals: Vec<f64> = means.values().map(|m| m[f]).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect();
    let eval = EvalSplit::new(dataset, predictor, SplitSelector::Test)?;
    let channels = dataset.channels();
    let mut out = String::from("# synthetic anchor rules\n");
    for n in dataset.test_indices() {
        let x = dataset.instance(n);
        let class = predictions[n];
        let mu = &means[&class];
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| {
            let sa = separation[a] * (mu[a] - overall[a]).signum() * (x[a] - overall[a]).signum();
            let sb = separation[b] * (mu[b] - overall[b]).signum() * (x[b] - overall[b]).signum();
            sb.total_cmp(&sa).then(a.cmp(&b))
        });
        let mut conds = Vec::new();
        let mut text = Vec::new();
        for &f in order.iter().take(2) {
            let cut = (overall[f] * 100.0).round() / 100.0;
            let feature = FeatureId::from_flat_index(f, channels);
            let name = feature.label(channels);
            if x[f] > cut {
                conds.push(Condition::new(feature, Interval::new(cut, f64::INFINITY)?));
                text.push(format!("{name} > {cut:.2}"));
            } else {
                conds.push(Condition::new(feature, Interval::new(f64::NEG_INFINITY, cut)?));
                text.push(format!("{name} <= {cut:.2}"));
            }
        }
        let rule = Rule::new(conds, class, n)?;
        let (conf, cov) = eval.quality(&rule)?;
        let _ = write!(out, "instance {n} class {class}: {}", text.join(" AND "));
        if let Some(conf) = conf {
            let _ = write!(out, " [conf={conf:.2} cov={cov:.2}]");
        }
        out.push('\n');
    }
    Ok(out)
}

/// A uniform dataset whose class is decided by `x[t0] > 0.5`, with an
/// attribution tensor that is large on `t0` and N(0, 0.3) noise elsewhere.
pub struct NoisyProblem {
    pub dataset: Dataset,
    pub attributions: AttributionTensor,
    pub decisive: usize,
}

pub fn noisy_attribution_problem(seed: u64) -> NoisyProblem {
    let (n, t, decisive) = (120, 32, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(0.3);
    let mut values = Vec::with_capacity(n * t);
    let mut labels = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    let mut rows = BTreeMap::new();
    for i in 0..n {
        let x: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        labels.push(ClassLabel(i64::from(x[decisive] > 0.5)));
        split.push(if i % 2 == 0 { Split::Train } else { Split::Test });
        let row: Vec<f64> = (0..t)
            .map(|f| {
                let base = if f == decisive { 3.0 } else { 0.0 };
                base + noise.sample(&mut rng)
            })
            .collect();
        rows.insert(i, row);
        values.extend(x);
    }
    NoisyProblem {
        dataset: Dataset::new("NoisyThreshold", t, 1, values, labels, split)
            .expect("well-formed synthetic data"),
        attributions: AttributionTensor::new("NOISY", t, 1, rows).expect("finite attributions"),
        decisive,
    }
}

/// `class = x[feature] > threshold`.
pub fn threshold_classifier(
    timesteps: usize,
    channels: usize,
    feature: usize,
    threshold: f64,
) -> FnClassifier<impl Fn(&[f64]) -> ClassLabel + Send + Sync> {
    FnClassifier::new(timesteps, channels, move |x: &[f64]| {
        ClassLabel(i64::from(x[feature] > threshold))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::parse_anchor_text;
    use crate::predict::NearestCentroid;

    #[test]
    fn sine_shape_and_determinism() {
        let a = sine_dataset(1);
        assert_eq!((a.len(), a.timesteps(), a.channels()), (60, 24, 1));
        assert_eq!(a.train_indices().len(), 30);
        assert_eq!(a.classes(), vec![ClassLabel(0), ClassLabel(1)]);
        assert_eq!(a.values(), sine_dataset(1).values());
        assert_ne!(a.values(), sine_dataset(2).values());
    }

    #[test]
    fn anchor_text_parses_and_matches_predictions() {
        let ds = sine_dataset(4);
        let pred = NearestCentroid::fit(&ds).unwrap();
        let text = synthetic_anchor_text(&ds, &pred).unwrap();
        let rs = parse_anchor_text(&text, &ds).unwrap();
        assert_eq!(rs.rule_count(), ds.test_indices().len());
        for (n, rule) in rs.present_rules() {
            assert_eq!(rule.predicted_class(), pred.predict_one(ds.instance(n)).unwrap());
            assert_eq!(rule.feature_count(), 2);
        }
    }

    #[test]
    fn noisy_problem_labels_follow_threshold() {
        let p = noisy_attribution_problem(2);
        let clf = threshold_classifier(32, 1, p.decisive, 0.5);
        for n in 0..p.dataset.len() {
            assert_eq!(clf.predict_one(p.dataset.instance(n)).unwrap(), p.dataset.label(n));
        }
    }
}
