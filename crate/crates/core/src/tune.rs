//! Seeded random search over extraction settings with median pruning.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attrib::AttributionTensor;
use crate::config::{ExtractionConfig, PERCENTILE_RANGE, SAMPLES_RANGE, SAMPLES_STEP, SIGMA_RANGE};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::extract::{percentile, Extractor};
use crate::metrics::{annotate, objective, EvalSplit, ObjectiveParams};
use crate::predict::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    None,
    #[default]
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pruning: Pruning,
    /// Checkpoint for pruning; defaults to a quarter of the explained
    /// instances.
    #[serde(default)]
    pub prune_after: Option<usize>,
    #[serde(default)]
    pub defaults_shortcut: bool,
}

fn default_trials() -> usize {
    30
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            pruning: Pruning::Median,
            prune_after: None,
            defaults_shortcut: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub percentile: u32,
    pub global_threshold: bool,
    pub sigma: f64,
    pub samples: usize,
    /// `None` when the trial was pruned.
    pub mean_m: Option<f64>,
    pub checkpoint_mean: f64,
    pub pruned: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: ExtractionConfig,
    /// `None` only for the defaults shortcut.
    pub best_mean_m: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

/// The shortcut configuration: `p = 90`, global threshold, and the middle of
/// the sigma and sample-count ranges.
pub fn shortcut_config(base: &ExtractionConfig) -> ExtractionConfig {
    ExtractionConfig {
        percentile: 90,
        global_threshold: true,
        sigma: (SIGMA_RANGE.start() + SIGMA_RANGE.end()) / 2.0,
        samples: 5000,
        ..base.clone()
    }
}

/// Draws one configuration uniformly from the search space.
pub fn sample_config(rng: &mut impl Rng, base: &ExtractionConfig) -> ExtractionConfig {
    let steps = SAMPLES_RANGE.end() / SAMPLES_STEP;
    ExtractionConfig {
        percentile: rng.random_range(PERCENTILE_RANGE),
        global_threshold: rng.random_bool(0.5),
        sigma: rng.random_range(SIGMA_RANGE),
        samples: SAMPLES_STEP * rng.random_range(SAMPLES_RANGE.start() / SAMPLES_STEP..=steps),
        ..base.clone()
    }
}

fn instance_objectives(
    extractor: &Extractor<'_>,
    instances: &[usize],
    eval: &EvalSplit<'_>,
    params: &ObjectiveParams,
) -> Result<Vec<f64>> {
    extractor
        .rules_for(instances)?
        .into_iter()
        .map(|(_, rule)| {
            let annotated = rule.map(|r| annotate(&r, eval)).transpose()?;
            Ok(objective(annotated.as_ref(), params))
        })
        .collect()
}

/// Mean objective over every explained instance for one configuration.
pub fn evaluate_config(
    attr: &AttributionTensor,
    dataset: &Dataset,
    predictor: &dyn Classifier,
    eval: &EvalSplit<'_>,
    config: &ExtractionConfig,
    params: &ObjectiveParams,
) -> Result<f64> {
    let extractor = Extractor::new(attr, dataset, predictor, config)?;
    let instances = extractor.explained_instances();
    let values = instance_objectives(&extractor, &instances, eval, params)?;
    Ok(mean(&values))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Runs the search. Every trial uses `base.seed` for extraction, so trials
/// differ only in the sampled settings.
pub fn tune(
    attr: &AttributionTensor,
    dataset: &Dataset,
    predictor: &dyn Classifier,
    eval: &EvalSplit<'_>,
    config: &TuneConfig,
    base: &ExtractionConfig,
    params: &ObjectiveParams,
) -> Result<TuneOutcome> {
    if config.defaults_shortcut {
        return Ok(TuneOutcome {
            best: shortcut_config(base),
            best_mean_m: None,
            trials: Vec::new(),
        });
    }
    if config.trials == 0 {
        return Err(Error::Config("tuning needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.trials);
    let mut checkpoints: Vec<f64> = Vec::new();
    let mut best: Option<(ExtractionConfig, f64)> = None;

    for trial in 0..config.trials {
        let candidate = sample_config(&mut rng, base);
        let start = Instant::now();
        let extractor = Extractor::new(attr, dataset, predictor, &candidate)?;
        let instances = extractor.explained_instances();
        let k = config
            .prune_after
            .unwrap_or_else(|| instances.len().div_ceil(4))
            .clamp(1.min(instances.len()), instances.len());
        let mut values = instance_objectives(&extractor, &instances[..k], eval, params)?;
        let checkpoint_mean = mean(&values);

        let pruned = config.pruning == Pruning::Median
            && !checkpoints.is_empty()
            && checkpoint_mean < median(&checkpoints);
        let mean_m = if pruned {
            None
        } else {
            values.extend(instance_objectives(&extractor, &instances[k..], eval, params)?);
            checkpoints.push(checkpoint_mean);
            Some(mean(&values))
        };
        log::debug!("trial {trial}: {candidate:?} -> {mean_m:?}");

        if let Some(m) = mean_m {
            if best.as_ref().is_none_or(|(_, b)| m > *b) {
                best = Some((candidate.clone(), m));
            }
        }
        log.push(TrialRecord {
            trial,
            percentile: candidate.percentile,
            global_threshold: candidate.global_threshold,
            sigma: candidate.sigma,
            samples: candidate.samples,
            mean_m,
            checkpoint_mean,
            pruned,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let (best, m) = best.expect("the first trial is never pruned");
    Ok(TuneOutcome {
        best,
        best_mean_m: Some(m),
        trials: log,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile(&sorted, 50.0)
}

/// The trial log as CSV text, one row per trial.
pub fn trial_log_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trials {
        w.serialize(t)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_trial_log(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    std::fs::write(path, trial_log_csv(trials)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassLabel, Split, SplitSelector};
    use crate::predict::FnClassifier;
    use std::collections::BTreeMap;

    fn setup() -> (Dataset, AttributionTensor) {
        let n = 30;
        let t = 4;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut split = Vec::new();
        let mut rows = BTreeMap::new();
        for i in 0..n {
            let x0 = i as f64 / n as f64;
            values.extend([x0, 0.3, 0.6, 0.9]);
            labels.push(ClassLabel(i64::from(x0 > 0.5)));
            split.push(if i % 2 == 0 { Split::Train } else { Split::Test });
            rows.insert(i, vec![1.0, 0.1, 0.2, 0.05]);
        }
        let ds = Dataset::new("toy", t, 1, values, labels, split).unwrap();
        let attr = AttributionTensor::new("SHAP", t, 1, rows).unwrap();
        (ds, attr)
    }

    #[test]
    fn shortcut_skips_search() {
        let (ds, attr) = setup();
        let pred = FnClassifier::new(4, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.5)));
        let eval = EvalSplit::new(&ds, &pred, SplitSelector::Test).unwrap();
        let cfg = TuneConfig {
            defaults_shortcut: true,
            ..Default::default()
        };
        let out = tune(&attr, &ds, &pred, &eval, &cfg, &ExtractionConfig::default(), &ObjectiveParams::default()).unwrap();
        assert_eq!(out.best.percentile, 90);
        assert!(out.best.global_threshold);
        assert!((out.best.sigma - 0.505).abs() < 1e-12);
        assert!(out.trials.is_empty());
    }

    #[test]
    fn single_trial_reports_true_mean() {
        let (ds, attr) = setup();
        let pred = FnClassifier::new(4, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.5)));
        let eval = EvalSplit::new(&ds, &pred, SplitSelector::Test).unwrap();
        let cfg = TuneConfig {
            trials: 1,
            seed: 3,
            ..Default::default()
        };
        let base = ExtractionConfig {
            seed: 11,
            ..Default::default()
        };
        let params = ObjectiveParams::default();
        let out = tune(&attr, &ds, &pred, &eval, &cfg, &base, &params).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert!(!out.trials[0].pruned);
        let again = evaluate_config(&attr, &ds, &pred, &eval, &out.best, &params).unwrap();
        assert_eq!(out.best_mean_m, Some(again));
    }

    #[test]
    fn best_dominates_completed_trials() {
        let (ds, attr) = setup();
        let pred = FnClassifier::new(4, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.5)));
        let eval = EvalSplit::new(&ds, &pred, SplitSelector::Test).unwrap();
        let cfg = TuneConfig {
            trials: 6,
            seed: 5,
            ..Default::default()
        };
        let base = ExtractionConfig {
            samples: 1000,
            ..Default::default()
        };
        let out = tune(&attr, &ds, &pred, &eval, &cfg, &base, &ObjectiveParams::default()).unwrap();
        let best = out.best_mean_m.unwrap();
        for t in &out.trials {
            if let Some(m) = t.mean_m {
                assert!(best >= m);
            }
            assert!(PERCENTILE_RANGE.contains(&t.percentile));
            assert!(SIGMA_RANGE.contains(&t.sigma));
            assert!(t.samples % SAMPLES_STEP == 0 && SAMPLES_RANGE.contains(&t.samples));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        write_trial_log(&path, &out.trials).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 7);
    }
}
