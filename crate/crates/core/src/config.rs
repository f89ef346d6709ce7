use serde::{Deserialize, Serialize};

use crate::dataset::SplitSelector;
use crate::error::{Error, Result};

pub const PERCENTILE_RANGE: std::ops::RangeInclusive<u32> = 50..=99;
pub const SIGMA_RANGE: std::ops::RangeInclusive<f64> = 0.01..=1.0;
pub const SAMPLES_RANGE: std::ops::RangeInclusive<usize> = 1000..=10000;
pub const SAMPLES_STEP: usize = 1000;

/// Where the per-feature perturbation half-width comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    /// Standard deviation of the raw feature values over TRAIN.
    #[default]
    Values,
    /// Standard deviation of the absolute attributions over TRAIN.
    Attributions,
}

/// Knobs of the attribution-to-rule transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Percentile `p` of the attribution magnitudes used as threshold.
    pub percentile: u32,
    /// One threshold over all features (`true`) or one per feature.
    pub global_threshold: bool,
    /// Perturbation scale `sigma_p`.
    pub sigma: f64,
    /// Perturbation sample count `N_p`.
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hull_quantile")]
    pub hull_quantile: f64,
    #[serde(default)]
    pub delta_source: DeltaSource,
    /// Instances that receive rules.
    #[serde(default)]
    pub explain: SplitSelector,
}

fn default_hull_quantile() -> f64 {
    0.01
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            percentile: 90,
            global_threshold: true,
            sigma: 0.505,
            samples: 5000,
            seed: 0,
            hull_quantile: default_hull_quantile(),
            delta_source: DeltaSource::Values,
            explain: SplitSelector::Test,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !PERCENTILE_RANGE.contains(&self.percentile) {
            return Err(Error::Config(format!(
                "percentile {} outside [50, 99]",
                self.percentile
            )));
        }
        if !SIGMA_RANGE.contains(&self.sigma) {
            return Err(Error::Config(format!("sigma {} outside [0.01, 1.0]", self.sigma)));
        }
        if !SAMPLES_RANGE.contains(&self.samples) || !self.samples.is_multiple_of(SAMPLES_STEP) {
            return Err(Error::Config(format!(
                "samples {} not in 1000..=10000 step 1000",
                self.samples
            )));
        }
        if !(0.0..=0.5).contains(&self.hull_quantile) {
            return Err(Error::Config(format!(
                "hull_quantile {} outside [0, 0.5]",
                self.hull_quantile
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ExtractionConfig::default().validate().unwrap();
    }

    #[test]
    fn ranges_enforced() {
        let ok = ExtractionConfig::default();
        for bad in [
            ExtractionConfig { percentile: 49, ..ok.clone() },
            ExtractionConfig { percentile: 100, ..ok.clone() },
            ExtractionConfig { sigma: 0.0, ..ok.clone() },
            ExtractionConfig { sigma: 1.01, ..ok.clone() },
            ExtractionConfig { samples: 1500, ..ok.clone() },
            ExtractionConfig { samples: 11000, ..ok.clone() },
            ExtractionConfig { hull_quantile: 0.6, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn toml_like_keys_deserialize() {
        let cfg: ExtractionConfig = serde_json::from_str(
            r#"{"percentile": 95, "global_threshold": false, "sigma": 0.2, "samples": 2000}"#,
        )
        .unwrap();
        assert_eq!(cfg.hull_quantile, 0.01);
        assert_eq!(cfg.explain, SplitSelector::Test);
    }
}
