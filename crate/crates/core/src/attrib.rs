//! Per-instance feature attributions.
//!
//! Attribution files are CSV with a leading `instance_index` column followed
//! by canonical feature columns (`t{i}` or `t{i}c{v}`). Features missing
//! from the header are zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split, SplitSelector};
use crate::error::{Error, Result};
use crate::predict::Classifier;
use crate::rule::FeatureId;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionTensor {
    explainer_tag: String,
    timesteps: usize,
    channels: usize,
    /// Rows keyed by dataset instance index; each row holds `T * C` values.
    rows: BTreeMap<usize, Vec<f64>>,
}

impl AttributionTensor {
    pub fn new(
        explainer_tag: impl Into<String>,
        timesteps: usize,
        channels: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    ) -> Result<Self> {
        let width = timesteps * channels;
        for (n, row) in &rows {
            if row.len() != width {
                return Err(Error::dimension(
                    format!("{width} attribution values"),
                    format!("{} for instance {n}", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Ingest(format!(
                    "non-finite attribution for instance {n}"
                )));
            }
        }
        Ok(Self {
            explainer_tag: explainer_tag.into(),
            timesteps,
            channels,
            rows,
        })
    }

    pub fn explainer_tag(&self) -> &str {
        &self.explainer_tag
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, instance: usize) -> Option<&[f64]> {
        self.rows.get(&instance).map(Vec::as_slice)
    }

    pub fn instance_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&n, r)| (n, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if (self.timesteps, self.channels) != (dataset.timesteps(), dataset.channels()) {
            return Err(Error::dimension(
                format!("{}x{}", dataset.timesteps(), dataset.channels()),
                format!("{}x{}", self.timesteps, self.channels),
            ));
        }
        if let Some(&n) = self.rows.keys().find(|&&n| n >= dataset.len()) {
            return Err(Error::Ingest(format!(
                "instance_index {n} out of range for {} instances",
                dataset.len()
            )));
        }
        Ok(())
    }

    /// Writes the tensor in the attribution CSV format. Values use the
    /// shortest representation that round-trips exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["instance_index".to_string()];
        header.extend(
            (0..self.timesteps * self.channels)
                .map(|i| FeatureId::from_flat_index(i, self.channels).label(self.channels)),
        );
        writer.write_record(&header)?;
        for (n, row) in &self.rows {
            let mut record = vec![n.to_string()];
            record.extend(row.iter().map(|v| format!("{v:?}")));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Reads an attribution CSV aligned to `dataset`.
pub fn load_attributions(path: &Path, dataset: &Dataset, explainer_tag: &str) -> Result<AttributionTensor> {
    let text = fs::read_to_string(path)?;
    parse_attributions(&text, dataset, explainer_tag)
}

pub fn parse_attributions(text: &str, dataset: &Dataset, explainer_tag: &str) -> Result<AttributionTensor> {
    let (timesteps, channels) = (dataset.timesteps(), dataset.channels());
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.get(0) != Some("instance_index") {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "first column must be instance_index".into(),
        });
    }
    let mut columns = Vec::with_capacity(header.len() - 1);
    for (col, name) in header.iter().enumerate().skip(1) {
        let feature = name
            .parse::<FeatureId>()
            .ok()
            .filter(|f| f.check_bounds(timesteps, channels).is_ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                column: col + 1,
                message: format!("unknown feature column {name:?}"),
            })?;
        columns.push(feature.flat_index(channels));
    }

    let mut rows = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let idx_field = record.get(0).unwrap_or_default();
        let n: usize = idx_field.parse().map_err(|_| Error::Parse {
            line,
            column: 1,
            message: format!("invalid instance_index {idx_field:?}"),
        })?;
        if n >= dataset.len() {
            return Err(Error::Ingest(format!(
                "line {line}: instance_index {n} out of range for {} instances",
                dataset.len()
            )));
        }
        let mut row = vec![0.0; timesteps * channels];
        for (col, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("invalid number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest(format!(
                    "line {line}, column {}: non-finite attribution",
                    col + 1
                )));
            }
            let slot = *columns.get(col - 1).ok_or_else(|| Error::Parse {
                line,
                column: col + 1,
                message: "more fields than header columns".into(),
            })?;
            row[slot] = v;
        }
        if rows.insert(n, row).is_some() {
            return Err(Error::Ingest(format!("line {line}: duplicate instance_index {n}")));
        }
    }
    let tensor = AttributionTensor::new(explainer_tag, timesteps, channels, rows)?;
    tensor.check_dataset(dataset)?;
    Ok(tensor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionBaseline {
    Zero,
    TrainMean,
}

/// Flip-indicator occlusion: `e[n, f] = 1` when replacing feature `f` of
/// instance `n` with the baseline changes the predicted class, else `0`.
///
/// The procedure is deterministic; `_seed` is accepted for interface
/// uniformity with the other stochastic stages.
pub fn occlusion_attribution(
    dataset: &Dataset,
    predictor: &dyn Classifier,
    split: SplitSelector,
    baseline: OcclusionBaseline,
    _seed: u64,
) -> Result<AttributionTensor> {
    let width = dataset.feature_count();
    if predictor.shape() != (dataset.timesteps(), dataset.channels()) {
        return Err(Error::dimension(
            format!("{}x{}", dataset.timesteps(), dataset.channels()),
            format!("{:?}", predictor.shape()),
        ));
    }
    let base = match baseline {
        OcclusionBaseline::Zero => vec![0.0; width],
        OcclusionBaseline::TrainMean => {
            let train = dataset.train_indices();
            let mut mean = vec![0.0; width];
            for &n in &train {
                for (m, v) in mean.iter_mut().zip(dataset.instance(n)) {
                    *m += v;
                }
            }
            let count = train.len().max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= count);
            mean
        }
    };

    let mut rows = BTreeMap::new();
    for n in dataset.indices(split) {
        let x = dataset.instance(n);
        let original = predictor.predict_one(x)?;
        let mut batch = Vec::with_capacity(width * width);
        for f in 0..width {
            batch.extend_from_slice(x);
            batch[f * width + f] = base[f];
        }
        let labels = predictor.predict_batch(&batch)?;
        let row = labels
            .iter()
            .map(|&l| if l != original { 1.0 } else { 0.0 })
            .collect();
        rows.insert(n, row);
    }
    AttributionTensor::new(
        format!("OCCLUSION_{}", match baseline {
            OcclusionBaseline::Zero => "ZERO",
            OcclusionBaseline::TrainMean => "MEAN",
        }),
        dataset.timesteps(),
        dataset.channels(),
        rows,
    )
}

/// TRAIN rows of a tensor, in index order.
pub(crate) fn train_rows<'a>(attr: &'a AttributionTensor, dataset: &Dataset) -> Vec<&'a [f64]> {
    attr.rows()
        .filter(|(n, _)| dataset.split_of(*n) == Split::Train)
        .map(|(_, r)| r)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassLabel;
    use crate::predict::FnClassifier;

    fn dataset(t: usize, c: usize, n: usize) -> Dataset {
        Dataset::new(
            "d",
            t,
            c,
            (0..n * t * c).map(|v| v as f64).collect(),
            vec![ClassLabel(0); n],
            (0..n).map(|i| if i % 2 == 0 { Split::Train } else { Split::Test }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn univariate_csv() {
        let ds = dataset(2, 1, 1);
        let t = parse_attributions("instance_index,t0,t1\n0,0.5,-0.2", &ds, "SHAP").unwrap();
        assert_eq!(t.row(0).unwrap(), &[0.5, -0.2]);
        assert_eq!(t.explainer_tag(), "SHAP");
    }

    #[test]
    fn multivariate_columns_are_channel_resolved() {
        let ds = dataset(2, 2, 1);
        let t = parse_attributions("instance_index,t0c1,t1c0\n0,3,4\n", &ds, "LIME").unwrap();
        assert_eq!(t.row(0).unwrap(), &[0.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn out_of_range_feature_names_column() {
        let ds = dataset(24, 1, 1);
        let err = parse_attributions("instance_index,t0,t99\n0,1,2\n", &ds, "X").unwrap_err();
        match err {
            Error::Parse { column, message, .. } => {
                assert_eq!(column, 3);
                assert!(message.contains("t99"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_non_finite_rows_rejected() {
        let ds = dataset(1, 1, 2);
        assert!(matches!(
            parse_attributions("instance_index,t0\n0,1\n0,2\n", &ds, "X"),
            Err(Error::Ingest(_))
        ));
        assert!(matches!(
            parse_attributions("instance_index,t0\n0,NaN\n", &ds, "X"),
            Err(Error::Ingest(_))
        ));
        assert!(matches!(
            parse_attributions("instance_index,t0\n5,1\n", &ds, "X"),
            Err(Error::Ingest(_))
        ));
    }

    #[test]
    fn threshold_predictor_occlusion() {
        let ds = Dataset::new(
            "flip",
            3,
            1,
            vec![1.0, 5.0, -2.0, 1.0, 5.0, -2.0],
            vec![ClassLabel(1); 2],
            vec![Split::Train, Split::Test],
        )
        .unwrap();
        let model = FnClassifier::new(3, 1, |x: &[f64]| ClassLabel(i64::from(x[0] > 0.0)));
        let attr = occlusion_attribution(&ds, &model, SplitSelector::All, OcclusionBaseline::Zero, 0).unwrap();
        assert_eq!(attr.row(0).unwrap(), &[1.0, 0.0, 0.0]);
        // Identical instances give identical rows.
        assert_eq!(attr.row(0), attr.row(1));
    }

    #[test]
    fn constant_predictor_gives_zero_tensor() {
        let ds = dataset(4, 2, 6);
        let model = FnClassifier::new(4, 2, |_: &[f64]| ClassLabel(3));
        let attr =
            occlusion_attribution(&ds, &model, SplitSelector::All, OcclusionBaseline::TrainMean, 9).unwrap();
        assert_eq!(attr.len(), 6);
        assert!(attr.rows().all(|(_, r)| r.iter().all(|&v| v == 0.0)));
    }
}
