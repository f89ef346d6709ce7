//! Time-series datasets: `N` instances of `T` timesteps by `C` channels with
//! integer class labels and a train/test partition.
//!
//! Values are stored flat, instance-major, so one instance is a contiguous
//! `T * C` slice indexed by `t * C + c`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub i64);

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which instances a stage operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelector {
    Train,
    #[default]
    Test,
    All,
}

impl SplitSelector {
    pub fn matches(self, split: Split) -> bool {
        match self {
            SplitSelector::Train => split == Split::Train,
            SplitSelector::Test => split == Split::Test,
            SplitSelector::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    timesteps: usize,
    channels: usize,
    values: Vec<f64>,
    labels: Vec<ClassLabel>,
    split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        timesteps: usize,
        channels: usize,
        values: Vec<f64>,
        labels: Vec<ClassLabel>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 || timesteps == 0 || channels == 0 {
            return Err(Error::Ingest(format!(
                "dataset must have N, T, C >= 1 (got N={n}, T={timesteps}, C={channels})"
            )));
        }
        if values.len() != n * timesteps * channels {
            return Err(Error::dimension(
                format!("{} values (N*T*C)", n * timesteps * channels),
                values.len(),
            ));
        }
        if split.len() != n {
            return Err(Error::dimension(format!("{n} split flags"), split.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!(
                "non-finite value in instance {}",
                pos / (timesteps * channels)
            )));
        }
        Ok(Self {
            name: name.into(),
            timesteps,
            channels,
            values,
            labels,
            split,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of features per instance, `T * C`.
    pub fn feature_count(&self) -> usize {
        self.timesteps * self.channels
    }

    pub fn instance(&self, n: usize) -> &[f64] {
        let width = self.feature_count();
        &self.values[n * width..(n + 1) * width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self, n: usize) -> ClassLabel {
        self.labels[n]
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn split_of(&self, n: usize) -> Split {
        self.split[n]
    }

    /// Sorted, de-duplicated class labels.
    pub fn classes(&self) -> Vec<ClassLabel> {
        self.labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn indices(&self, selector: SplitSelector) -> Vec<usize> {
        (0..self.len())
            .filter(|&n| selector.matches(self.split[n]))
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(SplitSelector::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(SplitSelector::Test)
    }

    /// Copies the selected instances into one flat `M * T * C` buffer.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.feature_count());
        for &n in indices {
            out.extend_from_slice(self.instance(n));
        }
        out
    }

    /// Loads a dataset, dispatching on the file extension.
    ///
    /// * `.json`: container `{"labels": [...], "values": [[[...]]]}` with
    ///   optional `"split"` (`"train"`/`"test"` per instance) and `"name"`.
    /// * `.tsv` / `.txt`: UCR layout `label<TAB>v1<TAB>...<TAB>vT`. A file named
    ///   `X_TRAIN.tsv` is paired with a sibling `X_TEST.tsv` when present.
    ///
    /// When no split information exists, even indices go to TRAIN and odd
    /// indices to TEST.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "json" => Self::load_json(path),
            _ => Self::load_ucr(path),
        }
    }

    /// Files that [`Dataset::load`] reads for `path`.
    pub fn source_files(path: &Path) -> Vec<PathBuf> {
        let mut files = vec![path.to_path_buf()];
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if !is_json {
            files.extend(ucr_pair(path));
        }
        files
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let container: JsonContainer = serde_json::from_str(&text)?;
        let name = container
            .name
            .clone()
            .unwrap_or_else(|| file_stem(path));
        container.into_dataset(name)
    }

    fn load_ucr(path: &Path) -> Result<Self> {
        let stem = file_stem(path);
        let (train_path, test_path) = match ucr_pair(path) {
            Some(test) => (path.to_path_buf(), Some(test)),
            None => (path.to_path_buf(), None),
        };
        let (mut labels, mut rows) = read_ucr_file(&train_path)?;
        let mut split: Vec<Split>;
        if let Some(test_path) = test_path {
            split = vec![Split::Train; labels.len()];
            let (test_labels, test_rows) = read_ucr_file(&test_path)?;
            split.extend(std::iter::repeat_n(Split::Test, test_labels.len()));
            labels.extend(test_labels);
            rows.extend(test_rows);
        } else {
            split = alternating_split(labels.len());
        }
        let timesteps = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != timesteps) {
            return Err(Error::Ingest(format!(
                "row {} has {} values, expected {timesteps}",
                i + 1,
                row.len()
            )));
        }
        let name = stem
            .strip_suffix("_TRAIN")
            .map(str::to_string)
            .unwrap_or(stem);
        Self::new(name, timesteps, 1, rows.concat(), labels, split)
    }

    /// Serializable container form, the inverse of [`Dataset::load_json`].
    pub fn to_container(&self) -> JsonContainer {
        let values = (0..self.len())
            .map(|n| {
                self.instance(n)
                    .chunks(self.channels)
                    .map(<[f64]>::to_vec)
                    .collect()
            })
            .collect();
        JsonContainer {
            name: Some(self.name.clone()),
            labels: self.labels.clone(),
            values,
            split: Some(self.split.clone()),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_container())?;
        fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonContainer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub labels: Vec<ClassLabel>,
    /// `N x T x C`.
    pub values: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Vec<Split>>,
}

impl JsonContainer {
    fn into_dataset(self, name: String) -> Result<Dataset> {
        let n = self.values.len();
        if n != self.labels.len() {
            return Err(Error::dimension(
                format!("{} instances (labels)", self.labels.len()),
                n,
            ));
        }
        let timesteps = self.values.first().map_or(0, Vec::len);
        let channels = self
            .values
            .first()
            .and_then(|inst| inst.first())
            .map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * timesteps * channels);
        for (i, inst) in self.values.iter().enumerate() {
            if inst.len() != timesteps {
                return Err(Error::Ingest(format!(
                    "instance {i} has {} timesteps, expected {timesteps}",
                    inst.len()
                )));
            }
            for step in inst {
                if step.len() != channels {
                    return Err(Error::Ingest(format!(
                        "instance {i} has a timestep with {} channels, expected {channels}",
                        step.len()
                    )));
                }
                flat.extend_from_slice(step);
            }
        }
        let split = self.split.unwrap_or_else(|| alternating_split(n));
        Dataset::new(name, timesteps, channels, flat, self.labels, split)
    }
}

fn alternating_split(n: usize) -> Vec<Split> {
    (0..n)
        .map(|i| if i % 2 == 0 { Split::Train } else { Split::Test })
        .collect()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

fn ucr_pair(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    let test_name = name.replacen("_TRAIN", "_TEST", 1);
    if test_name == name {
        return None;
    }
    let candidate = path.with_file_name(test_name);
    candidate.exists().then_some(candidate)
}

fn read_ucr_file(path: &Path) -> Result<(Vec<ClassLabel>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(['\t', ',']).map(str::trim);
        let label_field = fields.next().unwrap_or_default();
        let label = parse_label(label_field).ok_or_else(|| Error::Parse {
            line: line_no + 1,
            column: 1,
            message: format!("invalid class label {label_field:?}"),
        })?;
        let mut row = Vec::new();
        for (col, field) in fields.enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no + 1,
                column: col + 2,
                message: format!("invalid value {field:?}"),
            })?;
            row.push(v);
        }
        labels.push(label);
        rows.push(row);
    }
    if labels.is_empty() {
        return Err(Error::Ingest(format!("{} contains no instances", path.display())));
    }
    Ok((labels, rows))
}

fn parse_label(field: &str) -> Option<ClassLabel> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(ClassLabel(v));
    }
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(ClassLabel(v as i64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            "toy",
            2,
            2,
            (0..12).map(f64::from).collect(),
            vec![ClassLabel(0), ClassLabel(1), ClassLabel(0)],
            vec![Split::Train, Split::Test, Split::Test],
        )
        .unwrap()
    }

    #[test]
    fn instance_layout_is_timestep_major() {
        let ds = toy();
        assert_eq!(ds.instance(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(ds.test_indices(), vec![1, 2]);
        assert_eq!(ds.classes(), vec![ClassLabel(0), ClassLabel(1)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Dataset::new("x", 2, 1, vec![0.0; 3], vec![ClassLabel(0)], vec![Split::Train]).is_err());
        assert!(Dataset::new("x", 1, 1, vec![f64::NAN], vec![ClassLabel(0)], vec![Split::Train]).is_err());
        assert!(Dataset::new("x", 0, 1, vec![], vec![ClassLabel(0)], vec![Split::Train]).is_err());
    }

    #[test]
    fn json_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        let ds = toy();
        ds.save_json(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
    }

    #[test]
    fn ucr_pair_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("ECG_TRAIN.tsv"), "1\t0.5\t1.5\n-1\t0.0\t2.0\n").unwrap();
        fs::write(dir.path().join("ECG_TEST.tsv"), "1.0\t3\t4\n").unwrap();
        let ds = Dataset::load(&dir.path().join("ECG_TRAIN.tsv")).unwrap();
        assert_eq!(ds.name(), "ECG");
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[ClassLabel(1), ClassLabel(-1), ClassLabel(1)]);
        assert_eq!(ds.test_indices(), vec![2]);
        assert_eq!(ds.instance(2), &[3.0, 4.0]);
    }

    #[test]
    fn single_tsv_uses_alternating_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.tsv");
        fs::write(&path, "0\t1\n1\t2\n0\t3\n").unwrap();
        let ds = Dataset::load(&path).unwrap();
        assert_eq!(ds.train_indices(), vec![0, 2]);
        assert_eq!(ds.test_indices(), vec![1]);
    }

    #[test]
    fn ucr_reports_bad_value_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        fs::write(&path, "0\t1\n1\tabc\n").unwrap();
        match Dataset::load(&path) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
