//! Black-box classifiers queried by the perturbation and scoring stages.
//!
//! Built-in predictors work on the flattened `T x C` values with Euclidean
//! distance and break distance ties toward the lowest class label. The
//! external predictor streams instances to a child process as line-delimited
//! JSON and reads one label per line back.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::str::FromStr;

use crate::dataset::{ClassLabel, Dataset};
use crate::error::{Error, Result};

pub trait Classifier: Send + Sync {
    /// `(timesteps, channels)` expected per instance.
    fn shape(&self) -> (usize, usize);

    /// Labels for `M` instances packed as one flat `M * T * C` buffer.
    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>>;

    fn predict_one(&self, instance: &[f64]) -> Result<ClassLabel> {
        Ok(self.predict_batch(instance)?[0])
    }
}

fn check_batch(shape: (usize, usize), instances: &[f64]) -> Result<usize> {
    let width = shape.0 * shape.1;
    if width == 0 || !instances.len().is_multiple_of(width) {
        return Err(Error::dimension(
            format!("a multiple of {width} values ({}x{})", shape.0, shape.1),
            instances.len(),
        ));
    }
    Ok(instances.len() / width)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorKind {
    NearestCentroid,
    OneNn,
    /// Shell command line of the child process.
    External(String),
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" | "nearest_centroid" => Ok(PredictorKind::NearestCentroid),
            "1nn" | "one_nn" => Ok(PredictorKind::OneNn),
            other => match other.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => {
                    Ok(PredictorKind::External(cmd.trim().to_string()))
                }
                _ => Err(Error::Config(format!(
                    "unknown predictor {other:?} (expected centroid, 1nn or external:<cmd>)"
                ))),
            },
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorKind::NearestCentroid => f.write_str("centroid"),
            PredictorKind::OneNn => f.write_str("1nn"),
            PredictorKind::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NearestCentroid {
    timesteps: usize,
    channels: usize,
    classes: Vec<ClassLabel>,
    centroids: Vec<Vec<f64>>,
}

impl NearestCentroid {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let train = dataset.train_indices();
        if train.is_empty() {
            return Err(Error::Fit("training split is empty".into()));
        }
        let width = dataset.feature_count();
        let classes = dataset.classes();
        let mut centroids = vec![vec![0.0; width]; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for &n in &train {
            let k = classes.binary_search(&dataset.label(n)).expect("label in class set");
            counts[k] += 1;
            for (acc, v) in centroids[k].iter_mut().zip(dataset.instance(n)) {
                *acc += v;
            }
        }
        for (k, (centroid, &count)) in centroids.iter_mut().zip(&counts).enumerate() {
            if count == 0 {
                return Err(Error::Fit(format!(
                    "class {} has no training instance",
                    classes[k]
                )));
            }
            centroid.iter_mut().for_each(|v| *v /= count as f64);
        }
        Ok(Self {
            timesteps: dataset.timesteps(),
            channels: dataset.channels(),
            classes,
            centroids,
        })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    fn nearest(&self, x: &[f64]) -> ClassLabel {
        let mut best = (f64::INFINITY, self.classes[0]);
        for (class, centroid) in self.classes.iter().zip(&self.centroids) {
            let d = squared_distance(x, centroid);
            if d < best.0 {
                best = (d, *class);
            }
        }
        best.1
    }
}

impl Classifier for NearestCentroid {
    fn shape(&self) -> (usize, usize) {
        (self.timesteps, self.channels)
    }

    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>> {
        check_batch(self.shape(), instances)?;
        Ok(instances
            .chunks(self.timesteps * self.channels)
            .map(|x| self.nearest(x))
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct OneNn {
    timesteps: usize,
    channels: usize,
    references: Vec<f64>,
    labels: Vec<ClassLabel>,
}

impl OneNn {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let train = dataset.train_indices();
        if train.is_empty() {
            return Err(Error::Fit("training split is empty".into()));
        }
        Ok(Self {
            timesteps: dataset.timesteps(),
            channels: dataset.channels(),
            references: dataset.gather(&train),
            labels: train.iter().map(|&n| dataset.label(n)).collect(),
        })
    }

    fn nearest(&self, x: &[f64]) -> ClassLabel {
        let width = self.timesteps * self.channels;
        let mut best = (f64::INFINITY, self.labels[0]);
        for (reference, &label) in self.references.chunks(width).zip(&self.labels) {
            let d = squared_distance(x, reference);
            if d < best.0 || (d == best.0 && label < best.1) {
                best = (d, label);
            }
        }
        best.1
    }
}

impl Classifier for OneNn {
    fn shape(&self) -> (usize, usize) {
        (self.timesteps, self.channels)
    }

    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>> {
        check_batch(self.shape(), instances)?;
        Ok(instances
            .chunks(self.timesteps * self.channels)
            .map(|x| self.nearest(x))
            .collect())
    }
}

/// Child-process predictor.
///
/// Every batch spawns `sh -c <command>`, writes one `{"values": [[...], ...]}`
/// line per instance (`T` rows of `C` values) and expects exactly one integer
/// label per output line, in order.
#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    command: String,
    timesteps: usize,
    channels: usize,
}

impl ExternalPredictor {
    pub fn new(command: impl Into<String>, timesteps: usize, channels: usize) -> Self {
        Self {
            command: command.into(),
            timesteps,
            channels,
        }
    }

    fn encode(&self, instances: &[f64]) -> String {
        let mut out = String::new();
        for inst in instances.chunks(self.timesteps * self.channels) {
            let rows: Vec<&[f64]> = inst.chunks(self.channels).collect();
            out.push_str(r#"{"values":"#);
            out.push_str(&serde_json::to_string(&rows).expect("finite floats serialize"));
            out.push_str("}\n");
        }
        out
    }
}

impl Classifier for ExternalPredictor {
    fn shape(&self) -> (usize, usize) {
        (self.timesteps, self.channels)
    }

    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>> {
        let m = check_batch(self.shape(), instances)?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Predictor(format!("cannot spawn {:?}: {e}", self.command)))?;

        let payload = self.encode(instances);
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || {
            // A child that exits early closes the pipe; its exit status reports the problem.
            let _ = stdin.write_all(payload.as_bytes());
        });

        let stdout = child.stdout.take().expect("stdout is piped");
        let mut labels = Vec::with_capacity(m);
        let mut protocol_error = None;
        for (i, line) in BufReader::new(stdout).lines().enumerate() {
            let line = line?;
            let field = line.trim();
            match parse_label(field) {
                Some(label) if labels.len() < m => labels.push(label),
                Some(_) => {
                    protocol_error.get_or_insert(Error::Protocol {
                        line: i + 1,
                        message: format!("unexpected extra output line (batch has {m} instances)"),
                    });
                }
                None => {
                    protocol_error.get_or_insert(Error::Protocol {
                        line: i + 1,
                        message: format!("malformed label {field:?}"),
                    });
                }
            }
        }
        let _ = writer.join();
        let status = child.wait()?;
        if !status.success() {
            return Err(Error::Predictor(format!(
                "external predictor {:?} exited with {status}",
                self.command
            )));
        }
        if let Some(err) = protocol_error {
            return Err(err);
        }
        if labels.len() != m {
            return Err(Error::Protocol {
                line: labels.len() + 1,
                message: format!("expected {m} labels, received {}", labels.len()),
            });
        }
        Ok(labels)
    }
}

fn parse_label(field: &str) -> Option<ClassLabel> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(ClassLabel(v));
    }
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(ClassLabel(v as i64))
}

/// A classifier backed by a plain function of one flattened instance.
pub struct FnClassifier<F> {
    timesteps: usize,
    channels: usize,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&[f64]) -> ClassLabel + Send + Sync,
{
    pub fn new(timesteps: usize, channels: usize, f: F) -> Self {
        Self {
            timesteps,
            channels,
            f,
        }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&[f64]) -> ClassLabel + Send + Sync,
{
    fn shape(&self) -> (usize, usize) {
        (self.timesteps, self.channels)
    }

    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>> {
        check_batch(self.shape(), instances)?;
        Ok(instances
            .chunks(self.timesteps * self.channels)
            .map(&self.f)
            .collect())
    }
}

/// A fitted predictor of one of the supported kinds.
#[derive(Debug, Clone)]
pub enum Predictor {
    NearestCentroid(NearestCentroid),
    OneNn(OneNn),
    External(ExternalPredictor),
}

impl Predictor {
    pub fn fit(kind: &PredictorKind, dataset: &Dataset) -> Result<Self> {
        Ok(match kind {
            PredictorKind::NearestCentroid => Predictor::NearestCentroid(NearestCentroid::fit(dataset)?),
            PredictorKind::OneNn => Predictor::OneNn(OneNn::fit(dataset)?),
            PredictorKind::External(cmd) => Predictor::External(ExternalPredictor::new(
                cmd.clone(),
                dataset.timesteps(),
                dataset.channels(),
            )),
        })
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Predictor::NearestCentroid(p) => p,
            Predictor::OneNn(p) => p,
            Predictor::External(p) => p,
        }
    }
}

impl Classifier for Predictor {
    fn shape(&self) -> (usize, usize) {
        self.inner().shape()
    }

    fn predict_batch(&self, instances: &[f64]) -> Result<Vec<ClassLabel>> {
        self.inner().predict_batch(instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn two_class() -> Dataset {
        Dataset::new(
            "toy",
            2,
            1,
            vec![0.0, 0.0, 0.0, 2.0, 4.0, 4.0, 4.0, 6.0],
            vec![ClassLabel(0), ClassLabel(0), ClassLabel(1), ClassLabel(1)],
            vec![Split::Train; 4],
        )
        .unwrap()
    }

    #[test]
    fn centroids_are_class_means() {
        let model = NearestCentroid::fit(&two_class()).unwrap();
        assert_eq!(model.centroids(), &[vec![0.0, 1.0], vec![4.0, 5.0]]);
        let labels = model.predict_batch(&[0.0, 1.0, 4.0, 5.0]).unwrap();
        assert_eq!(labels, vec![ClassLabel(0), ClassLabel(1)]);
    }

    #[test]
    fn one_nn_exhaustive_query() {
        let ds = two_class();
        let model = OneNn::fit(&ds).unwrap();
        let query = [0.0, 1.0];
        // Exhaustive distance comparison.
        let (best, _) = (0..ds.len())
            .map(|n| (n, squared_distance(ds.instance(n), &query)))
            .fold((usize::MAX, f64::INFINITY), |acc, (n, d)| if d < acc.1 { (n, d) } else { acc });
        assert_eq!(model.predict_one(&query).unwrap(), ds.label(best));
        assert_eq!(model.predict_one(&query).unwrap(), ClassLabel(0));
    }

    #[test]
    fn single_instance_centroid_equals_instance() {
        let ds = Dataset::new(
            "one",
            2,
            1,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![ClassLabel(5), ClassLabel(7)],
            vec![Split::Train; 2],
        )
        .unwrap();
        let model = NearestCentroid::fit(&ds).unwrap();
        assert_eq!(model.centroids(), &[vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let model = NearestCentroid::fit(&two_class()).unwrap();
        // Equidistant from (0,1) and (4,5).
        assert_eq!(model.predict_one(&[2.0, 3.0]).unwrap(), ClassLabel(0));
        let ds = Dataset::new(
            "tie",
            1,
            1,
            vec![1.0, -1.0],
            vec![ClassLabel(3), ClassLabel(1)],
            vec![Split::Train; 2],
        )
        .unwrap();
        assert_eq!(OneNn::fit(&ds).unwrap().predict_one(&[0.0]).unwrap(), ClassLabel(1));
    }

    #[test]
    fn empty_class_fails_fit() {
        let ds = Dataset::new(
            "x",
            1,
            1,
            vec![0.0, 1.0],
            vec![ClassLabel(0), ClassLabel(1)],
            vec![Split::Train, Split::Test],
        )
        .unwrap();
        assert!(matches!(NearestCentroid::fit(&ds), Err(Error::Fit(_))));
    }

    #[test]
    fn batch_shape_checked() {
        let model = NearestCentroid::fit(&two_class()).unwrap();
        assert!(matches!(model.predict_batch(&[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn large_batch_is_deterministic() {
        let model = NearestCentroid::fit(&two_class()).unwrap();
        let batch: Vec<f64> = std::iter::repeat_n([3.9, 4.2], 10_000).flatten().collect();
        let labels = model.predict_batch(&batch).unwrap();
        assert_eq!(labels.len(), 10_000);
        assert!(labels.iter().all(|&l| l == ClassLabel(1)));
        assert_eq!(labels, model.predict_batch(&batch).unwrap());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("centroid".parse::<PredictorKind>().unwrap(), PredictorKind::NearestCentroid);
        assert_eq!("1nn".parse::<PredictorKind>().unwrap(), PredictorKind::OneNn);
        assert_eq!(
            "external:python3 m.py".parse::<PredictorKind>().unwrap(),
            PredictorKind::External("python3 m.py".into())
        );
        assert!("external:".parse::<PredictorKind>().is_err());
        assert!("svm".parse::<PredictorKind>().is_err());
    }

    #[test]
    fn external_protocol_errors() {
        let bad = ExternalPredictor::new("cat >/dev/null; echo 0; echo nope", 1, 1);
        match bad.predict_batch(&[1.0, 2.0]) {
            Err(Error::Protocol { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let short = ExternalPredictor::new("cat >/dev/null; echo 0", 1, 1);
        assert!(matches!(short.predict_batch(&[1.0, 2.0]), Err(Error::Protocol { line: 2, .. })));
        let failing = ExternalPredictor::new("cat >/dev/null; exit 3", 1, 1);
        assert!(matches!(failing.predict_batch(&[1.0]), Err(Error::Predictor(_))));
    }

    #[test]
    fn external_wire_format() {
        let p = ExternalPredictor::new("true", 2, 2);
        assert_eq!(p.encode(&[1.0, 2.0, 3.5, -4.0]), "{\"values\":[[1.0,2.0],[3.5,-4.0]]}\n");
    }
}
