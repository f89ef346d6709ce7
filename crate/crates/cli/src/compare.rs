//! Statistical comparison of metric reports.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use phar_core::metrics::objective_by_instance;
use phar_core::stats::{
    friedman, nemenyi, wilcoxon, CdEntry, FriedmanResult, NemenyiResult, RankOrder, RankTable,
    WilcoxonResult,
};
use phar_core::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wilcoxon,
    Friedman,
    Nemenyi,
}

impl FromStr for TestKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilcoxon" => Ok(TestKind::Wilcoxon),
            "friedman" => Ok(TestKind::Friedman),
            "nemenyi" => Ok(TestKind::Nemenyi),
            _ => bail!("unknown test {s:?} (expected wilcoxon, friedman or nemenyi)"),
        }
    }
}

/// K methods observed over D blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub methods: Vec<String>,
    /// `"dataset"` or `"instance"`.
    pub kind: String,
    pub metric: String,
    pub values: Vec<Vec<f64>>,
}

/// Builds comparison blocks from reports.
///
/// With reports over two or more datasets, each dataset is a block and
/// `metric` names a report aggregate. With a single dataset the blocks are
/// the explained instances and the per-instance objective is compared;
/// instances a report does not cover score zero.
pub fn blocks_from_reports(reports: &[MetricsReport], metric: &str) -> Result<Blocks> {
    if reports.is_empty() {
        bail!("no reports to compare");
    }
    let datasets: BTreeSet<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        if !methods.contains(&r.provenance) {
            methods.push(r.provenance.clone());
        }
    }
    if datasets.len() >= 2 {
        let mut table: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
        for r in reports {
            let k = methods.iter().position(|m| *m == r.provenance).expect("known method");
            let value = r
                .metric(metric)
                .ok_or_else(|| anyhow::anyhow!("metric {metric:?} undefined in report {}", r.provenance))?;
            table
                .entry(r.dataset.as_str())
                .or_insert_with(|| vec![None; methods.len()])[k] = Some(value);
        }
        let mut values = Vec::new();
        for (ds, row) in table {
            let row: Option<Vec<f64>> = row.into_iter().collect();
            match row {
                Some(r) => values.push(r),
                None => bail!("dataset {ds} lacks a report for some method"),
            }
        }
        return Ok(Blocks {
            methods,
            kind: "dataset".into(),
            metric: metric.into(),
            values,
        });
    }

    let per_method: Vec<BTreeMap<usize, f64>> = methods
        .iter()
        .map(|m| {
            let r = reports.iter().find(|r| &r.provenance == m).expect("known method");
            objective_by_instance(r)
        })
        .collect();
    let instances: BTreeSet<usize> = per_method.iter().flat_map(|m| m.keys().copied()).collect();
    let values = instances
        .iter()
        .map(|n| per_method.iter().map(|m| m.get(n).copied().unwrap_or(0.0)).collect())
        .collect();
    Ok(Blocks {
        methods,
        kind: "instance".into(),
        metric: "M".into(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonEntry {
    pub a: String,
    pub b: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<WilcoxonResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub metric: String,
    pub block_kind: String,
    pub blocks: usize,
    pub methods: Vec<String>,
    pub mean_ranks: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friedman: Option<FriedmanResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nemenyi: Option<NemenyiResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd_diagram: Option<Vec<CdEntry>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub wilcoxon: Vec<WilcoxonEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Runs the requested tests. `pairs` restricts the Wilcoxon comparisons;
/// `None` compares every pair of methods.
pub fn compare(
    blocks: &Blocks,
    tests: &[TestKind],
    alpha: f64,
    pairs: Option<&[(usize, usize)]>,
) -> Result<StatsReport> {
    let table = RankTable::from_values(blocks.methods.clone(), &blocks.values, RankOrder::Descending)?;
    let mut report = StatsReport {
        manifest: None,
        metric: blocks.metric.clone(),
        block_kind: blocks.kind.clone(),
        blocks: blocks.values.len(),
        methods: blocks.methods.clone(),
        mean_ranks: table.mean_ranks.clone(),
        friedman: None,
        nemenyi: None,
        cd_diagram: None,
        wilcoxon: Vec::new(),
        notes: Vec::new(),
    };
    if tests.contains(&TestKind::Friedman) {
        match friedman(&table) {
            Ok(r) => report.friedman = Some(r),
            Err(e) => report.notes.push(format!("friedman: {e}")),
        }
    }
    if tests.contains(&TestKind::Nemenyi) {
        match nemenyi(&table, alpha) {
            Ok(r) => {
                report.cd_diagram = Some(r.cd_diagram());
                report.nemenyi = Some(r);
            }
            Err(e) => report.notes.push(format!("nemenyi: {e}")),
        }
    }
    if tests.contains(&TestKind::Wilcoxon) {
        let k = blocks.methods.len();
        let all: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .collect();
        for &(i, j) in pairs.unwrap_or(&all) {
            let a: Vec<f64> = blocks.values.iter().map(|r| r[i]).collect();
            let b: Vec<f64> = blocks.values.iter().map(|r| r[j]).collect();
            let (result, error) = match wilcoxon(&a, &b) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            report.wilcoxon.push(WilcoxonEntry {
                a: blocks.methods[i].clone(),
                b: blocks.methods[j].clone(),
                result,
                error,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use phar_core::metrics::InstanceMetrics;

    fn report(dataset: &str, prov: &str, mean_m: f64, per: &[(usize, f64)]) -> MetricsReport {
        MetricsReport {
            dataset: dataset.into(),
            provenance: prov.into(),
            instances: per.len(),
            mean_m,
            explained_ratio: 1.0,
            mean_confidence: None,
            mean_coverage: None,
            mean_features: None,
            median_features: None,
            conf_er: None,
            conf_cov_er: None,
            per_instance: per
                .iter()
                .map(|&(instance, m)| InstanceMetrics {
                    instance,
                    has_rule: true,
                    m,
                    coverage: None,
                    confidence: None,
                    feature_count: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn per_dataset_blocks() {
        let reports = vec![
            report("A", "x", 0.1, &[]),
            report("A", "y", 0.2, &[]),
            report("B", "x", 0.3, &[]),
            report("B", "y", 0.1, &[]),
        ];
        let b = blocks_from_reports(&reports, "mean_M").unwrap();
        assert_eq!(b.kind, "dataset");
        assert_eq!(b.values, vec![vec![0.1, 0.2], vec![0.3, 0.1]]);
    }

    #[test]
    fn per_instance_blocks_fill_missing_with_zero() {
        let reports = vec![
            report("A", "x", 0.0, &[(1, 0.5), (3, 0.2)]),
            report("A", "y", 0.0, &[(1, 0.4)]),
            report("A", "z", 0.0, &[(3, 0.9)]),
        ];
        let b = blocks_from_reports(&reports, "mean_M").unwrap();
        assert_eq!(b.kind, "instance");
        assert_eq!(b.values, vec![vec![0.5, 0.4, 0.0], vec![0.2, 0.0, 0.9]]);
        let s = compare(&b, &[TestKind::Friedman, TestKind::Nemenyi, TestKind::Wilcoxon], 0.05, None).unwrap();
        assert_eq!(s.wilcoxon.len(), 3);
        assert!(s.nemenyi.is_some());
    }
}
