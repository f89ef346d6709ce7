//! Nonparametric comparisons of explainers and fusion methods.

mod friedman;
mod nemenyi;
mod wilcoxon;

pub use friedman::{friedman, FriedmanResult};
pub use nemenyi::{
    critical_difference, nemenyi, q_alpha, studentized_range_cdf, studentized_range_sf, CdEntry,
    NemenyiResult, P_CAP,
};
pub use wilcoxon::{wilcoxon, wilcoxon_paired, PairedSample, WilcoxonResult, EXACT_MAX_N};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which end of a metric is ranked first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOrder {
    /// Highest value gets rank 1.
    #[default]
    Descending,
    Ascending,
}

/// Ranks `1..=n` with ties sharing the mean of the ranks they span.
pub fn average_ranks(values: &[f64], order: RankOrder) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        match order {
            RankOrder::Ascending => ord,
            RankOrder::Descending => ord.reverse(),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Per-block ranks of K methods over D blocks (datasets or instances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    /// D rows of K ranks.
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
}

impl RankTable {
    /// `values[d][k]` is method `k`'s score on block `d`.
    pub fn from_values(methods: Vec<String>, values: &[Vec<f64>], order: RankOrder) -> Result<Self> {
        let k = methods.len();
        if values.is_empty() {
            return Err(Error::UndefinedStatistic("rank table needs at least one block".into()));
        }
        if let Some(row) = values.iter().find(|r| r.len() != k) {
            return Err(Error::dimension(
                format!("{k} values per block"),
                format!("{}", row.len()),
            ));
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::UndefinedStatistic("NaN in rank table input".into()));
        }
        let ranks: Vec<Vec<f64>> = values.iter().map(|r| average_ranks(r, order)).collect();
        let d = ranks.len() as f64;
        let mean_ranks = (0..k)
            .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / d)
            .collect();
        Ok(Self {
            methods,
            ranks,
            mean_ranks,
        })
    }

    pub fn methods_count(&self) -> usize {
        self.methods.len()
    }

    pub fn blocks(&self) -> usize {
        self.ranks.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0], RankOrder::Descending), vec![1.5, 4.0, 1.5, 3.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0], RankOrder::Ascending), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(average_ranks(&[5.0; 3], RankOrder::Descending), vec![2.0; 3]);
    }

    #[test]
    fn rank_rows_sum() {
        let values = vec![vec![0.1, 0.5, 0.5, 0.2], vec![1.0, 1.0, 1.0, 1.0], vec![4.0, 3.0, 2.0, 1.0]];
        let t = RankTable::from_values(vec!["a".into(), "b".into(), "c".into(), "d".into()], &values, RankOrder::Descending).unwrap();
        for row in &t.ranks {
            assert_eq!(row.iter().sum::<f64>(), 10.0);
        }
        assert_eq!(t.mean_ranks[0], (4.0 + 2.5 + 1.0) / 3.0);
    }
}
