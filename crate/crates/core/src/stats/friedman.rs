//! Friedman rank test over blocks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::RankTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
}

/// `chi2 = 12 D / (K (K + 1)) * sum_j (Rbar_j - (K + 1) / 2)^2` with `K - 1`
/// degrees of freedom. Ties are averaged; no tie correction is applied.
pub fn friedman(table: &RankTable) -> Result<FriedmanResult> {
    let k = table.methods_count();
    let d = table.blocks();
    if k < 3 || d < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "Friedman test needs at least 3 methods and 2 blocks, got {k} and {d}"
        )));
    }
    let kf = k as f64;
    let centre = (kf + 1.0) / 2.0;
    let spread: f64 = table.mean_ranks.iter().map(|r| (r - centre).powi(2)).sum();
    let statistic = 12.0 * d as f64 / (kf * (kf + 1.0)) * spread;
    let chi = ChiSquared::new(kf - 1.0).map_err(|e| Error::UndefinedStatistic(e.to_string()))?;
    let p_value = chi.sf(statistic).clamp(0.0, 1.0);
    Ok(FriedmanResult {
        statistic,
        dof: k - 1,
        p_value,
        mean_ranks: table.mean_ranks.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RankOrder;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn consistent_ordering() {
        let values = vec![vec![3.0, 2.0, 1.0]; 3];
        let t = RankTable::from_values(names(3), &values, RankOrder::Descending).unwrap();
        let r = friedman(&t).unwrap();
        assert!((r.statistic - 6.0).abs() < 1e-12);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn identical_columns() {
        let values = vec![vec![0.4; 4]; 5];
        let t = RankTable::from_values(names(4), &values, RankOrder::Descending).unwrap();
        let r = friedman(&t).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn too_few_methods() {
        let t = RankTable::from_values(names(2), &[vec![1.0, 2.0], vec![2.0, 1.0]], RankOrder::Descending).unwrap();
        assert!(friedman(&t).is_err());
    }
}
