//! Nemenyi post-hoc comparison and critical-difference data.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::RankTable;
use crate::error::{Error, Result};

/// Reported p-values are capped here; raw values are kept alongside.
pub const P_CAP: f64 = 0.9;

// Upper quantiles of the studentized range at infinite degrees of freedom,
// divided by sqrt(2), for K = 2..=20.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];
const Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120,
    3.159, 3.196, 3.230, 3.261, 3.291, 3.319,
];

pub fn q_alpha(k: usize, alpha: f64) -> Result<f64> {
    if !(2..=20).contains(&k) {
        return Err(Error::UnsupportedK(k));
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Config(format!("alpha must be 0.05 or 0.10, got {alpha}")));
    };
    Ok(table[k - 2])
}

/// `CD = q_alpha * sqrt(K (K + 1) / (6 D))`.
pub fn critical_difference(k: usize, blocks: usize, alpha: f64) -> Result<f64> {
    let q = q_alpha(k, alpha)?;
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * blocks as f64)).sqrt())
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(range of K standard normals <= q)`, i.e. the studentized range CDF
/// with infinite degrees of freedom, by composite Simpson integration.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let (a, b) = (-10.0, 10.0);
    let steps = 4000;
    let h = (b - a) / steps as f64;
    let f = |z: f64| phi(z) * (big_phi(z + q) - big_phi(z)).powi(k as i32 - 1);
    let mut sum = f(a) + f(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    (k as f64 * sum * h / 3.0).clamp(0.0, 1.0)
}

pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    1.0 - studentized_range_cdf(q, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdEntry {
    pub method: String,
    pub mean_rank: f64,
    pub cd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub methods: Vec<String>,
    pub alpha: f64,
    pub q_alpha: f64,
    pub cd: f64,
    pub mean_ranks: Vec<f64>,
    pub p_raw: Vec<Vec<f64>>,
    pub p_capped: Vec<Vec<f64>>,
}

impl NemenyiResult {
    pub fn cd_diagram(&self) -> Vec<CdEntry> {
        self.methods
            .iter()
            .zip(&self.mean_ranks)
            .map(|(m, &r)| CdEntry {
                method: m.clone(),
                mean_rank: r,
                cd: self.cd,
            })
            .collect()
    }
}

/// Pairwise p-values from `q = |Rbar_i - Rbar_j| / sqrt(K (K + 1) / (12 D))`.
pub fn nemenyi(table: &RankTable, alpha: f64) -> Result<NemenyiResult> {
    let k = table.methods_count();
    let d = table.blocks();
    let q_a = q_alpha(k, alpha)?;
    let cd = critical_difference(k, d, alpha)?;
    let kf = k as f64;
    let scale = (kf * (kf + 1.0) / (12.0 * d as f64)).sqrt();
    let mut p_raw = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let q = (table.mean_ranks[i] - table.mean_ranks[j]).abs() / scale;
            let p = studentized_range_sf(q, k);
            p_raw[i][j] = p;
            p_raw[j][i] = p;
        }
    }
    let p_capped = p_raw
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &p)| if i == j { 1.0 } else { p.min(P_CAP) })
                .collect()
        })
        .collect();
    Ok(NemenyiResult {
        methods: table.methods.clone(),
        alpha,
        q_alpha: q_a,
        cd,
        mean_ranks: table.mean_ranks.clone(),
        p_raw,
        p_capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RankOrder;

    #[test]
    fn range_distribution_reference_values() {
        let cases = [
            (3.0, 3, 0.08554257165495793),
            (2.0, 5, 0.6184494805509919),
            (4.0, 7, 0.06995876562981618),
            (1.0, 2, 0.4795001221869535),
            (5.5, 20, 0.01482831669053375),
        ];
        for (q, k, expected) in cases {
            let got = studentized_range_sf(q, k);
            assert!((got - expected).abs() < 1e-7, "q={q} k={k}: {got} vs {expected}");
        }
    }

    #[test]
    fn table_quantiles_hit_alpha() {
        for k in 2..=20 {
            let p = studentized_range_sf(q_alpha(k, 0.05).unwrap() * std::f64::consts::SQRT_2, k);
            assert!((p - 0.05).abs() < 1e-3, "k={k}: {p}");
            let p = studentized_range_sf(q_alpha(k, 0.10).unwrap() * std::f64::consts::SQRT_2, k);
            assert!((p - 0.10).abs() < 2e-3, "k={k}: {p}");
        }
    }

    #[test]
    fn cd_for_seven_methods_ten_blocks() {
        let cd = critical_difference(7, 10, 0.05).unwrap();
        assert!((cd - 2.949 * (56.0f64 / 60.0).sqrt()).abs() < 1e-12);
        assert!((cd - 2.849).abs() < 1e-3);
    }

    #[test]
    fn unsupported_k() {
        assert!(matches!(q_alpha(21, 0.05), Err(Error::UnsupportedK(21))));
        assert!(matches!(q_alpha(1, 0.05), Err(Error::UnsupportedK(1))));
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let values = vec![
            vec![0.9, 0.5, 0.5, 0.1],
            vec![0.8, 0.6, 0.4, 0.2],
            vec![0.7, 0.7, 0.3, 0.3],
        ];
        let names = (0..4).map(|i| format!("m{i}")).collect();
        let t = RankTable::from_values(names, &values, RankOrder::Descending).unwrap();
        let r = nemenyi(&t, 0.05).unwrap();
        for i in 0..4 {
            assert_eq!(r.p_capped[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(r.p_raw[i][j], r.p_raw[j][i]);
                assert!(r.p_capped[i][j] <= 1.0);
            }
        }
        assert_eq!(r.cd_diagram().len(), 4);
    }

    #[test]
    fn equal_ranks_are_capped() {
        let values = vec![vec![0.5, 0.5, 0.1]; 4];
        let names = (0..3).map(|i| format!("m{i}")).collect();
        let t = RankTable::from_values(names, &values, RankOrder::Descending).unwrap();
        let r = nemenyi(&t, 0.05).unwrap();
        assert_eq!(r.p_raw[0][1], 1.0 - studentized_range_cdf(0.0, 3));
        assert_eq!(r.p_capped[0][1], P_CAP);
    }
}
