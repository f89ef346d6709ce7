use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phar_core::stats::{
    critical_difference, friedman, nemenyi, studentized_range_sf, wilcoxon, RankOrder, RankTable,
};

fn oracle_ranks(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&v| {
            let less = abs.iter().filter(|&&w| w < v).count() as f64;
            let equal = abs.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn enumerate_p(diffs: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = oracle_ranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let w = w_plus.min(total - w_plus);
    let n = nz.len();
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if s <= w {
            hits += 1;
        }
    }
    (w, (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0))
}

#[test]
fn exact_wilcoxon_equals_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..400 {
        let n = 1 + round % 12;
        // coarse values create ties and zero differences
        let a: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
        let b: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        if diffs.iter().all(|d| *d == 0.0) {
            assert!(wilcoxon(&a, &b).is_err());
            continue;
        }
        let (w, p) = enumerate_p(&diffs);
        let r = wilcoxon(&a, &b).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, w);
        assert_eq!(r.p_value, p, "a={a:?} b={b:?}");
    }
}

#[test]
fn wilcoxon_ten_pairs_w_two() {
    // only the second-smallest difference is negative, so W- = 2
    let a = [1.0, -2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let r = wilcoxon(&a, &[0.0; 10]).unwrap();
    assert_eq!(r.statistic, 2.0);
    assert!((r.p_value - 0.0059).abs() < 1e-3);
}

#[test]
fn wilcoxon_all_positive_ten() {
    let a: Vec<f64> = (1..=10).map(f64::from).collect();
    let r = wilcoxon(&a, &[0.0; 10]).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!((r.p_value - 0.001953125).abs() < 1e-15);
}

fn friedman_oracle(ranks: &[Vec<f64>]) -> f64 {
    let d = ranks.len() as f64;
    let k = ranks[0].len() as f64;
    let sums: Vec<f64> = (0..ranks[0].len()).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    12.0 / (d * k * (k + 1.0)) * sums.iter().map(|s| s * s).sum::<f64>() - 3.0 * d * (k + 1.0)
}

#[test]
fn friedman_matches_rank_sum_formula() {
    let tables = vec![
        vec![vec![0.9, 0.5, 0.1], vec![0.8, 0.6, 0.2], vec![0.7, 0.4, 0.3]],
        vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0], vec![2.0, 2.0, 1.0, 3.0], vec![5.0, 1.0, 1.0, 0.0]],
        vec![vec![0.3, 0.3, 0.3, 0.1, 0.9]; 6],
    ];
    for values in tables {
        let k = values[0].len();
        let names = (0..k).map(|i| format!("m{i}")).collect();
        let t = RankTable::from_values(names, &values, RankOrder::Descending).unwrap();
        let r = friedman(&t).unwrap();
        assert!((r.statistic - friedman_oracle(&t.ranks)).abs() < 1e-10);
    }
}

#[test]
fn perfect_ordering_maximizes_chi_square() {
    for (d, k) in [(4usize, 3usize), (10, 5), (7, 7)] {
        let values: Vec<Vec<f64>> = vec![(0..k).map(|j| (k - j) as f64).collect(); d];
        let names = (0..k).map(|i| format!("m{i}")).collect();
        let t = RankTable::from_values(names, &values, RankOrder::Descending).unwrap();
        let r = friedman(&t).unwrap();
        assert!((r.statistic - (d * (k - 1)) as f64).abs() < 1e-10);
    }
}

#[test]
fn nemenyi_boundary_at_cd() {
    let k = 7;
    let d = 10;
    let cd = critical_difference(k, d, 0.05).unwrap();
    assert!((cd - 2.849).abs() < 1e-3);
    let scale = ((k * (k + 1)) as f64 / (12.0 * d as f64)).sqrt();
    let p = studentized_range_sf(cd / scale, k);
    assert!((p - 0.05).abs() < 1e-3, "{p}");
}

#[test]
fn nemenyi_random_tables_are_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let k = rng.random_range(2..=20);
        let d = rng.random_range(2..15);
        let values: Vec<Vec<f64>> = (0..d).map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let names = (0..k).map(|i| format!("m{i}")).collect();
        let t = RankTable::from_values(names, &values, RankOrder::Descending).unwrap();
        for row in &t.ranks {
            assert!((row.iter().sum::<f64>() - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
        }
        let r = nemenyi(&t, 0.05).unwrap();
        for i in 0..k {
            assert_eq!(r.p_capped[i][i], 1.0);
            for j in 0..k {
                assert_eq!(r.p_raw[i][j], r.p_raw[j][i]);
                assert!((0.0..=1.0).contains(&r.p_raw[i][j]));
            }
        }
    }
}
