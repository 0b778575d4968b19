//! Clustering and embedding quality measures used by tests and examples.

use std::collections::HashMap;

use crate::matrix::{squared_distance, Matrix};

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings. Every distinct label, including
/// `-1`, is its own group.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len() as u64;
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both labelings are trivial (all-one-group or all-singletons)
        return if index == expected { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Fraction of points whose nearest other point shares their label.
pub fn nearest_neighbor_purity(points: &Matrix, labels: &[usize]) -> f64 {
    let n = points.rows();
    assert_eq!(n, labels.len());
    if n < 2 {
        return 1.0;
    }
    let hits = (0..n)
        .filter(|&i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&x, &y| {
                    squared_distance(points.row(i), points.row(x))
                        .total_cmp(&squared_distance(points.row(i), points.row(y)))
                })
                .expect("n >= 2");
            labels[nearest] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}
