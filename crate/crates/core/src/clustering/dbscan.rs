use std::collections::VecDeque;

use rayon::prelude::*;

use super::{ClusterAssignment, ClusterError, DbscanParams, NOISE};
use crate::matrix::{distance, Matrix};

/// Indices `j` (including `i`) with `|x_i - x_j| <= eps`, ascending.
pub fn region_query(points: &Matrix, i: usize, eps: f64) -> Vec<usize> {
    let xi = points.row(i);
    (0..points.rows())
        .filter(|&j| distance(xi, points.row(j)) <= eps)
        .collect()
}

fn region_count(points: &Matrix, i: usize, eps: f64) -> usize {
    let xi = points.row(i);
    points
        .iter_rows()
        .filter(|xj| distance(xi, xj) <= eps)
        .count()
}

/// DBSCAN with self-inclusive neighborhoods.
///
/// Points are scanned in index order; each unvisited core point seeds a
/// cluster that is expanded breadth-first. A border point keeps the first
/// cluster that reaches it.
pub fn dbscan(points: &Matrix, params: &DbscanParams) -> Result<ClusterAssignment, ClusterError> {
    params.validate()?;
    let n = points.rows();
    if n == 0 {
        return Err(ClusterError::InsufficientPoints {
            required: 1,
            found: 0,
        });
    }
    let eps = params.eps;
    let is_core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| region_count(points, i, eps) >= params.min_samples)
        .collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed] != NOISE || !is_core[seed] {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            for j in region_query(points, q, eps) {
                if labels[j] == NOISE {
                    labels[j] = next;
                    if is_core[j] {
                        queue.push_back(j);
                    }
                }
            }
        }
        next += 1;
    }

    let echo = serde_json::json!({ "eps": params.eps, "min_samples": params.min_samples });
    Ok(ClusterAssignment::from_raw_labels(&labels, "dbscan", echo))
}
