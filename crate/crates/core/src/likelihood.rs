//! Cluster probabilities and scaled likelihoods.
//!
//! `P(C_i) = |C_i| / N` counts every sample, noise included, in `N`. The
//! scaled likelihood divides by the largest cluster instead,
//! `L_i = |C_i| / max_k |C_k|`, so the most common appearance mode has
//! likelihood exactly 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterAssignment, NOISE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LikelihoodError {
    #[error("cluster assignment has no samples")]
    EmptyAssignment,
    #[error("every sample is noise; no cluster to scale against")]
    NoClusters,
    #[error("histogram needs at least one bin")]
    NoBins,
}

/// Likelihood given to samples labeled as noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// Each noise sample counts as a cluster of size one: `1 / max |C_i|`.
    #[default]
    Singleton,
    /// The likelihood of the smallest real cluster.
    MinCluster,
    /// Likelihood 1, i.e. noise is treated as common.
    Unit,
}

/// `P(C_i)` for every non-noise cluster.
pub fn cluster_probabilities(a: &ClusterAssignment) -> Result<BTreeMap<usize, f64>, LikelihoodError> {
    let n = a.n_samples();
    if n == 0 {
        return Err(LikelihoodError::EmptyAssignment);
    }
    Ok(a.cluster_sizes()
        .into_iter()
        .enumerate()
        .map(|(id, size)| (id, size as f64 / n as f64))
        .collect())
}

/// Per-cluster and per-sample scaled likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodBank {
    pub cluster_sizes: BTreeMap<usize, usize>,
    pub n_total: usize,
    pub cluster_likelihood: BTreeMap<usize, f64>,
    /// Aligned with the sample order of the assignment.
    pub sample_likelihood: Vec<f64>,
    pub noise_policy: NoisePolicy,
}

impl LikelihoodBank {
    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn noise_count(&self) -> usize {
        self.n_total - self.cluster_sizes.values().sum::<usize>()
    }

    pub fn largest_cluster_size(&self) -> usize {
        self.cluster_sizes.values().copied().max().unwrap_or(0)
    }
}

pub fn scaled_likelihoods(
    a: &ClusterAssignment,
    noise_policy: NoisePolicy,
) -> Result<LikelihoodBank, LikelihoodError> {
    if a.n_samples() == 0 {
        return Err(LikelihoodError::EmptyAssignment);
    }
    let sizes = a.cluster_sizes();
    let largest = sizes.iter().copied().max().ok_or(LikelihoodError::NoClusters)?;
    let cluster_likelihood: BTreeMap<usize, f64> = sizes
        .iter()
        .enumerate()
        .map(|(id, &s)| (id, s as f64 / largest as f64))
        .collect();

    let noise_value = match noise_policy {
        NoisePolicy::Singleton => 1.0 / largest as f64,
        NoisePolicy::MinCluster => cluster_likelihood
            .values()
            .copied()
            .fold(f64::INFINITY, f64::min),
        NoisePolicy::Unit => 1.0,
    };
    let sample_likelihood = a
        .labels()
        .iter()
        .map(|&l| {
            if l == NOISE {
                noise_value
            } else {
                cluster_likelihood[&(l as usize)]
            }
        })
        .collect();

    Ok(LikelihoodBank {
        cluster_sizes: sizes.into_iter().enumerate().collect(),
        n_total: a.n_samples(),
        cluster_likelihood,
        sample_likelihood,
        noise_policy,
    })
}

/// One histogram bin over `(low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Histogram of cluster likelihoods over `n_bins` equal bins partitioning `(0, 1]`.
/// Counts clusters, not samples.
pub fn likelihood_histogram(
    bank: &LikelihoodBank,
    n_bins: usize,
) -> Result<Vec<HistogramBin>, LikelihoodError> {
    if n_bins == 0 {
        return Err(LikelihoodError::NoBins);
    }
    let nb = n_bins as f64;
    let edge = |k: usize| k as f64 / nb;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|k| HistogramBin {
            bin_low: edge(k),
            bin_high: edge(k + 1),
            count: 0,
        })
        .collect();
    for &l in bank.cluster_likelihood.values() {
        let mut k = ((l * nb).ceil() as usize).clamp(1, n_bins) - 1;
        // correct for rounding in l * n_bins against the stored edges
        while k > 0 && l <= bins[k].bin_low {
            k -= 1;
        }
        while k + 1 < n_bins && l > bins[k].bin_high {
            k += 1;
        }
        bins[k].count += 1;
    }
    Ok(bins)
}
