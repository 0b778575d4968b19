//! Density clustering of projected samples.
//!
//! Both algorithms use brute-force Euclidean neighbor search and produce a
//! [`ClusterAssignment`] whose labels are renumbered by ascending smallest
//! member index, with [`NOISE`] marking unclustered samples.

mod dbscan;
mod hdbscan;

pub use dbscan::{dbscan, region_query};
pub use hdbscan::{
    core_distances, hdbscan, mutual_reachability_mst, CondensedCluster, CondensedTree, MstEdge,
    PointExit,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Label of samples that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("need at least {required} points, got {found}")]
    InsufficientPoints { required: usize, found: usize },
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_samples: usize,
}

impl DbscanParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(ClusterError::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.min_samples == 0 {
            return Err(ClusterError::InvalidParams(
                "min_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    #[default]
    ExcessOfMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbor rank used for core distances (the point itself is rank 1).
    pub min_samples: usize,
    #[serde(default)]
    pub selection: ClusterSelection,
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidParams(
                "min_cluster_size must be at least 2".into(),
            ));
        }
        if self.min_samples == 0 {
            return Err(ClusterError::InvalidParams(
                "min_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Clustering method and its parameters, as selected in a pipeline config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ClusterParams {
    Dbscan(DbscanParams),
    Hdbscan(HdbscanParams),
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        match self {
            Self::Dbscan(p) => p.validate(),
            Self::Hdbscan(p) => p.validate(),
        }
    }

    /// Runs the selected algorithm. The condensed tree is returned for HDBSCAN only.
    pub fn run(
        &self,
        points: &Matrix,
    ) -> Result<(ClusterAssignment, Option<CondensedTree>), ClusterError> {
        match self {
            Self::Dbscan(p) => Ok((dbscan(points, p)?, None)),
            Self::Hdbscan(p) => {
                let (a, tree) = hdbscan(points, p)?;
                Ok((a, Some(tree)))
            }
        }
    }
}

/// Per-sample cluster labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<i64>,
    n_clusters: usize,
    method_tag: String,
    params_echo: serde_json::Value,
}

impl ClusterAssignment {
    /// Validates labels that are already contiguous in `0..n_clusters` or [`NOISE`].
    pub fn new(
        labels: Vec<i64>,
        method_tag: impl Into<String>,
        params_echo: serde_json::Value,
    ) -> Result<Self, ClusterError> {
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
        let mut seen = vec![false; n_clusters];
        for &l in &labels {
            if l < NOISE {
                return Err(ClusterError::InvalidLabels(format!("label {l} is below -1")));
            }
            if l >= 0 {
                seen[l as usize] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ClusterError::InvalidLabels(format!(
                "cluster {missing} has no members"
            )));
        }
        Ok(Self {
            labels,
            n_clusters,
            method_tag: method_tag.into(),
            params_echo,
        })
    }

    /// Renumbers arbitrary cluster ids by ascending smallest member index.
    /// Negative raw ids are treated as noise.
    pub fn from_raw_labels(
        raw: &[i64],
        method_tag: impl Into<String>,
        params_echo: serde_json::Value,
    ) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                if r < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(r).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            n_clusters: map.len(),
            method_tag: method_tag.into(),
            params_echo,
        }
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    pub fn params_echo(&self) -> &serde_json::Value {
        &self.params_echo
    }

    /// `|C_i|` for each cluster id.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}
