//! Low-dimensional projection of embeddings: PCA and exact t-SNE.
//!
//! The t-SNE path is the exact `O(N²)` formulation. Coordinates are initialized
//! from the leading principal components and rescaled to a standard deviation
//! of `1e-4` per axis before the KL divergence is minimized by momentum
//! gradient descent.

mod pca;
mod tsne;

pub use pca::{pca_project, PcaProjection};
pub use tsne::{
    calibrate_bandwidth, conditional_affinities, joint_affinities, kl_divergence, kl_gradient,
    symmetrize_affinities, tsne_embed, tsne_embed_matrix, Bandwidth, BandwidthStatus,
    JointAffinities, TsneOptimizer, AFFINITY_FLOOR, INIT_STDDEV,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },
    #[error("requested {k} components but at most {max} are available")]
    InvalidComponents { k: usize, max: usize },
    #[error("invalid t-SNE configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite coordinate update at iteration {iteration}")]
    NonFiniteUpdate { iteration: usize },
}

/// t-SNE hyperparameters. Defaults are common practice; none of them is
/// prescribed by the bias-analysis method itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub target_dim: usize,
    pub perplexity: f64,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub total_iters: usize,
    /// `None` selects `max(n / 12, 50)`.
    pub learning_rate: Option<f64>,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub seed: u64,
    /// Allowed deviation of the row entropy from `log2(perplexity)`, in bits.
    pub perplexity_tolerance: f64,
    pub perplexity_max_bisect: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            target_dim: 3,
            perplexity: 30.0,
            early_exaggeration_factor: 12.0,
            early_exaggeration_iters: 250,
            total_iters: 1000,
            learning_rate: None,
            momentum_early: 0.5,
            momentum_late: 0.8,
            seed: 0,
            perplexity_tolerance: 1e-5,
            perplexity_max_bisect: 50,
        }
    }
}

impl TsneConfig {
    /// Checks the invariants that hold regardless of the data size.
    pub fn validate(&self) -> Result<(), ProjectionError> {
        let bad = |m: String| Err(ProjectionError::InvalidConfig(m));
        if !(2..=3).contains(&self.target_dim) {
            return bad(format!("target_dim must be 2 or 3, got {}", self.target_dim));
        }
        if !(self.perplexity.is_finite() && self.perplexity > 0.0) {
            return bad(format!("perplexity must be positive, got {}", self.perplexity));
        }
        if !(self.early_exaggeration_factor.is_finite() && self.early_exaggeration_factor > 0.0) {
            return bad("early_exaggeration_factor must be positive".into());
        }
        if self.early_exaggeration_iters >= self.total_iters {
            return bad(format!(
                "early_exaggeration_iters ({}) must be below total_iters ({})",
                self.early_exaggeration_iters, self.total_iters
            ));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("learning_rate must be positive, got {lr}"));
            }
        }
        for (name, m) in [
            ("momentum_early", self.momentum_early),
            ("momentum_late", self.momentum_late),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must lie in [0, 1), got {m}"));
            }
        }
        if !(self.perplexity_tolerance.is_finite() && self.perplexity_tolerance > 0.0) {
            return bad("perplexity_tolerance must be positive".into());
        }
        if self.perplexity_max_bisect == 0 {
            return bad("perplexity_max_bisect must be at least 1".into());
        }
        Ok(())
    }

    /// Checks the invariants that depend on the sample count.
    pub fn validate_for(&self, n_samples: usize) -> Result<(), ProjectionError> {
        self.validate()?;
        if self.perplexity >= n_samples as f64 {
            return Err(ProjectionError::InvalidConfig(format!(
                "perplexity {} must be below the sample count {n_samples}",
                self.perplexity
            )));
        }
        Ok(())
    }

    pub fn effective_learning_rate(&self, n_samples: usize) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| (n_samples as f64 / 12.0).max(50.0))
    }
}

/// Output of [`tsne_embed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// `N × target_dim` coordinates.
    pub coords: Matrix,
    /// `kl_trace[0]` is the KL divergence of the initial layout and
    /// `kl_trace[t]` the divergence after `t` updates.
    pub kl_trace: Vec<f64>,
    pub pca_explained_variance: Vec<f64>,
    /// Rows whose bandwidth search did not reach the perplexity tolerance.
    pub unconverged_rows: usize,
}
