//! Generalized Focal Loss weighting.
//!
//! `W(p, η, γ) = (η + (1 − p)^γ) / (η + 1)`, where `p` is a sample's scaled
//! likelihood. With `η = 0` this is the focal-loss modulating factor; larger
//! `η` flattens the curve toward uniform weights. Weights lie in
//! `[η / (η + 1), 1]` and decrease as samples become more common.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::LikelihoodBank;

#[derive(Debug, Error, PartialEq)]
pub enum GflError {
    #[error("likelihood {0} lies outside [0, 1]")]
    LikelihoodOutOfRange(f64),
    #[error("GFL parameters must be finite and non-negative (eta = {eta}, gamma = {gamma})")]
    InvalidParams { eta: f64, gamma: f64 },
    #[error("{ids} sample ids for {likelihoods} likelihoods")]
    LengthMismatch { ids: usize, likelihoods: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GflParams {
    pub eta: f64,
    pub gamma: f64,
}

impl GflParams {
    pub fn new(eta: f64, gamma: f64) -> Result<Self, GflError> {
        let p = Self { eta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GflError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.eta) && ok(self.gamma) {
            Ok(())
        } else {
            Err(GflError::InvalidParams {
                eta: self.eta,
                gamma: self.gamma,
            })
        }
    }

    /// Smallest weight any sample can receive, `η / (η + 1)`.
    pub fn floor(&self) -> f64 {
        self.eta / (self.eta + 1.0)
    }
}

impl Default for GflParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            gamma: 5.0,
        }
    }
}

pub fn gfl_weight(p: f64, params: &GflParams) -> Result<f64, GflError> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(GflError::LikelihoodOutOfRange(p));
    }
    Ok((params.eta + (1.0 - p).powf(params.gamma)) / (params.eta + 1.0))
}

/// Per-sample training weights, the file contract consumed by trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub sample_ids: Vec<String>,
    pub likelihoods: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: GflParams,
}

impl WeightTable {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean_weight(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

/// Weights for every sample of `bank`, in bank order.
pub fn weight_table(
    sample_ids: &[String],
    bank: &LikelihoodBank,
    params: &GflParams,
) -> Result<WeightTable, GflError> {
    if sample_ids.len() != bank.sample_likelihood.len() {
        return Err(GflError::LengthMismatch {
            ids: sample_ids.len(),
            likelihoods: bank.sample_likelihood.len(),
        });
    }
    let weights = bank
        .sample_likelihood
        .iter()
        .map(|&p| gfl_weight(p, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightTable {
        sample_ids: sample_ids.to_vec(),
        likelihoods: bank.sample_likelihood.clone(),
        weights,
        params: *params,
    })
}
