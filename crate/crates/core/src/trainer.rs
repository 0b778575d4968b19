//! Desk-scale check that likelihood-based loss weights help rare subpopulations.
//!
//! An imbalanced, overlapping two-blob dataset is clustered as-is, turned into
//! GFL weights, and used to train a multinomial logistic classifier twice:
//! once with uniform weights and once with the per-sample weights multiplied
//! into each sample's cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{dbscan, ClusterError, DbscanParams};
use crate::gfl::{gfl_weight, GflError, GflParams};
use crate::likelihood::{scaled_likelihoods, LikelihoodError, NoisePolicy};
use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{weights} weights for {samples} samples")]
    WeightMismatch { weights: usize, samples: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Gfl(#[from] GflError),
}

/// Gaussian blobs in the plane, one class label per blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub blob_means: Vec<[f64; 2]>,
    pub blob_stddev: f64,
    pub blob_counts: Vec<usize>,
    pub class_of_blob: Vec<usize>,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    /// Majority blob at the origin and a rare blob `2σ` away, `[950, 50]` samples.
    pub fn imbalanced_pair(seed: u64) -> Self {
        Self {
            blob_means: vec![[0.0, 0.0], [2.0, 0.0]],
            blob_stddev: 1.0,
            blob_counts: vec![950, 50],
            class_of_blob: vec![0, 1],
            seed,
        }
    }

    pub fn n_blobs(&self) -> usize {
        self.blob_means.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_of_blob.iter().copied().max().map_or(0, |c| c + 1)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let k = self.blob_means.len();
        if k == 0 {
            return Err(TrainError::InvalidSpec("no blobs".into()));
        }
        if self.blob_counts.len() != k || self.class_of_blob.len() != k {
            return Err(TrainError::InvalidSpec(
                "blob_means, blob_counts and class_of_blob must be aligned".into(),
            ));
        }
        if self.blob_counts.contains(&0) {
            return Err(TrainError::InvalidSpec("every blob needs at least one sample".into()));
        }
        if !(self.blob_stddev.is_finite() && self.blob_stddev >= 0.0) {
            return Err(TrainError::InvalidSpec("blob_stddev must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub blobs: Vec<usize>,
}

/// Samples every blob in order from a seeded generator.
pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<SyntheticData, TrainError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n: usize = spec.blob_counts.iter().sum();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut blobs = Vec::with_capacity(n);
    for (b, (&mean, &count)) in spec.blob_means.iter().zip(&spec.blob_counts).enumerate() {
        for _ in 0..count {
            for &m in &mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spec.blob_stddev * z);
            }
            labels.push(spec.class_of_blob[b]);
            blobs.push(b);
        }
    }
    Ok(SyntheticData {
        points: Matrix::from_vec(n, 2, data),
        labels,
        blobs,
    })
}

/// How per-sample losses are weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weighting {
    Uniform,
    Gfl(GflParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Full-batch when at least the sample count.
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub weighting: Weighting,
    /// Divide weights by their mean before training.
    #[serde(default)]
    pub renormalize_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            batch_size: usize::MAX,
            l2_penalty: 0.0,
            seed: 0,
            weighting: Weighting::Uniform,
            renormalize_weights: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(TrainError::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// Multinomial logistic regression, `logits = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `n_classes × n_features`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_classes, n_features),
            bias: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes())
            .map(|c| {
                self.bias[c]
                    + self
                        .weights
                        .row(c)
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        best
    }

    /// All parameters flattened as `[W row-major, b]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nw = self.weights.as_slice().len();
        self.weights.as_mut_slice().copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Weighted mean cross-entropy over `batch` plus `l2/2 · |W|²`, and its
/// gradient (same layout as [`LogisticModel::params`]).
pub fn loss_and_gradient(
    model: &LogisticModel,
    x: &Matrix,
    labels: &[usize],
    weights: &[f64],
    batch: &[usize],
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    let k = model.n_classes();
    let d = x.cols();
    let mut grad = vec![0.0; k * d + k];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &j in batch {
        let xj = x.row(j);
        let z = model.logits(xj);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let w = weights[j] * scale;
        loss += w * (lse - z[labels[j]]);
        for c in 0..k {
            let mut dz = (z[c] - lse).exp();
            if c == labels[j] {
                dz -= 1.0;
            }
            dz *= w;
            for (g, v) in grad[c * d..(c + 1) * d].iter_mut().zip(xj) {
                *g += dz * v;
            }
            grad[k * d + c] += dz;
        }
    }
    if l2_penalty > 0.0 {
        let w = model.weights.as_slice();
        loss += 0.5 * l2_penalty * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad[..k * d].iter_mut().zip(w) {
            *g += l2_penalty * v;
        }
    }
    (loss, grad)
}

/// Per-sample weights for training.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleWeights<'a> {
    Uniform,
    PerSample(&'a [f64]),
}

/// Trains with gradient descent, calling `observer(epoch, model, loss)` after every epoch.
pub fn train_classifier_observed(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    weights: SampleWeights<'_>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &LogisticModel, f64),
) -> Result<(LogisticModel, Vec<f64>), TrainError> {
    cfg.validate()?;
    let n = x.rows();
    let mut w = match weights {
        SampleWeights::Uniform => vec![1.0; n],
        SampleWeights::PerSample(w) => {
            if w.len() != n {
                return Err(TrainError::WeightMismatch {
                    weights: w.len(),
                    samples: n,
                });
            }
            w.to_vec()
        }
    };
    if cfg.renormalize_weights {
        let mean = w.iter().sum::<f64>() / n as f64;
        if mean > 0.0 {
            for v in &mut w {
                *v /= mean;
            }
        }
    }

    let mut model = LogisticModel::zeros(n_classes, x.cols());
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch_size = cfg.batch_size.min(n);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if batch_size < n {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(batch_size) {
            let (_, grad) = loss_and_gradient(&model, x, labels, &w, batch, cfg.l2_penalty);
            let mut p = model.params();
            for (pi, g) in p.iter_mut().zip(&grad) {
                *pi -= cfg.learning_rate * g;
            }
            model.set_params(&p);
        }
        let all: Vec<usize> = (0..n).collect();
        let (loss, _) = loss_and_gradient(&model, x, labels, &w, &all, cfg.l2_penalty);
        if !loss.is_finite() || !model.params().iter().all(|v| v.is_finite()) {
            return Err(TrainError::DivergedLoss { epoch });
        }
        trace.push(loss);
        observer(epoch, &model, loss);
    }
    Ok((model, trace))
}

pub fn train_classifier(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    weights: SampleWeights<'_>,
    cfg: &TrainConfig,
) -> Result<(LogisticModel, Vec<f64>), TrainError> {
    train_classifier_observed(x, labels, n_classes, weights, cfg, |_, _, _| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes without samples.
    pub per_class_recall: Vec<Option<f64>>,
    /// Fraction of each blob predicted as that blob's class.
    pub per_blob_recall: Vec<Option<f64>>,
}

pub fn evaluate(
    model: &LogisticModel,
    x: &Matrix,
    labels: &[usize],
    blobs: &[usize],
) -> Evaluation {
    let n_classes = model.n_classes();
    let n_blobs = blobs.iter().copied().max().map_or(0, |b| b + 1);
    let mut class_hits = vec![(0usize, 0usize); n_classes];
    let mut blob_hits = vec![(0usize, 0usize); n_blobs];
    let mut correct = 0;
    for (i, (&y, &b)) in labels.iter().zip(blobs).enumerate() {
        let hit = model.predict(x.row(i)) == y;
        correct += usize::from(hit);
        class_hits[y].0 += usize::from(hit);
        class_hits[y].1 += 1;
        blob_hits[b].0 += usize::from(hit);
        blob_hits[b].1 += 1;
    }
    let ratio = |(h, t): (usize, usize)| (t > 0).then(|| h as f64 / t as f64);
    Evaluation {
        accuracy: if labels.is_empty() {
            0.0
        } else {
            correct as f64 / labels.len() as f64
        },
        per_class_recall: class_hits.into_iter().map(ratio).collect(),
        per_blob_recall: blob_hits.into_iter().map(ratio).collect(),
    }
}

/// Settings for the uniform-vs-weighted comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityDemoConfig {
    pub dataset: SyntheticDatasetSpec,
    pub train: TrainConfig,
    pub dbscan: DbscanParams,
    pub noise_policy: NoisePolicy,
    pub gfl: GflParams,
    /// Blob whose recall decides the verdict.
    pub rare_blob: usize,
}

impl EquityDemoConfig {
    pub fn imbalanced_pair(seed: u64) -> Self {
        Self {
            dataset: SyntheticDatasetSpec::imbalanced_pair(seed),
            // Long enough for both arms to reach the convex optimum, so the
            // comparison is not decided by the smaller mean weight slowing
            // the weighted arm down.
            train: TrainConfig {
                seed,
                learning_rate: 2.0,
                epochs: 1000,
                ..TrainConfig::default()
            },
            dbscan: DbscanParams {
                eps: 0.3,
                min_samples: 8,
            },
            noise_policy: NoisePolicy::Singleton,
            gfl: GflParams {
                eta: 1.0,
                gamma: 5.0,
            },
            rare_blob: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub rare_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub epochs: Vec<EpochMetrics>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub uniform: ArmResult,
    pub weighted: ArmResult,
    pub n_clusters: usize,
    pub mean_weight: f64,
    pub rare_mean_weight: f64,
    /// Weighted rare-blob recall is at least the uniform one.
    pub weighted_not_worse: bool,
}

/// Generates the data, derives GFL weights from DBSCAN on the raw points,
/// and trains both arms with identical seeds.
pub fn run_equity_demo(cfg: &EquityDemoConfig) -> Result<DemoOutcome, TrainError> {
    let data = generate_synthetic(&cfg.dataset)?;
    if cfg.rare_blob >= cfg.dataset.n_blobs() {
        return Err(TrainError::InvalidSpec(format!(
            "rare_blob {} out of range",
            cfg.rare_blob
        )));
    }
    let assignment = dbscan(&data.points, &cfg.dbscan)?;
    let bank = scaled_likelihoods(&assignment, cfg.noise_policy)?;
    let weights = bank
        .sample_likelihood
        .iter()
        .map(|&p| gfl_weight(p, &cfg.gfl))
        .collect::<Result<Vec<_>, _>>()?;

    let n_classes = cfg.dataset.n_classes();
    let run_arm = |weighting: Weighting, w: SampleWeights<'_>| -> Result<ArmResult, TrainError> {
        let train = TrainConfig {
            weighting,
            ..cfg.train.clone()
        };
        let mut epochs = Vec::with_capacity(train.epochs);
        let (model, _) = train_classifier_observed(
            &data.points,
            &data.labels,
            n_classes,
            w,
            &train,
            |epoch, model, loss| {
                let e = evaluate(model, &data.points, &data.labels, &data.blobs);
                epochs.push(EpochMetrics {
                    epoch,
                    loss,
                    accuracy: e.accuracy,
                    rare_recall: e.per_blob_recall[cfg.rare_blob].unwrap_or(0.0),
                });
            },
        )?;
        Ok(ArmResult {
            epochs,
            evaluation: evaluate(&model, &data.points, &data.labels, &data.blobs),
        })
    };

    let uniform = run_arm(Weighting::Uniform, SampleWeights::Uniform)?;
    let weighted = run_arm(Weighting::Gfl(cfg.gfl), SampleWeights::PerSample(&weights))?;

    let rare: Vec<f64> = data
        .blobs
        .iter()
        .zip(&weights)
        .filter(|(&b, _)| b == cfg.rare_blob)
        .map(|(_, &w)| w)
        .collect();
    let recall = |a: &ArmResult| a.evaluation.per_blob_recall[cfg.rare_blob].unwrap_or(0.0);
    Ok(DemoOutcome {
        weighted_not_worse: recall(&weighted) >= recall(&uniform),
        n_clusters: assignment.n_clusters(),
        mean_weight: weights.iter().sum::<f64>() / weights.len() as f64,
        rare_mean_weight: rare.iter().sum::<f64>() / rare.len() as f64,
        uniform,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stddev_gives_means() {
        let spec = SyntheticDatasetSpec {
            blob_means: vec![[1.5, -2.0], [3.0, 4.0]],
            blob_stddev: 0.0,
            blob_counts: vec![3, 2],
            class_of_blob: vec![0, 1],
            seed: 7,
        };
        let d = generate_synthetic(&spec).unwrap();
        for i in 0..5 {
            let expected = if i < 3 { [1.5, -2.0] } else { [3.0, 4.0] };
            assert_eq!(d.points.row(i), &expected);
        }
    }

    #[test]
    fn counts_and_labels() {
        let spec = SyntheticDatasetSpec {
            blob_means: vec![[0.0, 0.0], [5.0, 5.0]],
            blob_stddev: 1.0,
            blob_counts: vec![10, 10],
            class_of_blob: vec![0, 1],
            seed: 1,
        };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.points.rows(), 20);
        assert_eq!(d.labels.iter().filter(|&&l| l == 0).count(), 10);
        assert_eq!(d.labels.iter().filter(|&&l| l == 1).count(), 10);
    }

    #[test]
    fn blob_mean_within_clt_bound() {
        let spec = SyntheticDatasetSpec {
            blob_means: vec![[3.0, -1.0]],
            blob_stddev: 2.0,
            blob_counts: vec![10_000],
            class_of_blob: vec![0],
            seed: 42,
        };
        let d = generate_synthetic(&spec).unwrap();
        let bound = 5.0 * 2.0 / (10_000f64).sqrt();
        for (axis, &center) in [3.0, -1.0].iter().enumerate() {
            let mean = (0..10_000).map(|i| d.points.get(i, axis)).sum::<f64>() / 10_000.0;
            assert!((mean - center).abs() < bound, "axis {axis}: {mean}");
        }
    }

    #[test]
    fn dataset_description_validation() {
        let mut spec = SyntheticDatasetSpec::imbalanced_pair(0);
        spec.blob_counts = vec![1];
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = SyntheticDatasetSpec::imbalanced_pair(0);
        spec.blob_counts[1] = 0;
        assert!(generate_synthetic(&spec).is_err());
    }

    fn separable() -> SyntheticData {
        generate_synthetic(&SyntheticDatasetSpec {
            blob_means: vec![[-5.0, 0.0], [5.0, 0.0]],
            blob_stddev: 0.5,
            blob_counts: vec![40, 40],
            class_of_blob: vec![0, 1],
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn zero_weights_never_move() {
        let d = separable();
        let w = vec![0.0; 80];
        let (model, trace) = train_classifier(
            &d.points,
            &d.labels,
            2,
            SampleWeights::PerSample(&w),
            &TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(model, LogisticModel::zeros(2, 2));
        assert!(trace.iter().all(|&l| l == trace[0]));
    }

    #[test]
    fn separable_data_is_learned() {
        let d = separable();
        let (model, trace) =
            train_classifier(&d.points, &d.labels, 2, SampleWeights::Uniform, &TrainConfig::default())
                .unwrap();
        let e = evaluate(&model, &d.points, &d.labels, &d.blobs);
        assert_eq!(e.per_blob_recall, vec![Some(1.0), Some(1.0)]);
        assert_eq!(e.accuracy, 1.0);
        assert!(trace.last().unwrap() < &trace[0]);
    }

    #[test]
    fn majority_predictor_misses_rare_blob() {
        let d = generate_synthetic(&SyntheticDatasetSpec::imbalanced_pair(0)).unwrap();
        let mut model = LogisticModel::zeros(2, 2);
        model.bias = vec![1.0, 0.0];
        let e = evaluate(&model, &d.points, &d.labels, &d.blobs);
        assert_eq!(e.per_blob_recall[1], Some(0.0));
        assert_eq!(e.per_blob_recall[0], Some(1.0));
        assert_eq!(e.accuracy, 0.95);
    }

    #[test]
    fn weight_length_checked() {
        let d = separable();
        let w = vec![1.0; 3];
        assert!(matches!(
            train_classifier(&d.points, &d.labels, 2, SampleWeights::PerSample(&w), &TrainConfig::default()),
            Err(TrainError::WeightMismatch { weights: 3, samples: 80 })
        ));
    }

    #[test]
    fn divergence_detected() {
        let d = separable();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            l2_penalty: 1.0,
            epochs: 10,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_classifier(&d.points, &d.labels, 2, SampleWeights::Uniform, &cfg),
            Err(TrainError::DivergedLoss { .. })
        ));
    }

    #[test]
    fn renormalization_rescales_to_unit_mean() {
        let d = separable();
        let half = vec![0.5; 80];
        let cfg = TrainConfig {
            epochs: 3,
            renormalize_weights: true,
            ..TrainConfig::default()
        };
        let a = train_classifier(&d.points, &d.labels, 2, SampleWeights::PerSample(&half), &cfg).unwrap();
        let b = train_classifier(&d.points, &d.labels, 2, SampleWeights::Uniform, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
