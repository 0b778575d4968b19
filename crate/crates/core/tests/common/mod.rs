//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use dataset_equity::{EmbeddingMatrix, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

/// Isotropic Gaussian blobs. Returns the points and the blob index of each row.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    counts: &[usize],
    stddev: f64,
    seed: u64,
) -> (Matrix, Vec<usize>) {
    let dim = centers[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, stddev).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (b, (c, &n)) in centers.iter().zip(counts).enumerate() {
        for _ in 0..n {
            rows.push((0..dim).map(|j| c[j] + noise.sample(&mut rng)).collect::<Vec<_>>());
            labels.push(b);
        }
    }
    (Matrix::from_rows(&rows), labels)
}

/// Blob centers drawn uniformly in `[-spread, spread]^dim`.
pub fn random_centers(k: usize, dim: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-spread..spread)).collect())
        .collect()
}

pub fn with_ids(m: &Matrix, prefix: &str) -> EmbeddingMatrix {
    EmbeddingMatrix::from_ids(
        (0..m.rows()).map(|i| format!("{prefix}{i:04}")),
        m.cols(),
        m.as_slice().iter().map(|&v| v as f32).collect(),
    )
    .unwrap()
}

/// 60 samples in 8-D: a blob of 45 and a blob of 15, far apart.
pub fn two_blob_60() -> EmbeddingMatrix {
    let mut far = vec![0.0; 8];
    far[0] = 12.0;
    let (m, _) = gaussian_blobs(&[vec![0.0; 8], far], &[45, 15], 0.5, 60);
    with_ids(&m, "toy")
}

/// 500 samples in 16-D from four blobs of sizes 250, 150, 75 and 25.
pub fn toy_500() -> EmbeddingMatrix {
    let centers = random_centers(4, 16, 6.0, 500);
    let (m, _) = gaussian_blobs(&centers, &[250, 150, 75, 25], 1.0, 501);
    with_ids(&m, "obj")
}
