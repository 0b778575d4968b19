//! PCA and exact t-SNE on three Gaussian blobs in 20 dimensions.
//!
//! `cargo run --release --example projection`

use dataset_equity::metrics::nearest_neighbor_purity;
use dataset_equity::projection::{pca_project, tsne_embed_matrix};
use dataset_equity::{Matrix, TsneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dim = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (blob, count) in [120usize, 60, 20].into_iter().enumerate() {
        for _ in 0..count {
            let row: Vec<f64> = (0..dim)
                .map(|k| noise.sample(&mut rng) + if k == blob { 8.0 } else { 0.0 })
                .collect();
            rows.push(row);
            labels.push(blob);
        }
    }
    let x = Matrix::from_rows(&rows);

    let pca = pca_project(&x, 3)?;
    println!("PCA explained variance: {:?}", pca.explained_variance);

    let cfg = TsneConfig { perplexity: 20.0, ..TsneConfig::default() };
    let res = tsne_embed_matrix(&x, &cfg)?;
    println!(
        "t-SNE KL {:.4} -> {:.4} over {} iterations, {} unconverged rows",
        res.kl_trace[0],
        res.kl_trace[res.kl_trace.len() - 1],
        cfg.total_iters,
        res.unconverged_rows
    );
    println!("1-NN blob purity in 3-D: {:.3}", nearest_neighbor_purity(&res.coords, &labels));
    Ok(())
}
