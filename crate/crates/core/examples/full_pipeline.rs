//! Runs every pipeline stage on a generated four-blob dataset, then reruns to
//! show that every stage comes from the cache.
//!
//! `cargo run --release --example full_pipeline [output_dir]`

use dataset_equity::embedding_io::write_embeddings;
use dataset_equity::pipeline::{run_pipeline, PipelineConfig};
use dataset_equity::clustering::ClusterSelection;
use dataset_equity::{ClusterParams, EmbeddingMatrix, HdbscanParams, TsneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("dataset-equity-pipeline"), Into::into);
    std::fs::create_dir_all(&out)?;

    let dim = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 1.0)?;
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for (blob, count) in [200usize, 100, 40, 10].into_iter().enumerate() {
        for i in 0..count {
            for k in 0..dim {
                let shift = if k == blob { 10.0 } else { 0.0 };
                data.push((noise.sample(&mut rng) + shift) as f32);
            }
            ids.push(format!("blob{blob}_{i:03}"));
        }
    }
    let input = out.join("input.dseq");
    write_embeddings(&EmbeddingMatrix::from_ids(ids, dim, data)?, &input)?;

    let mut cfg = PipelineConfig::new(
        input,
        out.join("run"),
        ClusterParams::Hdbscan(HdbscanParams {
            min_cluster_size: 8,
            min_samples: 5,
            selection: ClusterSelection::ExcessOfMass,
        }),
    );
    cfg.tsne = TsneConfig { perplexity: 20.0, ..TsneConfig::default() };

    let first = run_pipeline(&cfg)?;
    println!("first run executed {:?}", first.executed);
    let second = run_pipeline(&cfg)?;
    println!("second run executed {:?}, cached {:?}", second.executed, second.cached);

    let summary = second.summary.expect("report stage ran");
    println!(
        "{} samples, {} clusters {:?}, noise fraction {:.3}",
        summary.n_samples, summary.n_clusters, summary.cluster_sizes, summary.noise_fraction
    );
    println!(
        "weights: min {:.4}, mean {:.4}, max {:.4}",
        summary.weights.min, summary.weights.mean, summary.weights.max
    );
    println!("artifacts in {}", second.output_dir.display());
    Ok(())
}
