//! HDBSCAN on blobs of different density, with the condensed tree summary.
//!
//! `cargo run --example hdbscan`

use dataset_equity::clustering::{hdbscan, ClusterSelection};
use dataset_equity::{HdbscanParams, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    for (center, spread, count) in [([0.0, 0.0], 0.3, 150), ([6.0, 0.0], 1.0, 80), ([0.0, 7.0], 0.6, 25)] {
        let d = Normal::new(0.0, spread)?;
        for _ in 0..count {
            rows.push(vec![center[0] + d.sample(&mut rng), center[1] + d.sample(&mut rng)]);
        }
    }
    let x = Matrix::from_rows(&rows);
    let params = HdbscanParams { min_cluster_size: 10, min_samples: 5, selection: ClusterSelection::ExcessOfMass };
    let (a, tree) = hdbscan(&x, &params)?;
    println!("{} clusters, {} noise points, sizes {:?}", a.n_clusters(), a.noise_count(), a.cluster_sizes());
    println!("condensed tree:");
    for (id, c) in tree.clusters.iter().enumerate() {
        println!(
            "  #{id:<3} parent {:>4}  size {:>4}  birth lambda {:>8.4}  stability {:>9.3}{}",
            c.parent.map_or("-".to_string(), |p| p.to_string()),
            c.size,
            c.birth_lambda,
            c.stability,
            if c.selected { "  selected" } else { "" }
        );
    }
    Ok(())
}
