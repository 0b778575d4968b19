//! DBSCAN over an eps sweep on two blobs plus scattered outliers.
//!
//! `cargo run --example dbscan`

use dataset_equity::clustering::dbscan;
use dataset_equity::{DbscanParams, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.4)?;
    let mut rows = Vec::new();
    for (cx, count) in [(0.0, 80), (5.0, 30)] {
        for _ in 0..count {
            rows.push(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)]);
        }
    }
    for _ in 0..10 {
        rows.push((0..3).map(|_| rng.random_range(-15.0..15.0)).collect());
    }
    let x = Matrix::from_rows(&rows);

    println!("  eps  clusters  noise  sizes");
    for eps in [0.2, 0.4, 0.8, 1.6, 3.2, 6.4] {
        let a = dbscan(&x, &DbscanParams { eps, min_samples: 5 })?;
        println!("{eps:>5}  {:>8}  {:>5}  {:?}", a.n_clusters(), a.noise_count(), a.cluster_sizes());
    }
    Ok(())
}
