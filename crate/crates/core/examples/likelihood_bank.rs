//! Scaled likelihoods and their histogram for a hand-made cluster assignment,
//! under each noise policy.
//!
//! `cargo run --example likelihood_bank`

use dataset_equity::likelihood::{likelihood_histogram, scaled_likelihoods};
use dataset_equity::{ClusterAssignment, NoisePolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // cluster sizes 40, 20, 10 and 2, plus 3 noise samples
    let mut raw = Vec::new();
    for (label, size) in [(0i64, 40), (1, 20), (2, 10), (3, 2), (-1, 3)] {
        raw.extend(std::iter::repeat_n(label, size));
    }
    let a = ClusterAssignment::from_raw_labels(&raw, "manual", serde_json::Value::Null);

    for policy in [NoisePolicy::Singleton, NoisePolicy::MinCluster, NoisePolicy::Unit] {
        let bank = scaled_likelihoods(&a, policy)?;
        println!(
            "{policy:?}: cluster likelihoods {:?}, noise likelihood {}",
            bank.cluster_likelihood.values().collect::<Vec<_>>(),
            bank.sample_likelihood[raw.len() - 1]
        );
    }
    let bank = scaled_likelihoods(&a, NoisePolicy::Singleton)?;
    println!("histogram of cluster likelihoods:");
    for b in likelihood_histogram(&bank, 4)? {
        println!("  ({:.2}, {:.2}]  {}", b.bin_low, b.bin_high, "#".repeat(b.count));
    }
    Ok(())
}
