//! Uniform vs GFL-weighted training on an imbalanced two-blob problem.
//!
//! `cargo run --release --example equity_demo [n_seeds]`

use dataset_equity::trainer::{run_equity_demo, EquityDemoConfig};

fn main() {
    let n_seeds: u64 = std::env::args().nth(1).map_or(10, |s| s.parse().expect("seed count"));
    let mut wins = 0;
    println!("seed  clusters  mean_w  rare_w  uniform_recall  weighted_recall");
    for seed in 0..n_seeds {
        let out = run_equity_demo(&EquityDemoConfig::imbalanced_pair(seed)).expect("demo");
        let rare = |e: &dataset_equity::trainer::Evaluation| e.per_blob_recall[1].unwrap_or(0.0);
        println!(
            "{seed:>4}  {:>8}  {:>6.3}  {:>6.3}  {:>14.3}  {:>15.3}",
            out.n_clusters,
            out.mean_weight,
            out.rare_mean_weight,
            rare(&out.uniform.evaluation),
            rare(&out.weighted.evaluation)
        );
        wins += out.weighted_not_worse as u32;
    }
    println!("weighted rare recall >= uniform in {wins}/{n_seeds} seeds");
}
