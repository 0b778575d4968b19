use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterParams;
use crate::gfl::GflParams;
use crate::likelihood::{HistogramBin, LikelihoodBank, NoisePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WeightStats {
    pub fn of(weights: &[f64]) -> Self {
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = weights.iter().sum::<f64>() / weights.len().max(1) as f64;
        Self { min, max, mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub initial_kl: f64,
    pub final_kl: f64,
    pub unconverged_rows: usize,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub n_samples: usize,
    pub n_clusters: usize,
    pub noise_count: usize,
    pub noise_fraction: f64,
    pub cluster_sizes: Vec<usize>,
    /// Smallest and largest cluster likelihood. The largest is 1 whenever a cluster exists.
    pub min_likelihood: f64,
    pub max_likelihood: f64,
    pub weights: WeightStats,
    pub clustering: ClusterParams,
    pub noise_policy: NoisePolicy,
    pub gfl: GflParams,
    pub projection: ProjectionSummary,
}

impl RunSummary {
    pub fn build(
        config_hash: String,
        bank: &LikelihoodBank,
        weights: &[f64],
        clustering: ClusterParams,
        gfl: GflParams,
        projection: ProjectionSummary,
    ) -> Self {
        let n = bank.n_total;
        Self {
            config_hash,
            n_samples: n,
            n_clusters: bank.n_clusters(),
            noise_count: bank.noise_count(),
            noise_fraction: bank.noise_count() as f64 / n.max(1) as f64,
            cluster_sizes: bank.cluster_sizes.values().copied().collect(),
            min_likelihood: bank
                .cluster_likelihood
                .values()
                .copied()
                .fold(f64::INFINITY, f64::min),
            max_likelihood: bank
                .cluster_likelihood
                .values()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            weights: WeightStats::of(weights),
            clustering,
            noise_policy: bank.noise_policy,
            gfl,
            projection,
        }
    }
}

/// A bar chart of cluster counts per likelihood bin.
pub fn histogram_svg(bins: &[HistogramBin]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let max_count = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
    let bar_w = (W - 2.0 * PAD) / bins.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = H - PAD,
        x2 = W - PAD
    );
    for (k, b) in bins.iter().enumerate() {
        let h = (H - 2.0 * PAD) * b.count as f64 / max_count;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4878a8"><title>({}, {}]: {}</title></rect>"##,
            PAD + k as f64 * bar_w,
            H - PAD - h,
            bar_w,
            h,
            b.bin_low,
            b.bin_high,
            b.count
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="12">scaled likelihood</text>"#,
        x = W / 2.0,
        y = H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{y}" font-size="12" transform="rotate(-90 12 {y})">clusters</text>"#,
        y = H / 2.0
    );
    s.push_str("</svg>\n");
    s
}
