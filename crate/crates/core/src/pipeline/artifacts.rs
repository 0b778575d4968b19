//! Row formats of the per-stage output files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clustering::NOISE;
use crate::likelihood::{LikelihoodBank, NoisePolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub id: String,
    pub cluster: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRow {
    pub id: String,
    pub cluster: i64,
    pub likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub id: String,
    pub likelihood: f64,
    pub weight: f64,
}

/// Projection side data stored next to the projected coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInfo {
    pub kl_trace: Vec<f64>,
    pub pca_explained_variance: Vec<f64>,
    pub unconverged_rows: usize,
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("row serializes");
        out.push(b'\n');
    }
    out
}

/// Parses JSON-lines rows. `name` is only used in error messages.
pub fn parse_jsonl<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<Vec<T>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("{name}: {e}"))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| format!("{name} line {}: {e}", i + 1)))
        .collect()
}

pub fn weights_csv_bytes(rows: &[WeightRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("csv row");
    }
    w.flush().expect("in-memory flush");
    w.into_inner().expect("in-memory writer")
}

pub fn histogram_csv(bins: &[crate::likelihood::HistogramBin]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in bins {
        w.serialize(b).expect("csv row");
    }
    w.flush().expect("in-memory flush");
    w.into_inner().expect("in-memory writer")
}

/// Rebuilds a likelihood bank from stored per-sample rows.
pub fn bank_from_rows(rows: &[LikelihoodRow], noise_policy: NoisePolicy) -> Result<LikelihoodBank, String> {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cluster_likelihood: BTreeMap<usize, f64> = BTreeMap::new();
    for r in rows {
        if r.cluster == NOISE {
            continue;
        }
        if r.cluster < 0 {
            return Err(format!("sample {} has invalid cluster {}", r.id, r.cluster));
        }
        let c = r.cluster as usize;
        *sizes.entry(c).or_default() += 1;
        match cluster_likelihood.insert(c, r.likelihood) {
            Some(prev) if prev != r.likelihood => {
                return Err(format!("cluster {c} has inconsistent likelihoods"));
            }
            _ => {}
        }
    }
    Ok(LikelihoodBank {
        cluster_sizes: sizes,
        n_total: rows.len(),
        cluster_likelihood,
        sample_likelihood: rows.iter().map(|r| r.likelihood).collect(),
        noise_policy,
    })
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}
