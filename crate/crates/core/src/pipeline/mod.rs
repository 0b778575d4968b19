//! End-to-end orchestration: ingest, project, cluster, likelihoods, weights, report.
//!
//! Each stage writes its outputs into the run's output directory together
//! with a record under `stages/<stage>.json`. A record holds the stage
//! parameters, the SHA-256 of every input and output file, and a cache key
//! derived from both. A stage is reused only when its parameters match the
//! current config and every hash still matches the files on disk, so a
//! clustering sweep reuses the projection while a changed perplexity
//! invalidates everything downstream of it.
//!
//! No record or output contains timestamps or absolute paths, so identical
//! configs and inputs give byte-identical output directories.

mod artifacts;
mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use artifacts::{bank_from_rows, histogram_csv, ClusterRow, LikelihoodRow, ProjectionInfo, WeightRow};
pub use config::{InputConfig, PipelineConfig, ReportConfig, SCHEMA_VERSION};
pub use report::{histogram_svg, ProjectionSummary, RunSummary, WeightStats};

use crate::clustering::{ClusterAssignment, ClusterError, ClusterParams};
use crate::embedding_io::{decode_dseq, encode_dseq, read_embeddings, EmbeddingMatrix, FormatError};
use crate::gfl::{weight_table, GflError};
use crate::likelihood::{likelihood_histogram, scaled_likelihoods, LikelihoodError};
use crate::projection::{tsne_embed, ProjectionError};
use artifacts::{parse_jsonl, tmp_path, write_atomic};
use config::sha256_hex;

pub const EMBEDDINGS_FILE: &str = "embeddings.dseq";
pub const PROJECTION_FILE: &str = "projection.dseq";
pub const PROJECTION_INFO_FILE: &str = "projection.json";
pub const CLUSTERS_FILE: &str = "clusters.jsonl";
pub const CONDENSED_TREE_FILE: &str = "condensed_tree.json";
pub const LIKELIHOODS_FILE: &str = "likelihoods.jsonl";
pub const WEIGHTS_FILE: &str = "weights.jsonl";
pub const WEIGHTS_CSV_FILE: &str = "weights.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const HISTOGRAM_SVG_FILE: &str = "histogram.svg";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STAGES_DIR: &str = "stages";
pub const LOCK_FILE: &str = ".dataset-equity.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Project,
    Cluster,
    Likelihoods,
    Weights,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Project,
        Stage::Cluster,
        Stage::Likelihoods,
        Stage::Weights,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Project => "project",
            Stage::Cluster => "cluster",
            Stage::Likelihoods => "likelihoods",
            Stage::Weights => "weights",
            Stage::Report => "report",
        }
    }

    /// Files this stage reads, each paired with the stage that writes it.
    pub fn inputs(self) -> &'static [(Stage, &'static str)] {
        match self {
            Stage::Ingest => &[],
            Stage::Project => &[(Stage::Ingest, EMBEDDINGS_FILE)],
            Stage::Cluster => &[(Stage::Project, PROJECTION_FILE)],
            Stage::Likelihoods => &[(Stage::Cluster, CLUSTERS_FILE)],
            Stage::Weights => &[(Stage::Likelihoods, LIKELIHOODS_FILE)],
            Stage::Report => &[
                (Stage::Project, PROJECTION_INFO_FILE),
                (Stage::Likelihoods, LIKELIHOODS_FILE),
                (Stage::Weights, WEIGHTS_FILE),
            ],
        }
    }

    /// Every stage that must have run before this one.
    pub fn ancestors(self) -> &'static [Stage] {
        let pos = Stage::ALL.iter().position(|&s| s == self).unwrap();
        &Stage::ALL[..pos]
    }

    fn record_file(self) -> String {
        format!("{STAGES_DIR}/{}.json", self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Failure inside a single stage.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Gfl(#[from] GflError),
    #[error("{0}")]
    Artifact(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("[{stage}] missing upstream artifact {} (run `{upstream}` first)", path.display())]
    MissingUpstreamArtifact {
        stage: Stage,
        upstream: Stage,
        path: PathBuf,
    },
    #[error("[{stage}] cached `{upstream}` artifacts do not match the config: {detail}")]
    ConfigMismatch {
        stage: Stage,
        upstream: Stage,
        detail: String,
    },
    #[error("output directory {} is locked by another run ({LOCK_FILE})", path.display())]
    Locked { path: PathBuf },
}

impl PipelineError {
    /// The stage the error is attributed to, when there is one.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::Stage { stage, .. }
            | Self::MissingUpstreamArtifact { stage, .. }
            | Self::ConfigMismatch { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Sidecar written after a stage completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub params: Value,
    /// SHA-256 over the parameters and the input hashes.
    pub cache_key: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// What a pipeline or stage invocation produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    /// Output file name to full path, for every file written by the stages that ran or were reused.
    pub files: BTreeMap<String, PathBuf>,
    pub executed: Vec<Stage>,
    pub cached: Vec<Stage>,
    /// Present once the report stage has been run.
    pub summary: Option<RunSummary>,
}

impl RunArtifacts {
    pub fn path(&self, name: &str) -> Option<&Path> {
        self.files.get(name).map(PathBuf::as_path)
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked { path: dir.to_path_buf() })
            }
            Err(source) => Err(PipelineError::Io { path, source }),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Runs all stages, reusing any whose record still matches the config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunArtifacts, PipelineError> {
    let ctx = Context::open(cfg)?;
    let _lock = LockGuard::acquire(&ctx.dir)?;
    let mut out = ctx.artifacts();
    for stage in Stage::ALL {
        match ctx.verify(stage, stage) {
            Ok(rec) => {
                out.cached.push(stage);
                ctx.collect(&rec, &mut out);
            }
            Err(_) => {
                let rec = ctx.execute(stage)?;
                out.executed.push(stage);
                ctx.collect(&rec, &mut out);
            }
        }
    }
    out.summary = Some(ctx.read_summary()?);
    Ok(out)
}

/// Runs one stage from the cached outputs of its ancestors.
///
/// Fails with [`PipelineError::MissingUpstreamArtifact`] when an ancestor has
/// not been run and with [`PipelineError::ConfigMismatch`] when an ancestor's
/// recorded parameters or files no longer match `cfg`.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<RunArtifacts, PipelineError> {
    let ctx = Context::open(cfg)?;
    let _lock = LockGuard::acquire(&ctx.dir)?;
    let mut out = ctx.artifacts();
    for &a in stage.ancestors() {
        let rec = ctx.verify(stage, a)?;
        ctx.collect(&rec, &mut out);
    }
    let rec = ctx.execute(stage)?;
    out.executed.push(stage);
    ctx.collect(&rec, &mut out);
    if stage == Stage::Report {
        out.summary = Some(ctx.read_summary()?);
    }
    Ok(out)
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
}

impl<'a> Context<'a> {
    fn open(cfg: &'a PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dir = cfg.output_dir.clone();
        for d in [dir.clone(), dir.join(STAGES_DIR)] {
            std::fs::create_dir_all(&d).map_err(|source| PipelineError::Io { path: d, source })?;
        }
        Ok(Self { cfg, dir })
    }

    fn artifacts(&self) -> RunArtifacts {
        RunArtifacts {
            output_dir: self.dir.clone(),
            files: BTreeMap::new(),
            executed: Vec::new(),
            cached: Vec::new(),
            summary: None,
        }
    }

    fn collect(&self, rec: &StageRecord, out: &mut RunArtifacts) {
        for name in rec.outputs.keys() {
            out.files.insert(name.clone(), self.dir.join(name));
        }
    }

    fn read_summary(&self) -> Result<RunSummary, PipelineError> {
        let path = self.dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Stage {
            stage: Stage::Report,
            source: StageError::Artifact(format!("{}: {e}", path.display())),
        })
    }

    /// Parameters a stage's outputs depend on, besides its input files.
    fn params(&self, stage: Stage) -> Result<Value, PipelineError> {
        let cfg = self.cfg;
        Ok(match stage {
            Stage::Ingest => {
                let bytes = std::fs::read(&cfg.input.path).map_err(|e| PipelineError::Stage {
                    stage,
                    source: StageError::Format(FormatError::Io(e)),
                })?;
                json!({ "format": cfg.input.format, "input_sha256": sha256_hex(&bytes) })
            }
            Stage::Project => serde_json::to_value(cfg.effective_tsne()).expect("json"),
            Stage::Cluster => serde_json::to_value(cfg.cluster).expect("json"),
            Stage::Likelihoods => json!({ "noise_policy": cfg.noise_policy }),
            Stage::Weights => serde_json::to_value(cfg.gfl).expect("json"),
            Stage::Report => json!({
                "histogram_bins": cfg.report.histogram_bins,
                "emit_svg": cfg.report.emit_svg,
                "config_hash": cfg.config_hash(),
            }),
        })
    }

    fn hash_file(&self, name: &str) -> Option<String> {
        std::fs::read(self.dir.join(name)).ok().map(|b| sha256_hex(&b))
    }

    fn read_record(&self, stage: Stage) -> Option<StageRecord> {
        let text = std::fs::read_to_string(self.dir.join(stage.record_file())).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Checks that `target`'s record matches the config and the files on disk.
    /// Errors are attributed to `requester`.
    fn verify(&self, requester: Stage, target: Stage) -> Result<StageRecord, PipelineError> {
        let missing = |name: &str| PipelineError::MissingUpstreamArtifact {
            stage: requester,
            upstream: target,
            path: self.dir.join(name),
        };
        let mismatch = |detail: String| PipelineError::ConfigMismatch {
            stage: requester,
            upstream: target,
            detail,
        };
        let rec = self
            .read_record(target)
            .ok_or_else(|| missing(&target.record_file()))?;
        for (name, hash) in &rec.outputs {
            match self.hash_file(name) {
                None => return Err(missing(name)),
                Some(h) if &h != hash => {
                    return Err(mismatch(format!("{name} was modified after it was written")))
                }
                Some(_) => {}
            }
        }
        let want = self.params(target)?;
        if rec.params != want {
            return Err(mismatch(describe_diff(&rec.params, &want)));
        }
        for (_, name) in target.inputs() {
            let current = self.hash_file(name);
            if rec.inputs.get(*name) != current.as_ref() {
                return Err(mismatch(format!("{name} changed since `{target}` last ran")));
            }
        }
        Ok(rec)
    }

    fn read_input(&self, stage: Stage, name: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.dir.join(name);
        std::fs::read(&path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                let upstream = stage
                    .inputs()
                    .iter()
                    .find(|(_, n)| *n == name)
                    .map_or(stage, |(s, _)| *s);
                PipelineError::MissingUpstreamArtifact { stage, upstream, path }
            } else {
                PipelineError::Io { path, source }
            }
        })
    }

    fn read_rows<T: serde::de::DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<Vec<T>, PipelineError> {
        parse_jsonl(name, &self.read_input(stage, name)?).map_err(|msg| PipelineError::Stage {
            stage,
            source: StageError::Artifact(msg),
        })
    }

    /// Runs a stage and writes its outputs and record. On failure the stage's
    /// previous outputs, its record and any temp files are removed.
    fn execute(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        self.remove_stage_files(stage);
        let result = self.produce(stage).and_then(|files| self.commit(stage, files));
        if result.is_err() {
            self.remove_stage_files(stage);
        }
        result
    }

    fn remove_stage_files(&self, stage: Stage) {
        let record = self.dir.join(stage.record_file());
        let _ = std::fs::remove_file(&record);
        let _ = std::fs::remove_file(tmp_path(&record));
        for name in stage_output_names(stage) {
            let p = self.dir.join(name);
            let _ = std::fs::remove_file(&p);
            let _ = std::fs::remove_file(tmp_path(&p));
        }
    }

    fn commit(&self, stage: Stage, files: Vec<(&'static str, Vec<u8>)>) -> Result<StageRecord, PipelineError> {
        let params = self.params(stage)?;
        let mut inputs = BTreeMap::new();
        for (_, name) in stage.inputs() {
            if let Some(h) = self.hash_file(name) {
                inputs.insert(name.to_string(), h);
            }
        }
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &files {
            let path = self.dir.join(name);
            write_atomic(&path, bytes).map_err(|source| PipelineError::Io { path, source })?;
            outputs.insert(name.to_string(), sha256_hex(bytes));
        }
        let key_material = serde_json::to_string(&json!({ "params": params, "inputs": inputs })).expect("json");
        let rec = StageRecord {
            stage,
            params,
            cache_key: sha256_hex(key_material.as_bytes()),
            inputs,
            outputs,
        };
        let path = self.dir.join(stage.record_file());
        write_atomic(&path, &pretty(&rec)).map_err(|source| PipelineError::Io { path, source })?;
        Ok(rec)
    }

    fn produce(&self, stage: Stage) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
        let cfg = self.cfg;
        let tag = |source: StageError| PipelineError::Stage { stage, source };
        let artifact = |msg: String| tag(StageError::Artifact(msg));
        match stage {
            Stage::Ingest => {
                let m = read_embeddings(&cfg.input.path, cfg.input.format).map_err(|e| tag(e.into()))?;
                Ok(vec![(EMBEDDINGS_FILE, encode_dseq(&m).map_err(|e| tag(e.into()))?)])
            }
            Stage::Project => {
                let emb = decode_dseq(&self.read_input(stage, EMBEDDINGS_FILE)?).map_err(|e| tag(e.into()))?;
                let res = tsne_embed(&emb, &cfg.effective_tsne()).map_err(|e| tag(e.into()))?;
                let proj = EmbeddingMatrix::from_matrix(emb.manifest().to_vec(), &res.coords)
                    .map_err(|e| tag(e.into()))?;
                let info = ProjectionInfo {
                    kl_trace: res.kl_trace,
                    pca_explained_variance: res.pca_explained_variance,
                    unconverged_rows: res.unconverged_rows,
                };
                Ok(vec![
                    (PROJECTION_FILE, encode_dseq(&proj).map_err(|e| tag(e.into()))?),
                    (PROJECTION_INFO_FILE, pretty(&info)),
                ])
            }
            Stage::Cluster => {
                let proj = decode_dseq(&self.read_input(stage, PROJECTION_FILE)?).map_err(|e| tag(e.into()))?;
                let (assignment, tree) = cfg.cluster.run(&proj.to_matrix()).map_err(|e| tag(e.into()))?;
                let rows: Vec<ClusterRow> = proj
                    .sample_ids()
                    .zip(assignment.labels())
                    .map(|(id, &cluster)| ClusterRow { id: id.to_string(), cluster })
                    .collect();
                let mut files = vec![(CLUSTERS_FILE, artifacts::jsonl_bytes(&rows))];
                if let Some(tree) = tree {
                    files.push((CONDENSED_TREE_FILE, pretty(&tree)));
                }
                Ok(files)
            }
            Stage::Likelihoods => {
                let rows: Vec<ClusterRow> = self.read_rows(stage, CLUSTERS_FILE)?;
                let labels = rows.iter().map(|r| r.cluster).collect();
                let assignment = ClusterAssignment::new(labels, method_tag(&cfg.cluster), Value::Null)
                    .map_err(|e| tag(e.into()))?;
                let bank = scaled_likelihoods(&assignment, cfg.noise_policy).map_err(|e| tag(e.into()))?;
                let out: Vec<LikelihoodRow> = rows
                    .into_iter()
                    .zip(&bank.sample_likelihood)
                    .map(|(r, &likelihood)| LikelihoodRow { id: r.id, cluster: r.cluster, likelihood })
                    .collect();
                Ok(vec![(LIKELIHOODS_FILE, artifacts::jsonl_bytes(&out))])
            }
            Stage::Weights => {
                let rows: Vec<LikelihoodRow> = self.read_rows(stage, LIKELIHOODS_FILE)?;
                let bank = bank_from_rows(&rows, cfg.noise_policy).map_err(artifact)?;
                let ids: Vec<String> = rows.into_iter().map(|r| r.id).collect();
                let table = weight_table(&ids, &bank, &cfg.gfl).map_err(|e| tag(e.into()))?;
                let out: Vec<WeightRow> = table
                    .sample_ids
                    .iter()
                    .zip(table.likelihoods.iter().zip(&table.weights))
                    .map(|(id, (&likelihood, &weight))| WeightRow { id: id.clone(), likelihood, weight })
                    .collect();
                Ok(vec![
                    (WEIGHTS_FILE, artifacts::jsonl_bytes(&out)),
                    (WEIGHTS_CSV_FILE, artifacts::weights_csv_bytes(&out)),
                ])
            }
            Stage::Report => {
                let info: ProjectionInfo =
                    serde_json::from_slice(&self.read_input(stage, PROJECTION_INFO_FILE)?)
                        .map_err(|e| artifact(format!("{PROJECTION_INFO_FILE}: {e}")))?;
                let rows: Vec<LikelihoodRow> = self.read_rows(stage, LIKELIHOODS_FILE)?;
                let weights: Vec<WeightRow> = self.read_rows(stage, WEIGHTS_FILE)?;
                if weights.len() != rows.len() {
                    return Err(artifact(format!(
                        "{WEIGHTS_FILE} has {} rows but {LIKELIHOODS_FILE} has {}",
                        weights.len(),
                        rows.len()
                    )));
                }
                let bank = bank_from_rows(&rows, cfg.noise_policy).map_err(artifact)?;
                let bins = likelihood_histogram(&bank, cfg.report.histogram_bins).map_err(|e| tag(e.into()))?;
                let w: Vec<f64> = weights.iter().map(|r| r.weight).collect();
                let summary = RunSummary::build(
                    cfg.config_hash(),
                    &bank,
                    &w,
                    cfg.cluster,
                    cfg.gfl,
                    ProjectionSummary {
                        initial_kl: info.kl_trace.first().copied().unwrap_or(f64::NAN),
                        final_kl: info.kl_trace.last().copied().unwrap_or(f64::NAN),
                        unconverged_rows: info.unconverged_rows,
                    },
                );
                let mut files = vec![
                    (HISTOGRAM_FILE, artifacts::histogram_csv(&bins)),
                    (SUMMARY_FILE, pretty(&summary)),
                ];
                if cfg.report.emit_svg {
                    files.push((HISTOGRAM_SVG_FILE, histogram_svg(&bins).into_bytes()));
                }
                Ok(files)
            }
        }
    }
}

/// Every file a stage may write, whatever the config.
fn stage_output_names(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Ingest => &[EMBEDDINGS_FILE],
        Stage::Project => &[PROJECTION_FILE, PROJECTION_INFO_FILE],
        Stage::Cluster => &[CLUSTERS_FILE, CONDENSED_TREE_FILE],
        Stage::Likelihoods => &[LIKELIHOODS_FILE],
        Stage::Weights => &[WEIGHTS_FILE, WEIGHTS_CSV_FILE],
        Stage::Report => &[HISTOGRAM_FILE, SUMMARY_FILE, HISTOGRAM_SVG_FILE],
    }
}

fn method_tag(p: &ClusterParams) -> &'static str {
    match p {
        ClusterParams::Dbscan(_) => "dbscan",
        ClusterParams::Hdbscan(_) => "hdbscan",
    }
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json");
    out.push(b'\n');
    out
}

/// Names the top-level fields that differ between two parameter objects.
fn describe_diff(recorded: &Value, wanted: &Value) -> String {
    match (recorded.as_object(), wanted.as_object()) {
        (Some(a), Some(b)) => {
            let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
            keys.sort();
            keys.dedup();
            let diffs: Vec<String> = keys
                .into_iter()
                .filter(|k| a.get(*k) != b.get(*k))
                .map(|k| {
                    format!(
                        "{k}: cached {} vs config {}",
                        a.get(k).unwrap_or(&Value::Null),
                        b.get(k).unwrap_or(&Value::Null)
                    )
                })
                .collect();
            diffs.join("; ")
        }
        _ => format!("cached {recorded} vs config {wanted}"),
    }
}
