use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::clustering::ClusterParams;
use crate::embedding_io::EmbeddingFormat;
use crate::gfl::GflParams;
use crate::likelihood::NoisePolicy;
use crate::projection::TsneConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: EmbeddingFormat,
}

fn default_format() -> EmbeddingFormat {
    EmbeddingFormat::Binary
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub histogram_bins: usize,
    pub emit_svg: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 50,
            emit_svg: false,
        }
    }
}

/// Full pipeline configuration, stored as JSON.
///
/// The top-level `seed` overrides `tsne.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub input: InputConfig,
    #[serde(default)]
    pub tsne: TsneConfig,
    pub cluster: ClusterParams,
    #[serde(default)]
    pub noise_policy: NoisePolicy,
    #[serde(default)]
    pub gfl: GflParams,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub report: ReportConfig,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, cluster: ClusterParams) -> Self {
        let input = input.into();
        Self {
            schema_version: SCHEMA_VERSION,
            input: InputConfig {
                format: EmbeddingFormat::from_path(&input),
                path: input,
            },
            tsne: TsneConfig::default(),
            cluster,
            noise_policy: NoisePolicy::default(),
            gfl: GflParams::default(),
            output_dir: output_dir.into(),
            seed: 0,
            report: ReportConfig::default(),
        }
    }

    /// Parses a config file. Relative `input.path` and `output_dir` are
    /// resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            if cfg.input.path.is_relative() {
                cfg.input.path = base.join(&cfg.input.path);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.effective_tsne()
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        self.cluster.validate().or_else(|e| bad(e.to_string()))?;
        self.gfl.validate().or_else(|e| bad(e.to_string()))?;
        if self.report.histogram_bins == 0 {
            return bad("report.histogram_bins must be at least 1".into());
        }
        Ok(())
    }

    /// t-SNE settings with the pipeline seed applied.
    pub fn effective_tsne(&self) -> TsneConfig {
        TsneConfig {
            seed: self.seed,
            ..self.tsne.clone()
        }
    }

    /// SHA-256 of the canonical config JSON, excluding `output_dir`.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            if let Some(t) = obj.get_mut("tsne").and_then(|t| t.as_object_mut()) {
                t.insert("seed".into(), self.seed.into());
            }
        }
        sha256_hex(serde_json::to_string(&v).expect("json").as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
