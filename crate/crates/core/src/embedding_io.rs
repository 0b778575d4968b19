//! Embedding interchange formats.
//!
//! The primary container is DSEQ, a little-endian binary layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DSEQ"
//! 4       2     format version (u16, = 1)
//! 6       2     flags (u16, = 0)
//! 8       8     n_samples (u64)
//! 16      4     dim (u32)
//! 20      4     reserved (u32, = 0)
//! 24      4·n·d row-major f32 payload
//! ..      8     manifest block length in bytes (u64)
//! ..      ..    UTF-8 JSON lines, one {"id": .., "uri": ..} object per row
//! ```
//!
//! CSV is supported for interop: a header row `id,f0,f1,...,f{d-1}` followed
//! by one row per sample.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub const DSEQ_MAGIC: &[u8; 4] = b"DSEQ";
pub const DSEQ_VERSION: u16 = 1;
/// Size of the fixed DSEQ header in bytes.
pub const DSEQ_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row} has {found} values, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("payload holds {found} bytes but the header declares {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error("embedding matrix must be non-empty (n_samples = {n_samples}, dim = {dim})")]
    Empty { n_samples: usize, dim: usize },
    #[error("manifest has {found} entries for {expected} rows")]
    ManifestMismatch { expected: usize, found: usize },
    #[error("invalid manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid number {value:?} at row {row}, column {col}")]
    ParseValue {
        row: usize,
        col: usize,
        value: String,
    },
}

/// On-disk encoding of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// Guesses the format from a file extension (`.csv` → CSV, anything else → binary).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

/// Per-sample manifest record, one per embedding row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
    #[serde(default, rename = "split", skip_serializing_if = "Option::is_none")]
    pub split_tag: Option<String>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            uri: None,
            split_tag: None,
        }
    }
}

/// Validated `n_samples × dim` embedding matrix with aligned sample manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    manifest: Vec<ManifestEntry>,
}

impl EmbeddingMatrix {
    /// Validates and builds a matrix. Rows are `data.chunks(dim)` in manifest order.
    pub fn new(
        manifest: Vec<ManifestEntry>,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, FormatError> {
        let n = manifest.len();
        if n == 0 || dim == 0 {
            return Err(FormatError::Empty { n_samples: n, dim });
        }
        if data.len() != n * dim {
            return Err(FormatError::PayloadLength {
                expected: n * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for entry in &manifest {
            if !seen.insert(entry.id.as_str()) {
                return Err(FormatError::DuplicateSampleId(entry.id.clone()));
            }
        }
        Ok(Self {
            dim,
            data,
            manifest,
        })
    }

    /// Convenience constructor from bare ids.
    pub fn from_ids<S: Into<String>>(
        ids: impl IntoIterator<Item = S>,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, FormatError> {
        Self::new(ids.into_iter().map(ManifestEntry::new).collect(), dim, data)
    }

    /// Converts an `f64` matrix to `f32` storage, e.g. to persist projected coordinates.
    pub fn from_matrix(manifest: Vec<ManifestEntry>, m: &Matrix) -> Result<Self, FormatError> {
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(manifest, m.cols(), data)
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.manifest.iter().map(|e| e.id.as_str())
    }

    /// Widens the payload to an `f64` matrix for numerical work.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.n_samples(),
            self.dim,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }
}

/// Reads and validates an embedding file.
pub fn read_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingMatrix, FormatError> {
    match format {
        EmbeddingFormat::Binary => decode_dseq(&fs::read(path)?),
        EmbeddingFormat::Csv => read_csv(fs::File::open(path)?),
    }
}

/// Writes `m` as a DSEQ container.
pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), FormatError> {
    let bytes = encode_dseq(m)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Writes `m` as CSV with a `id,f0,...` header. `f32` values use the shortest
/// representation that parses back to the same bits.
pub fn write_embeddings_csv(m: &EmbeddingMatrix, path: &Path) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::with_capacity(m.dim + 1);
    header.push("id".to_string());
    header.extend((0..m.dim).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, entry) in m.manifest.iter().enumerate() {
        let mut record = Vec::with_capacity(m.dim + 1);
        record.push(entry.id.clone());
        record.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes to DSEQ bytes. The matrix is re-validated first.
pub fn encode_dseq(m: &EmbeddingMatrix) -> Result<Vec<u8>, FormatError> {
    // matrices can only be built through `new`, but keep the write path honest
    let m = EmbeddingMatrix::new(m.manifest.clone(), m.dim, m.data.clone())?;
    let dim = u32::try_from(m.dim)
        .map_err(|_| FormatError::MalformedHeader(format!("dim {} exceeds u32", m.dim)))?;

    let mut manifest = Vec::new();
    for entry in &m.manifest {
        serde_json::to_writer(&mut manifest, entry).map_err(|e| FormatError::Manifest {
            line: 0,
            message: e.to_string(),
        })?;
        manifest.push(b'\n');
    }

    let mut out = Vec::with_capacity(DSEQ_HEADER_LEN + 4 * m.data.len() + 8 + manifest.len());
    out.extend_from_slice(DSEQ_MAGIC);
    out.extend_from_slice(&DSEQ_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(m.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    Ok(out)
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn le_u64(b: &[u8]) -> u64 {
    let mut a = [0u8; 8];
    a.copy_from_slice(&b[..8]);
    u64::from_le_bytes(a)
}

/// Parses DSEQ bytes into a validated matrix.
pub fn decode_dseq(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    if bytes.len() < DSEQ_HEADER_LEN {
        return Err(FormatError::MalformedHeader(format!(
            "file is {} bytes, shorter than the {DSEQ_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != DSEQ_MAGIC {
        return Err(FormatError::MalformedHeader("bad magic".into()));
    }
    let version = le_u16(&bytes[4..6]);
    if version != DSEQ_VERSION {
        return Err(FormatError::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let flags = le_u16(&bytes[6..8]);
    if flags != 0 {
        return Err(FormatError::MalformedHeader(format!(
            "unsupported flags {flags:#06x}"
        )));
    }
    let n = usize::try_from(le_u64(&bytes[8..16]))
        .map_err(|_| FormatError::MalformedHeader("n_samples overflows usize".into()))?;
    let dim = le_u32(&bytes[16..20]) as usize;
    if n == 0 || dim == 0 {
        return Err(FormatError::Empty { n_samples: n, dim });
    }

    let body = &bytes[DSEQ_HEADER_LEN..];
    let payload_len = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| FormatError::MalformedHeader("n_samples * dim overflows".into()))?;
    if body.len() < payload_len + 8 {
        return Err(FormatError::PayloadLength {
            expected: payload_len + 8,
            found: body.len(),
        });
    }
    let data: Vec<f32> = body[..payload_len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let manifest_len = usize::try_from(le_u64(&body[payload_len..payload_len + 8]))
        .map_err(|_| FormatError::MalformedHeader("manifest length overflows usize".into()))?;
    let manifest_bytes = &body[payload_len + 8..];
    if manifest_bytes.len() != manifest_len {
        return Err(FormatError::PayloadLength {
            expected: payload_len + 8 + manifest_len,
            found: body.len(),
        });
    }
    let text = std::str::from_utf8(manifest_bytes).map_err(|e| FormatError::Manifest {
        line: 0,
        message: e.to_string(),
    })?;
    let manifest = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str::<ManifestEntry>(line).map_err(|e| FormatError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if manifest.len() != n {
        return Err(FormatError::ManifestMismatch {
            expected: n,
            found: manifest.len(),
        });
    }
    EmbeddingMatrix::new(manifest, dim, data)
}

/// Parses CSV with a leading `id` column.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<EmbeddingMatrix, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("id") {
        return Err(FormatError::MalformedHeader(
            "first csv column must be `id`".into(),
        ));
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(FormatError::MalformedHeader("csv has no feature columns".into()));
    }

    let mut manifest = Vec::new();
    let mut data = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != dim + 1 {
            return Err(FormatError::DimensionMismatch {
                row,
                expected: dim,
                found: record.len().saturating_sub(1),
            });
        }
        manifest.push(ManifestEntry::new(record[0].trim()));
        for (col, field) in record.iter().skip(1).enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| FormatError::ParseValue {
                row,
                col,
                value: field.to_string(),
            })?;
            data.push(v);
        }
    }
    EmbeddingMatrix::new(manifest, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn two_by_three_binary() {
        let m = EmbeddingMatrix::from_ids(ids(2), 3, vec![0., 0., 0., 1., 1., 1.]).unwrap();
        let back = decode_dseq(&encode_dseq(&m).unwrap()).unwrap();
        assert_eq!(back.n_samples(), 2);
        assert_eq!(back.dim(), 3);
        assert_eq!(back.row(1), &[1.0, 1.0, 1.0]);
        assert_eq!(back, m);
    }

    #[test]
    fn header_layout_is_fixed() {
        let m = EmbeddingMatrix::from_ids(["a"], 1, vec![0.5]).unwrap();
        let b = encode_dseq(&m).unwrap();
        assert_eq!(&b[0..4], b"DSEQ");
        assert_eq!(le_u16(&b[4..6]), 1);
        assert_eq!(le_u16(&b[6..8]), 0);
        assert_eq!(le_u64(&b[8..16]), 1);
        assert_eq!(le_u32(&b[16..20]), 1);
        assert_eq!(le_u32(&b[20..24]), 0);
        assert_eq!(f32::from_le_bytes([b[24], b[25], b[26], b[27]]), 0.5);
        let manifest = br#"{"id":"a"}
"#;
        assert_eq!(le_u64(&b[28..36]), manifest.len() as u64);
        assert_eq!(&b[36..], manifest);
    }

    #[test]
    fn single_value_reads_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.dseq");
        let m = EmbeddingMatrix::from_ids(["only"], 1, vec![0.5]).unwrap();
        write_embeddings(&m, &path).unwrap();
        let back = read_embeddings(&path, EmbeddingFormat::Binary).unwrap();
        assert_eq!(back.row(0)[0], 0.5);
    }

    #[test]
    fn zero_dim_rejected() {
        let err = EmbeddingMatrix::from_ids(["a"], 0, vec![]).unwrap_err();
        assert!(matches!(err, FormatError::Empty { n_samples: 1, dim: 0 }));
    }

    #[test]
    fn csv_duplicate_id() {
        let err = read_csv("id,a,b\ns1,1.0,2.0\ns1,3.0,4.0".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::DuplicateSampleId(ref id) if id == "s1"));
    }

    #[test]
    fn csv_ragged_row() {
        let err = read_csv("id,f0,f1\ns1,1.0,2.0\ns2,3.0".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            FormatError::DimensionMismatch {
                row: 1,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn csv_non_finite() {
        let err = read_csv("id,f0\ns1,NaN".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::NonFiniteValue { row: 0, col: 0 }));
        let err = read_csv("id,f0\ns1,inf".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::NonFiniteValue { .. }));
    }

    #[test]
    fn csv_bad_header() {
        let err = read_csv("name,f0\ns1,1".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::MalformedHeader(_)));
    }

    #[test]
    fn binary_non_finite_rejected() {
        let m = EmbeddingMatrix::from_ids(["a", "b"], 1, vec![1.0, 2.0]).unwrap();
        let mut b = encode_dseq(&m).unwrap();
        b[28..32].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_dseq(&b),
            Err(FormatError::NonFiniteValue { row: 1, col: 0 })
        ));
    }

    #[test]
    fn declared_count_must_match_payload() {
        let m = EmbeddingMatrix::from_ids(ids(3), 2, vec![0.0; 6]).unwrap();
        let b = encode_dseq(&m).unwrap();

        let mut bigger_n = b.clone();
        bigger_n[8..16].copy_from_slice(&4u64.to_le_bytes());
        assert!(decode_dseq(&bigger_n).is_err());

        let mut smaller_dim = b.clone();
        smaller_dim[16..20].copy_from_slice(&1u32.to_le_bytes());
        assert!(decode_dseq(&smaller_dim).is_err());

        let truncated = &b[..b.len() - 3];
        assert!(matches!(
            decode_dseq(truncated),
            Err(FormatError::PayloadLength { .. })
        ));

        let mut bad_magic = b.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_dseq(&bad_magic),
            Err(FormatError::MalformedHeader(_))
        ));
    }

    #[test]
    fn manifest_fields_survive() {
        let manifest = vec![
            ManifestEntry {
                id: "img/0001.png".into(),
                uri: Some("s3://bucket/0001.png".into()),
                split_tag: Some("train".into()),
            },
            ManifestEntry::new("img/0002.png"),
        ];
        let m = EmbeddingMatrix::new(manifest.clone(), 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let back = decode_dseq(&encode_dseq(&m).unwrap()).unwrap();
        assert_eq!(back.manifest(), manifest.as_slice());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let m = EmbeddingMatrix::from_ids(ids(2), 2, vec![0.1, -3.25e-7, 1e30, 7.0]).unwrap();
        write_embeddings_csv(&m, &path).unwrap();
        let back = read_embeddings(&path, EmbeddingFormat::Csv).unwrap();
        assert_eq!(back, m);
    }
}
