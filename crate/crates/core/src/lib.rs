//! Dataset-bias quantification.
//!
//! Embeddings are projected to three dimensions with PCA-initialized t-SNE,
//! clustered with DBSCAN or HDBSCAN, and every sample receives the size of its
//! cluster relative to the largest one as its occurrence likelihood. The
//! likelihoods are mapped to Generalized Focal Loss weights,
//! `(η + (1 − p)^γ) / (η + 1)`, that a trainer multiplies into each sample's
//! loss so rare appearance modes count for more.
//!
//! ```text
//! embeddings ──► projection ──► clustering ──► likelihood ──► gfl ──► weights.jsonl
//! (DSEQ/CSV)     (PCA, t-SNE)   (DBSCAN,       (|C_i|/max|C|)   (W_gfl)
//!                               HDBSCAN)
//! ```
//!
//! The [`pipeline`] module runs these stages with on-disk caching; the
//! `examples/` directory has one runnable program per stage.

pub mod clustering;
pub mod embedding_io;
pub mod gfl;
pub mod likelihood;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod trainer;

pub use clustering::{ClusterAssignment, ClusterParams, DbscanParams, HdbscanParams, NOISE};
pub use embedding_io::{EmbeddingFormat, EmbeddingMatrix, ManifestEntry};
pub use gfl::{gfl_weight, GflParams, WeightTable};
pub use likelihood::{LikelihoodBank, NoisePolicy};
pub use matrix::Matrix;
pub use projection::{ProjectionResult, TsneConfig};
