//! Writes a small embedding matrix as DSEQ and CSV, reads both back and
//! checks that every value survives bit for bit.
//!
//! `cargo run --example embedding_roundtrip`

use dataset_equity::embedding_io::{read_embeddings, write_embeddings, write_embeddings_csv};
use dataset_equity::{EmbeddingFormat, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, dim) = (100, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let m = EmbeddingMatrix::from_ids((0..n).map(|i| format!("img_{i:04}")), dim, data)?;

    let dir = std::env::temp_dir().join("dataset-equity-roundtrip");
    std::fs::create_dir_all(&dir)?;
    let bin = dir.join("embeddings.dseq");
    let csv = dir.join("embeddings.csv");
    write_embeddings(&m, &bin)?;
    write_embeddings_csv(&m, &csv)?;

    for (path, format) in [(&bin, EmbeddingFormat::Binary), (&csv, EmbeddingFormat::Csv)] {
        let back = read_embeddings(path, format)?;
        let same = back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        println!(
            "{}: {} x {}, {} bytes, identical: {same}",
            path.display(),
            back.n_samples(),
            back.dim(),
            std::fs::metadata(path)?.len()
        );
        assert!(same && back.manifest() == m.manifest());
    }
    Ok(())
}
