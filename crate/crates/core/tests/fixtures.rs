//! The checked-in DSEQ fixtures must match their generators byte for byte.
//! Set `REGENERATE_FIXTURES=1` to rewrite them.

mod common;

use dataset_equity::embedding_io::{encode_dseq, read_embeddings};
use dataset_equity::{EmbeddingFormat, EmbeddingMatrix};

fn check(name: &str, generated: EmbeddingMatrix) {
    let path = common::fixture_path(name);
    let bytes = encode_dseq(&generated).unwrap();
    if std::env::var_os("REGENERATE_FIXTURES").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let on_disk = std::fs::read(&path).unwrap();
    assert!(on_disk == bytes, "{name} differs from its generator");
    assert_eq!(read_embeddings(&path, EmbeddingFormat::Binary).unwrap(), generated);
}

#[test]
fn two_blob_60_fixture_is_current() {
    check("two_blob_60.dseq", common::two_blob_60());
}

#[test]
fn toy_500_fixture_is_current() {
    check("toy_500.dseq", common::toy_500());
}
