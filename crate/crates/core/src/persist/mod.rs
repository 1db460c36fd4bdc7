//! On-disk formats: model checkpoints, dataset manifests, images.
//!
//! Every format is versioned and decoding never panics on corrupt input.

mod checkpoint;
mod image;
mod manifest;

use std::path::{Path, PathBuf};

pub use checkpoint::{decode_model, encode_model, load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use manifest::{manifest_from_json, manifest_to_json, read_manifest, write_manifest};
pub use image::{decode_pgm, encode_pgm, encode_png, export_image, quantize, ImageFormat};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image: {0}")]
    Image(String),
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing required field \"{0}\"")]
    MissingField(&'static str),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u64),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl PersistError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PersistError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
