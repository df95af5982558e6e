//! On-disk formats: binary point clouds, text label files, sequence
//! manifests and the pipeline configuration.

mod cloud;
mod config;
mod labels;
mod manifest;

pub use cloud::{decode_cloud, encode_cloud, read_cloud, write_cloud, CLOUD_MAGIC, CLOUD_VERSION};
pub use config::{RunConfig, Scenario, Source};
pub use labels::{read_labels, write_labels, Label, LabelFile, LabelFrame, Stage, LABELS_MAGIC, LABELS_VERSION, LABEL_COLUMNS};
pub use manifest::{
    labels_to_tracklets, validate_sequence_id, write_dataset, write_manifest, CloudRef, FrameEntry, LoadedManifest,
    RsuEntry, SequenceManifest, Units, GROUND_TRUTH_FILE, MANIFEST_FILE, MANIFEST_FORMAT, MANIFEST_VERSION,
};

use thiserror::Error;

/// Parse failures of the versioned file formats.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version: file has {found}, reader supports {expected}")]
    VersionMismatch {
        format: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("point count mismatch: header declares {declared} points, payload holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}
