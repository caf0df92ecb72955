//! Synthetic benchmark data: seeded scene generation across difficulty
//! families and a self-contained on-disk dataset of rendered
//! projection/capture pairs with gray-probe captures per scene.

mod build;
mod gen;
mod source;

pub use build::{
    build_dataset, load_manifest, load_pair, BuildConfig, DatasetManifest, SetupEntry, Split,
};
pub use gen::{generate_setup, generate_setup_sized, Difficulty};
pub use source::{load_source_images, procedural_image};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid input: {what}")]
    BadInput { what: String },
    #[error("{split}[{index}] out of range for {setup_id} (count {count})")]
    OutOfRange {
        setup_id: String,
        split: String,
        index: usize,
        count: usize,
    },
    #[error("unknown setup id {0}")]
    UnknownSetup(String),
    #[error("missing dataset file {path}")]
    MissingFile { path: String },
    #[error("i/o on {context}: {message}")]
    Io { context: String, message: String },
    #[error("manifest {context}: {message}")]
    Manifest { context: String, message: String },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error(transparent)]
    Photometric(#[from] crate::photometric::PhotometricError),
}

impl DatasetError {
    pub(crate) fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        Self::Io {
            context: context.to_string(),
            message: err.to_string(),
        }
    }
}
