//! File formats, dataset manifests, configuration, and the batch pipeline
//! drivers behind the CLI subcommands.

mod annotations;
mod config;
mod manifest;
mod pipeline;
mod raster_files;

pub use annotations::{read_annotation_file, write_annotation_file};
pub use config::GenerateConfig;
pub use manifest::{DatasetManifest, ImageRecord, MANIFEST_SCHEMA_VERSION};
pub use pipeline::{
    eval_det, eval_seg, generate, regenerate, segment_baseline, SegEvalSummary,
    SegmentBaselineOptions,
};
pub use raster_files::{
    load_gray8, load_instance16, load_segmap, save_gray8, save_instance16, save_segmap,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("{path}: missing file referenced by manifest")]
    MissingFile { path: String },
    #[error("image {image_id}: prediction map is {got_w}x{got_h} but the image is {want_w}x{want_h}")]
    ShapeMismatch {
        image_id: String,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Seg(#[from] crate::segpost::SegError),
    #[error(transparent)]
    Eval(#[from] crate::deteval::EvalError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }
}
