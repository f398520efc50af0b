//! HTTP JSON API over a frozen snapshot: a prepared dataset, a trained model
//! and an optional category predictor. Baseline slates are precomputed once;
//! controls are answered from cached item embeddings. `/admin/reload` swaps
//! in a fresh snapshot atomically.

pub mod api;
pub mod routes;
pub mod snapshot;

use std::path::{Path, PathBuf};

pub use api::{
    bubble_report, catalog_categories, catalog_user_features, control_response, health, history, recommendations,
    ApiError, BubbleReportJson, ControlResponse, SlateJson,
};
pub use routes::{router, serve, AppState, DEFAULT_K};
pub use snapshot::{ServingSnapshot, SnapshotSource, WindowSignals, MODEL_FILE, PREDICTOR_FILE, REPORT_K};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid snapshot: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] ucrs_core::data::DataError),
    #[error(transparent)]
    Model(#[from] ucrs_core::model::ModelError),
    #[error(transparent)]
    Control(#[from] ucrs_core::control::ControlError),
}

impl ServiceError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
