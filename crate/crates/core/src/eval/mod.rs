//! Offline experiments: scenario cohorts, baseline and control variants,
//! hyperparameter grids selected on validation Recall, and result tables.
//!
//! Every variant of a run ranks the same all-ranking candidates (all items
//! minus the user's train and validation positives) for the same cohort.

mod cohort;
mod config;
mod grid;
mod run;
mod table;
mod variants;

use std::path::PathBuf;

use thiserror::Error;

pub use cohort::{select_cohort, Cohort, CohortUser};
pub use config::{ExperimentConfig, Grids, Scenario, Tuned, Variant, ALL_VARIANTS, MAX_ALPHA, MAX_BETA};
pub use grid::{choose_best, sweep, tune_variant, GridChoice, GridLogEntry};
pub use run::{evaluate, run_experiment, train_models, write_outputs, ExperimentOutput, TrainPoint, Trained, VariantOutcome};
pub use table::{average, emit_table, merge_seeds, user_metrics, Column, ResultTable, TableRow, UserMetrics};
pub use variants::{
    diversify, grid_points, EvalContext, GridPoint, Scored, SlateReranker, DIVERSITY_POOL, DIVERSITY_WEIGHT,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("variant {variant} does not apply to scenario {scenario}")]
    VariantMismatch { variant: String, scenario: String },
    #[error("slates of {0} do not cover the cohort")]
    CohortMismatch(String),
    #[error("scenario {0} selects no users")]
    EmptyCohort(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
}
