//! FM and NFM over sparse binary inputs built from four field roles
//! (user ID, user attributes, item ID, item categories).

mod io;
mod layout;
mod params;
mod scoring;
mod train;

use thiserror::Error;

pub use io::{ModelHeader, RoleOffsets, SCORE_CONVENTION};
pub use layout::{
    assemble_features, item_features, user_features, FeatureLayout, Role, RoleSet, ScoringRequest, UserEdit,
};
pub use params::{
    bi_interaction, fm_score, init_rng, nfm_score, sigmoid, FmParams, Model, ModelKind, NfmParams, Params, Partial,
    PartialSums,
};
pub use scoring::{rank_cmp, score_all_items, top_k, ItemTable, UserScorer};
pub use train::{
    build_examples, evaluate_recall, EvalSplit, gradient, objective, train, EpochLog, Example, Gradients, TrainConfig,
    TrainLog,
};

use crate::checkpoint::CheckpointError;
use crate::data::DataError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scoring request: {0}")]
    InvalidRequest(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
}
