//! User control commands and their inference-time response: counterfactual
//! deduction of the user-ID effect, attribute edits, a category-aware ranking
//! policy and target-category prediction. Nothing here retrains the model.

mod apply;
mod command;
mod counterfactual;
mod policy;
mod predictor;

use thiserror::Error;

pub use apply::{
    apply_control, baseline_slate, item_policy, policy_ranking, ControlContext, ItemPolicy, DEFAULT_ITEM_ALPHA,
};
pub use command::{CommandJson, ControlCommand, MAX_K_TARGETS};
pub use counterfactual::{blend, counterfactual_score, CounterfactualScores};
pub use policy::{rank_with_policy, RankedItem, Regularizer};
pub use predictor::{
    fit_predictor, half_split_pairs, predict_target_categories, predictor_gradient, predictor_loss,
    train_category_predictor, CategoryPredictor, HalfPair, PredictorConfig, PredictorLog, TargetPrediction,
};

use crate::checkpoint::CheckpointError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("command not applicable: {0}")]
    Precondition(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("coarse command with prediction needs a category predictor")]
    PredictorMissing,
    #[error("no user has at least two train interactions")]
    NoEligibleUsers,
    #[error("invalid predictor: {0}")]
    InvalidPredictor(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
