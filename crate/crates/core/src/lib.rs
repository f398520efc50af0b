//! User-controllable recommendation against filter bubbles.
//!
//! - [`data`]: interaction logs, feature tables, chronological splits.
//! - [`model`]: FM / NFM scoring and training over sparse binary features.
//! - [`detect`]: filter-bubble and accuracy metrics, severity levels.
//! - [`control`]: the four user-control commands and their inference-time response.
//! - [`eval`]: offline experiments, baselines, grids, result tables.
//! - [`checkpoint`]: the binary container models and predictors are saved in.

pub mod checkpoint;
pub mod control;
pub mod data;
pub mod detect;
pub mod eval;
pub mod model;
