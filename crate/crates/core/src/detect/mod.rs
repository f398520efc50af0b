//! Filter-bubble and accuracy metrics over recommendation slates.
//!
//! Per-user metrics are pure functions of a slate and the dataset; cohort values
//! are macro averages computed with compensated summation so results do not
//! depend on reduction order.

mod isolation;
mod metrics;
mod report;
mod severity;
mod slate;

use thiserror::Error;

pub use isolation::{isolation_index, pairwise_isolation, GroupExposure};
pub use metrics::{
    category_fraction, coverage, dis_euc, mcd, ndcg_at_k, recall_at_k, tcd, w_ndcg_at_k, TARGET_GAIN,
};
pub use report::{bias_amplification_report, cohort_report, BiasReport, CohortMetrics, GroupBias, Grouping, Report};
pub use severity::{severity, severity_level, severity_score, BubbleReport, REFERENCE_CATEGORIES, SEVERITY_RULE};
pub use slate::{read_slates, write_slates, Provenance, RecommendationSlate};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("exposure group '{0}' has no exposures")]
    EmptyGroup(String),
    #[error("empty train history")]
    EmptyHistory,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("at least two groups are required")]
    TooFewGroups,
    #[error("unknown grouping '{0}'")]
    UnknownGrouping(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Compensated mean; `None` for no values.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    (!v.is_empty()).then(|| compensated_sum(v.iter().copied()) / v.len() as f64)
}
