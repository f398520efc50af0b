use serde::{Deserialize, Serialize};

use super::RawInteraction;

/// Train/validation fractions; the test split takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, valid: 0.1 }
    }
}

/// Positive interactions, globally time-sorted and cut into three consecutive runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitLog {
    pub train: Vec<RawInteraction>,
    pub valid: Vec<RawInteraction>,
    pub test: Vec<RawInteraction>,
}

impl SplitLog {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keeps interactions with `rating >= positive_threshold`, sorts them by
/// `(timestamp, user_id, item_id)` and cuts the sequence into train/valid/test.
/// Train and valid sizes are floored; the remainder goes to test.
pub fn binarize_and_split(
    interactions: &[RawInteraction],
    positive_threshold: u8,
    fractions: SplitFractions,
) -> SplitLog {
    let mut positives: Vec<RawInteraction> = interactions
        .iter()
        .filter(|r| r.rating >= positive_threshold)
        .cloned()
        .collect();
    positives.sort_by(|a, b| {
        (a.timestamp, &a.user_id, &a.item_id).cmp(&(b.timestamp, &b.user_id, &b.item_id))
    });
    let n = positives.len();
    let n_train = (n as f64 * fractions.train).floor() as usize;
    let n_valid = ((n as f64 * fractions.valid).floor() as usize).min(n - n_train);
    let test = positives.split_off(n_train + n_valid);
    let valid = positives.split_off(n_train);
    SplitLog {
        train: positives,
        valid,
        test,
    }
}
