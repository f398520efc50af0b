use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// A training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub user: u32,
    pub item: u32,
    pub label: u8,
}

/// Sorted union of each user's train/valid/test positives.
pub(crate) fn all_positives(dataset: &Dataset) -> Vec<Vec<u32>> {
    let h = dataset.histories();
    (0..dataset.n_users())
        .map(|u| {
            let mut v: Vec<u32> = h.train[u]
                .iter()
                .chain(&h.valid[u])
                .chain(&h.test[u])
                .copied()
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Draws one unobserved item per training positive, uniformly among items the user
/// has no positive for in any split. Output is aligned with `dataset.train`.
pub fn sample_negatives(dataset: &Dataset, seed: u64) -> Result<Vec<LabeledPair>, DataError> {
    let positives = all_positives(dataset);
    let n_items = dataset.n_items() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dataset.train.len());
    for it in &dataset.train {
        let pos = &positives[it.user as usize];
        if pos.len() >= n_items as usize {
            return Err(DataError::NoNegativeAvailable {
                user_id: dataset.users.raw(it.user).to_string(),
            });
        }
        let item = if pos.len() * 2 <= n_items as usize {
            loop {
                let cand = rng.random_range(0..n_items);
                if pos.binary_search(&cand).is_err() {
                    break cand;
                }
            }
        } else {
            // dense users: pick the r-th free item directly
            let free = n_items as usize - pos.len();
            let mut r = rng.random_range(0..free);
            let mut chosen = 0;
            for cand in 0..n_items {
                if pos.binary_search(&cand).is_err() {
                    if r == 0 {
                        chosen = cand;
                        break;
                    }
                    r -= 1;
                }
            }
            chosen
        };
        out.push(LabeledPair {
            user: it.user,
            item,
            label: 0,
        });
    }
    Ok(out)
}
