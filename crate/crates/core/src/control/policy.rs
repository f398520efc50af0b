use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::ItemProfile;

/// Per-item regularizer `r(i)` of the ranking policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularizer {
    /// `r = 1` everywhere.
    Off,
    /// 2 for items in any target category, else 1.
    Fine { targets: Vec<usize> },
    /// 0 for items in the demoted category, else 1.
    Coarse { demoted: usize },
    /// 2 for target items (even if also demoted), 0 for other demoted items, else 1.
    Combined { targets: Vec<usize>, demoted: usize },
}

impl Regularizer {
    pub fn value(&self, item: &ItemProfile) -> u8 {
        let any = |ts: &[usize]| ts.iter().any(|&t| item.has_category(t));
        match self {
            Regularizer::Off => 1,
            Regularizer::Fine { targets } => {
                if any(targets) {
                    2
                } else {
                    1
                }
            }
            Regularizer::Coarse { demoted } => {
                if item.has_category(*demoted) {
                    0
                } else {
                    1
                }
            }
            Regularizer::Combined { targets, demoted } => {
                if any(targets) {
                    2
                } else if item.has_category(*demoted) {
                    0
                } else {
                    1
                }
            }
        }
    }
}

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item: u32,
    /// `Y′ = Y + β·r`.
    pub adjusted: f64,
    /// Base score `Y`.
    pub base: f64,
    pub r: u8,
}

fn policy_cmp(a: &RankedItem, b: &RankedItem) -> Ordering {
    b.adjusted
        .total_cmp(&a.adjusted)
        .then(b.base.total_cmp(&a.base))
        .then(a.item.cmp(&b.item))
}

/// Top-`k` by `Y + β·r`, ties by higher `Y` then lower item index.
/// The flag is set when fewer than `k` candidates exist.
pub fn rank_with_policy(candidates: &[u32], base: &[f64], r: &[u8], beta: f64, k: usize) -> (Vec<RankedItem>, bool) {
    assert_eq!(candidates.len(), base.len());
    assert_eq!(candidates.len(), r.len());
    let mut all: Vec<RankedItem> = candidates
        .iter()
        .zip(base)
        .zip(r)
        .map(|((&item, &y), &r)| RankedItem {
            item,
            adjusted: y + beta * r as f64,
            base: y,
            r,
        })
        .collect();
    let short = all.len() < k;
    let k = k.min(all.len());
    if k == 0 {
        return (Vec::new(), short);
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, policy_cmp);
        all.truncate(k);
    }
    all.sort_by(policy_cmp);
    (all, short)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::top_k;
    use proptest::prelude::*;

    fn item(cats: &[u16]) -> ItemProfile {
        ItemProfile {
            categories: cats.to_vec(),
            title: None,
        }
    }

    #[test]
    fn regularizer_values() {
        let fine = Regularizer::Fine { targets: vec![2] };
        assert_eq!(fine.value(&item(&[2])), 2);
        assert_eq!(fine.value(&item(&[0])), 1);
        let coarse = Regularizer::Coarse { demoted: 0 };
        assert_eq!(coarse.value(&item(&[0, 1])), 0);
        assert_eq!(coarse.value(&item(&[1])), 1);
        let both = Regularizer::Combined {
            targets: vec![1],
            demoted: 0,
        };
        assert_eq!(both.value(&item(&[0, 1])), 2);
        assert_eq!(both.value(&item(&[0])), 0);
        assert_eq!(both.value(&item(&[3])), 1);
    }

    #[test]
    fn small_instance_matches_sort_oracle() {
        let cands = [10, 11, 12, 13, 14];
        let y = [0.50, 0.47, 0.52, 0.44, 0.51];
        let r = [1, 2, 0, 2, 1];
        let (got, short) = rank_with_policy(&cands, &y, &r, 0.05, 5);
        assert!(!short);
        // Y′ = 0.55, 0.57, 0.52, 0.54, 0.56
        let order: Vec<u32> = got.iter().map(|x| x.item).collect();
        assert_eq!(order, vec![11, 14, 10, 13, 12]);
    }

    #[test]
    fn short_candidate_lists_are_flagged() {
        let (got, short) = rank_with_policy(&[1, 2], &[0.1, 0.2], &[1, 1], 0.0, 10);
        assert_eq!(got.len(), 2);
        assert!(short);
    }

    proptest! {
        #[test]
        fn beta_zero_matches_base_ranking(y in proptest::collection::vec(0.0f64..1.0, 1..40), r in proptest::collection::vec(0u8..3, 40)) {
            let cands: Vec<u32> = (0..y.len() as u32).map(|i| i * 3).collect();
            let (got, _) = rank_with_policy(&cands, &y, &r[..y.len()], 0.0, 10);
            let base = top_k(&cands, &y, 10);
            prop_assert_eq!(got.iter().map(|x| x.item).collect::<Vec<_>>(), base.iter().map(|x| x.0).collect::<Vec<_>>());
        }

        #[test]
        fn large_beta_orders_by_tier(y in proptest::collection::vec(0.0f64..=1.0, 1..40), r in proptest::collection::vec(0u8..3, 40)) {
            let cands: Vec<u32> = (0..y.len() as u32).collect();
            let (got, _) = rank_with_policy(&cands, &y, &r[..y.len()], 1.01, y.len());
            prop_assert!(got.windows(2).all(|w| w[0].r >= w[1].r));
        }
    }
}
