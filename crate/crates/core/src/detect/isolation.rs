use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compensated_sum, DetectError};

/// Per-item exposure counts of one user group (how many of the group's slates
/// contain each item).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupExposure {
    pub counts: BTreeMap<u32, u64>,
}

impl GroupExposure {
    pub fn from_counts(counts: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut g = GroupExposure::default();
        for (item, n) in counts {
            if n > 0 {
                *g.counts.entry(item).or_default() += n;
            }
        }
        g
    }

    pub fn from_slates<'a>(slates: impl IntoIterator<Item = &'a [u32]>) -> Self {
        Self::from_counts(slates.into_iter().flatten().map(|&i| (i, 1)))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    fn get(&self, item: u32) -> u64 {
        self.counts.get(&item).copied().unwrap_or(0)
    }
}

/// `s = Σ_i (a_i/a_n − b_i/b_n) · a_i/(a_i + b_i)` over items exposed to either group.
pub fn isolation_index(a: &GroupExposure, b: &GroupExposure) -> Result<f64, DetectError> {
    let (an, bn) = (a.total(), b.total());
    if an == 0 {
        return Err(DetectError::EmptyGroup("a".into()));
    }
    if bn == 0 {
        return Err(DetectError::EmptyGroup("b".into()));
    }
    let mut items: Vec<u32> = a.counts.keys().chain(b.counts.keys()).copied().collect();
    items.sort_unstable();
    items.dedup();
    let terms = items.into_iter().map(|i| {
        let (ai, bi) = (a.get(i) as f64, b.get(i) as f64);
        (ai / an as f64 - bi / bn as f64) * (ai / (ai + bi))
    });
    Ok(compensated_sum(terms))
}

/// Mean isolation index over all unordered pairs of groups.
pub fn pairwise_isolation(groups: &[GroupExposure]) -> Result<f64, DetectError> {
    if groups.len() < 2 {
        return Err(DetectError::TooFewGroups);
    }
    let mut values = Vec::new();
    for x in 0..groups.len() {
        for y in (x + 1)..groups.len() {
            values.push(isolation_index(&groups[x], &groups[y])?);
        }
    }
    Ok(compensated_sum(values.iter().copied()) / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(pairs: &[(u32, u64)]) -> GroupExposure {
        GroupExposure::from_counts(pairs.iter().copied())
    }

    #[test]
    fn identical_groups_score_zero() {
        let a = g(&[(1, 3), (2, 5), (9, 1)]);
        assert!(isolation_index(&a, &a.clone()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn disjoint_groups_score_one() {
        assert!((isolation_index(&g(&[(1, 1)]), &g(&[(2, 1)])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_example() {
        // a = {1:2, 2:1}, b = {1:1, 2:2}; a_n = b_n = 3
        // item1: (2/3 − 1/3)·2/3 = 2/9; item2: (1/3 − 2/3)·1/3 = −1/9
        let s = isolation_index(&g(&[(1, 2), (2, 1)]), &g(&[(1, 1), (2, 2)])).unwrap();
        assert!((s - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(isolation_index(&g(&[]), &g(&[(1, 1)])).is_err());
        assert!(isolation_index(&g(&[(1, 1)]), &g(&[])).is_err());
    }

    #[test]
    fn pairwise_cases() {
        let a = g(&[(1, 2), (2, 1)]);
        let b = g(&[(1, 1), (2, 2)]);
        let c = g(&[(3, 4)]);
        assert_eq!(pairwise_isolation(&[a.clone(), b.clone()]).unwrap(), isolation_index(&a, &b).unwrap());
        assert!(pairwise_isolation(&[a.clone(), a.clone(), a.clone()]).unwrap().abs() < 1e-12);
        let oracle = (isolation_index(&a, &b).unwrap() + isolation_index(&a, &c).unwrap() + isolation_index(&b, &c).unwrap()) / 3.0;
        assert!((pairwise_isolation(&[a.clone(), b, c]).unwrap() - oracle).abs() < 1e-15);
        assert!(matches!(pairwise_isolation(&[a]), Err(DetectError::TooFewGroups)));
    }

    fn exposure() -> impl Strategy<Value = GroupExposure> {
        proptest::collection::vec((0u32..12, 0u64..6), 1..12)
            .prop_map(GroupExposure::from_counts)
            .prop_filter("non-empty", |g| g.total() > 0)
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(a in exposure(), b in exposure()) {
            let s = isolation_index(&a, &b).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            prop_assert!((s - isolation_index(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_item_relabeling(a in exposure(), b in exposure(), shift in 1u32..1000) {
            let relabel = |g: &GroupExposure| GroupExposure::from_counts(g.counts.iter().map(|(&i, &n)| ((i * 7 + shift) % 1009, n)));
            let s = isolation_index(&a, &b).unwrap();
            let t = isolation_index(&relabel(&a), &relabel(&b)).unwrap();
            prop_assert!((s - t).abs() < 1e-12);
        }
    }
}
