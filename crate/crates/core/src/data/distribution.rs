use serde::{Deserialize, Serialize};

use super::Dataset;

/// A distribution over the `M` item categories. All-zero for an empty item set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub probs: Vec<f64>,
}

impl CategoryDistribution {
    pub fn zeros(m: usize) -> Self {
        CategoryDistribution { probs: vec![0.0; m] }
    }

    pub fn is_empty(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// Element-wise mean of several distributions (all of the same length).
    pub fn mean(dists: &[CategoryDistribution], m: usize) -> CategoryDistribution {
        let mut probs = vec![0.0; m];
        if dists.is_empty() {
            return CategoryDistribution { probs };
        }
        for d in dists {
            for (acc, p) in probs.iter_mut().zip(&d.probs) {
                *acc += p;
            }
        }
        let n = dists.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        CategoryDistribution { probs }
    }
}

/// Averages the items' L1-normalized category vectors.
pub fn category_distribution(items: &[u32], dataset: &Dataset) -> CategoryDistribution {
    let mut probs = vec![0.0; dataset.n_categories()];
    if items.is_empty() {
        return CategoryDistribution { probs };
    }
    for &item in items {
        let cats = &dataset.item_profiles[item as usize].categories;
        let share = 1.0 / cats.len() as f64;
        for &c in cats {
            probs[c as usize] += share;
        }
    }
    let n = items.len() as f64;
    probs.iter_mut().for_each(|p| *p /= n);
    CategoryDistribution { probs }
}

/// Index of the largest mass, ties to the lowest index. `None` for an empty distribution.
pub fn largest_category(dist: &CategoryDistribution) -> Option<usize> {
    if dist.is_empty() {
        return None;
    }
    let mut best = 0;
    for (c, &p) in dist.probs.iter().enumerate() {
        if p > dist.probs[best] {
            best = c;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;

    #[test]
    fn single_category_item_is_one_hot() {
        let d = fixtures::tiny();
        assert_eq!(category_distribution(&[0], &d).probs, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn multi_label_item_splits_mass() {
        let d = fixtures::tiny();
        assert_eq!(category_distribution(&[1], &d).probs, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn mixed_items_match_hand_sum() {
        // items 0 {a}, 1 {a,c}, 4 {c,d}: a = (1 + .5)/3, c = (.5 + .5)/3, d = .5/3
        let d = fixtures::tiny();
        let got = category_distribution(&[0, 1, 4], &d).probs;
        let want = [1.5 / 3.0, 1.0 / 3.0, 0.5 / 3.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_set_is_zero_vector() {
        let d = fixtures::tiny();
        let dist = category_distribution(&[], &d);
        assert!(dist.is_empty());
        assert_eq!(largest_category(&dist), None);
    }

    #[test]
    fn argmax_ties_go_low() {
        let dist = CategoryDistribution { probs: vec![0.2, 0.4, 0.4] };
        assert_eq!(largest_category(&dist), Some(1));
    }
}
