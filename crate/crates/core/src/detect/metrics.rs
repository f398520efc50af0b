use super::DetectError;
use crate::data::{category_distribution, largest_category, CategoryDistribution, Dataset};

/// W-NDCG gain of a positive in the target category (other positives gain 1).
pub const TARGET_GAIN: f64 = 2.0;

/// Number of distinct categories across the slate's items.
pub fn coverage(slate: &[u32], dataset: &Dataset) -> usize {
    let mut seen = vec![false; dataset.n_categories()];
    for &i in slate {
        for &c in &dataset.item_profiles[i as usize].categories {
            seen[c as usize] = true;
        }
    }
    seen.iter().filter(|&&b| b).count()
}

/// Share of the first `k` slate positions holding an item of `category`, over `k`.
pub fn category_fraction(slate: &[u32], category: usize, dataset: &Dataset, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = slate
        .iter()
        .take(k)
        .filter(|&&i| dataset.item_profiles[i as usize].has_category(category))
        .count();
    hits as f64 / k as f64
}

/// Fraction of the slate in the user's largest train category.
pub fn mcd(slate: &[u32], history: &[u32], dataset: &Dataset, k: usize) -> Result<f64, DetectError> {
    let major = largest_category(&category_distribution(history, dataset)).ok_or(DetectError::EmptyHistory)?;
    Ok(category_fraction(slate, major, dataset, k))
}

/// Fraction of the slate in the target category.
pub fn tcd(slate: &[u32], target: usize, dataset: &Dataset, k: usize) -> f64 {
    category_fraction(slate, target, dataset, k)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖d − ĝ‖₂ − ‖d − ḡ‖₂`; negative when the slate sits closer to the target group.
pub fn dis_euc(
    slate_dist: &CategoryDistribution,
    original_group: &CategoryDistribution,
    target_group: &CategoryDistribution,
) -> Result<f64, DetectError> {
    let m = slate_dist.len();
    for other in [original_group, target_group] {
        if other.len() != m {
            return Err(DetectError::DimensionMismatch(m, other.len()));
        }
    }
    Ok(euclid(&slate_dist.probs, &target_group.probs) - euclid(&slate_dist.probs, &original_group.probs))
}

fn dedup(positives: &[u32]) -> Vec<u32> {
    let mut p = positives.to_vec();
    p.sort_unstable();
    p.dedup();
    p
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 2) as f64).log2()
}

/// `|hits in top k| / |positives|`; `None` without positives.
pub fn recall_at_k(slate: &[u32], positives: &[u32], k: usize) -> Option<f64> {
    let pos = dedup(positives);
    if pos.is_empty() {
        return None;
    }
    let hits = slate.iter().take(k).filter(|i| pos.binary_search(i).is_ok()).count();
    Some(hits as f64 / pos.len() as f64)
}

fn graded_ndcg(slate: &[u32], k: usize, gain: impl Fn(u32) -> f64, mut ideal: Vec<f64>) -> Option<f64> {
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(r, g)| g * discount(r)).sum();
    if idcg == 0.0 {
        return Some(0.0);
    }
    let dcg: f64 = slate.iter().take(k).enumerate().map(|(r, &i)| gain(i) * discount(r)).sum();
    Some(dcg / idcg)
}

/// Binary-gain NDCG@k with `log2(rank + 1)` discount; ideal DCG over `min(k, |positives|)`.
pub fn ndcg_at_k(slate: &[u32], positives: &[u32], k: usize) -> Option<f64> {
    let pos = dedup(positives);
    let gain = |i: u32| if pos.binary_search(&i).is_ok() { 1.0 } else { 0.0 };
    graded_ndcg(slate, k, gain, vec![1.0; pos.len()])
}

/// NDCG@k with linear gains: 2 for positives in the target, 1 for other positives, 0 otherwise.
pub fn w_ndcg_at_k(slate: &[u32], positives: &[u32], in_target: impl Fn(u32) -> bool, k: usize) -> Option<f64> {
    let pos = dedup(positives);
    let g = |i: u32| {
        if pos.binary_search(&i).is_err() {
            0.0
        } else if in_target(i) {
            TARGET_GAIN
        } else {
            1.0
        }
    };
    let ideal = pos.iter().map(|&i| g(i)).collect();
    graded_ndcg(slate, k, g, ideal)
}
