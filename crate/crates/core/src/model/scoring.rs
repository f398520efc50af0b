//! All-ranking scoring. Item-side partial sums are computed once per model; each
//! request computes the user side once and combines it with every candidate.

use std::cmp::Ordering;

use super::layout::{item_features, user_features, RoleSet, UserEdit};
use super::params::{sigmoid, Model, Partial, PartialSums};
use super::ModelError;
use crate::data::Dataset;

/// Per-item linear sum, embedding sum and squared-embedding sum, flattened.
#[derive(Debug, Clone)]
pub struct ItemTable {
    dim: usize,
    linear: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ItemTable {
    pub fn new(model: &Model, dataset: &Dataset) -> Self {
        let dim = model.params.fm().dim;
        let n = dataset.n_items();
        let mut table = ItemTable {
            dim,
            linear: Vec::with_capacity(n),
            sum: Vec::with_capacity(n * dim),
            sum_sq: Vec::with_capacity(n * dim),
        };
        let mut buf = Vec::new();
        for item in 0..n as u32 {
            buf.clear();
            item_features(&model.layout, dataset, item, RoleSet::EMPTY, &mut buf);
            let ps = model.partial(&buf);
            table.linear.push(ps.linear);
            table.sum.extend_from_slice(&ps.sum);
            table.sum_sq.extend_from_slice(&ps.sum_sq);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    #[inline]
    pub fn get(&self, item: u32) -> Partial<'_> {
        let i = item as usize;
        Partial {
            linear: self.linear[i],
            sum: &self.sum[i * self.dim..(i + 1) * self.dim],
            sum_sq: &self.sum_sq[i * self.dim..(i + 1) * self.dim],
        }
    }
}

/// Scores items for one user under a fixed mask / edit.
pub struct UserScorer<'a> {
    model: &'a Model,
    items: &'a ItemTable,
    user: PartialSums,
}

impl<'a> UserScorer<'a> {
    pub fn new(
        model: &'a Model,
        items: &'a ItemTable,
        dataset: &Dataset,
        user: u32,
        mask_roles: RoleSet,
        edit: &UserEdit,
    ) -> Result<Self, ModelError> {
        let features = user_features(&model.layout, dataset, user, mask_roles, edit)?;
        Ok(UserScorer {
            model,
            items,
            user: model.partial(&features),
        })
    }

    #[inline]
    pub fn raw(&self, item: u32) -> f64 {
        self.model.raw_score_split(self.user.view(), self.items.get(item))
    }

    /// `Y_{u,i} = sigmoid(raw)`.
    #[inline]
    pub fn score(&self, item: u32) -> f64 {
        sigmoid(self.raw(item))
    }

    pub fn score_all(&self, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&i| self.score(i)).collect()
    }
}

/// `Y_{u,i}` for every candidate, in candidate order.
pub fn score_all_items(
    model: &Model,
    items: &ItemTable,
    dataset: &Dataset,
    user: u32,
    candidates: &[u32],
    mask_roles: RoleSet,
    edit: &UserEdit,
) -> Result<Vec<f64>, ModelError> {
    Ok(UserScorer::new(model, items, dataset, user, mask_roles, edit)?.score_all(candidates))
}

/// Descending by score, ties to the lower item index.
pub fn rank_cmp(a: (u32, f64), b: (u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top-`k` `(item, score)` pairs, best first.
pub fn top_k(candidates: &[u32], scores: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut pairs: Vec<(u32, f64)> = candidates.iter().copied().zip(scores.iter().copied()).collect();
    let k = k.min(pairs.len());
    if k == 0 {
        return Vec::new();
    }
    if k < pairs.len() {
        pairs.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(a, b));
        pairs.truncate(k);
    }
    pairs.sort_by(|&a, &b| rank_cmp(a, b));
    pairs
}
