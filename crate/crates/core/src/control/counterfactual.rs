use super::ControlError;
use crate::data::Dataset;
use crate::model::{ItemTable, Model, Role, RoleSet, UserEdit, UserScorer};

/// `(1 − α)·factual + α·masked`.
#[inline]
pub fn blend(factual: f64, masked: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * factual + alpha * masked
}

fn check_alpha(alpha: f64) -> Result<(), ControlError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ControlError::InvalidCommand(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Scores of `u′` (user after the edit) and `û′` (same, user-ID role masked) over a candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualScores {
    pub candidates: Vec<u32>,
    pub factual: Vec<f64>,
    pub masked: Vec<f64>,
}

impl CounterfactualScores {
    pub fn compute(
        model: &Model,
        items: &ItemTable,
        dataset: &Dataset,
        user: u32,
        edit: &UserEdit,
        candidates: Vec<u32>,
    ) -> Result<Self, ControlError> {
        let f = UserScorer::new(model, items, dataset, user, RoleSet::EMPTY, edit)?;
        let m = UserScorer::new(model, items, dataset, user, RoleSet::of(&[Role::UserId]), edit)?;
        Ok(CounterfactualScores {
            factual: f.score_all(&candidates),
            masked: m.score_all(&candidates),
            candidates,
        })
    }

    /// Blended score per candidate.
    pub fn blend(&self, alpha: f64) -> Vec<f64> {
        self.factual.iter().zip(&self.masked).map(|(&f, &m)| blend(f, m, alpha)).collect()
    }
}

/// `(1 − α)·f(u′, i) + α·f(û′, i)` with `f = sigmoid(raw score)`.
pub fn counterfactual_score(
    model: &Model,
    items: &ItemTable,
    dataset: &Dataset,
    user: u32,
    item: u32,
    alpha: f64,
    edit: &UserEdit,
) -> Result<f64, ControlError> {
    check_alpha(alpha)?;
    if item as usize >= dataset.n_items() {
        return Err(ControlError::InvalidCommand(format!("item index {item} out of range")));
    }
    let s = CounterfactualScores::compute(model, items, dataset, user, edit, vec![item])?;
    Ok(blend(s.factual[0], s.masked[0], alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use crate::model::{assemble_features, init_rng, FeatureLayout, FmParams, Params, ScoringRequest};

    #[test]
    fn affine_example() {
        assert!((blend(0.8, 0.4, 0.3) - 0.68).abs() < 1e-15);
    }

    #[test]
    fn endpoints_and_affinity() {
        let d = fixtures::tiny();
        let layout = FeatureLayout::for_dataset(&d);
        let m = Model {
            layout,
            params: Params::Fm(FmParams::init(layout.len(), 4, 0.5, &mut init_rng(2))),
        };
        let t = ItemTable::new(&m, &d);
        let edit = UserEdit::Override(vec![0, 1, 1, 0, 0]);
        for item in 0..5 {
            let f = counterfactual_score(&m, &t, &d, 0, item, 0.0, &edit).unwrap();
            let g = counterfactual_score(&m, &t, &d, 0, item, 1.0, &edit).unwrap();
            let plain = ScoringRequest {
                edit: edit.clone(),
                ..ScoringRequest::plain(0, item)
            };
            let masked = ScoringRequest {
                mask_roles: RoleSet::of(&[Role::UserId]),
                ..plain.clone()
            };
            assert!((f - m.predict(&assemble_features(&plain, &layout, &d).unwrap())).abs() < 1e-12);
            assert!((g - m.predict(&assemble_features(&masked, &layout, &d).unwrap())).abs() < 1e-12);
            let mid = counterfactual_score(&m, &t, &d, 0, item, 0.37, &edit).unwrap();
            assert!((mid - (f + 0.37 * (g - f))).abs() < 1e-12);
        }
        assert!(counterfactual_score(&m, &t, &d, 0, 0, 1.2, &edit).is_err());
        assert!(counterfactual_score(&m, &t, &d, 0, 0, 0.5, &UserEdit::Override(vec![1, 1, 0, 1, 0])).is_err());
    }
}
