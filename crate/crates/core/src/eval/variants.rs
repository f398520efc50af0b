use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cohort::CohortUser;
use super::config::{Grids, Scenario, Variant};
use super::EvalError;
use crate::control::{
    item_policy, policy_ranking, rank_with_policy, CategoryPredictor, ControlCommand, ControlContext,
    CounterfactualScores, RankedItem, Regularizer,
};
use crate::data::Dataset;
use crate::detect::{Provenance, RecommendationSlate};
use crate::model::{top_k, EvalSplit, ItemTable, Model, RoleSet, UserEdit, UserScorer};

/// Size of the base-scored pool the diversity baseline re-ranks.
pub const DIVERSITY_POOL: usize = 100;
/// Weight of the similarity penalty against the base score in the diversity baseline.
pub const DIVERSITY_WEIGHT: f64 = 0.5;

/// Hook for re-ranking baselines implemented outside this crate (Fairco is the
/// intended occupant).
pub trait SlateReranker: Send + Sync {
    /// Top-`k` items from `candidates`, given their base-model scores.
    fn rerank(&self, dataset: &Dataset, user: &CohortUser, candidates: &[u32], scores: &[f64], k: usize) -> Vec<u32>;
}

/// Control coefficients of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub k_targets: usize,
}

impl GridPoint {
    pub const OFF: GridPoint = GridPoint {
        alpha: 0.0,
        beta: 0.0,
        k_targets: 1,
    };
}

/// Cartesian grid over the coefficients `variant` tunes; `[OFF]` for untuned variants.
pub fn grid_points(variant: Variant, grids: &Grids) -> Vec<GridPoint> {
    let t = variant.tuned();
    let pick_f = |on: bool, g: &[f64]| if on { g.to_vec() } else { vec![0.0] };
    let alphas = pick_f(t.alpha, &grids.alpha);
    let betas = pick_f(t.beta, &grids.beta);
    let ks = if t.k_targets { grids.k_targets.clone() } else { vec![1] };
    let mut out = Vec::with_capacity(alphas.len() * betas.len() * ks.len());
    for &k_targets in &ks {
        for &alpha in &alphas {
            for &beta in &betas {
                out.push(GridPoint { alpha, beta, k_targets });
            }
        }
    }
    out
}

/// A trained model with its per-item partial sums.
pub struct Scored<'a> {
    pub model: &'a Model,
    pub items: &'a ItemTable,
}

/// Everything one seed's variants are evaluated against.
pub struct EvalContext<'a> {
    pub dataset: &'a Dataset,
    pub scenario: Scenario,
    pub base: Scored<'a>,
    pub wo_uf: Option<Scored<'a>>,
    pub wo_if: Option<Scored<'a>>,
    pub predictor: Option<&'a CategoryPredictor>,
    pub external: Option<&'a dyn SlateReranker>,
    /// Seed of the random baseline.
    pub seed: u64,
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, EvalError> {
    v.ok_or_else(|| EvalError::Unsupported(format!("cohort user lacks {what}")))
}

impl<'a> EvalContext<'a> {
    fn control(&self) -> ControlContext<'a> {
        ControlContext::new(self.base.model, self.base.items, self.dataset).with_predictor(self.predictor)
    }

    /// Command a control variant issues for `cu` at `p`; `None` for non-control variants.
    pub fn command(&self, variant: Variant, cu: &CohortUser, p: &GridPoint) -> Result<Option<ControlCommand>, EvalError> {
        let fine = |alpha: f64| -> Result<ControlCommand, EvalError> {
            Ok(ControlCommand::ItemFine {
                target_category: need(cu.target_category, "a target category")?,
                beta: p.beta,
                alpha: Some(alpha),
            })
        };
        let coarse = |alpha: f64, predict: bool| -> Result<ControlCommand, EvalError> {
            Ok(ControlCommand::ItemCoarse {
                beta: p.beta,
                k_targets: p.k_targets,
                use_prediction: predict,
                demoted: Some(need(cu.demoted, "a train majority category")?),
                alpha: Some(alpha),
            })
        };
        let user_cmd = |alpha: f64, fine: bool| -> Result<ControlCommand, EvalError> {
            Ok(if fine {
                ControlCommand::UserFine {
                    target_feature: need(cu.target_feature, "a target feature")?,
                    alpha,
                }
            } else {
                ControlCommand::UserCoarse {
                    own_feature: need(cu.own_feature, "an own feature")?,
                    alpha,
                }
            })
        };
        let cmd = match variant {
            Variant::ChangeUF => user_cmd(0.0, true)?,
            Variant::MaskUF => user_cmd(0.0, false)?,
            Variant::Uci => user_cmd(p.alpha, self.scenario == Scenario::UserFine)?,
            Variant::Reranking if self.scenario == Scenario::ItemFine => fine(0.0)?,
            Variant::Reranking => coarse(0.0, false)?,
            Variant::FUci => fine(p.alpha)?,
            Variant::FUciNoCi => fine(0.0)?,
            Variant::CUci => coarse(p.alpha, true)?,
            Variant::CUciNoCi => coarse(0.0, true)?,
            _ => return Ok(None),
        };
        Ok(Some(cmd))
    }

    fn factual(&self, scored: &Scored<'_>, user: u32, cands: &[u32]) -> Result<Vec<f64>, EvalError> {
        let s = UserScorer::new(scored.model, scored.items, self.dataset, user, RoleSet::EMPTY, &UserEdit::None)
            .map_err(crate::control::ControlError::from)?;
        Ok(s.score_all(cands))
    }

    /// One top-`k` slate per grid point for `cu`, ranked over the all-ranking
    /// candidates of `split`.
    pub fn slates(
        &self,
        variant: Variant,
        cu: &CohortUser,
        split: EvalSplit,
        points: &[GridPoint],
        k: usize,
    ) -> Result<Vec<RecommendationSlate>, EvalError> {
        let user = cu.user;
        let cands = self.dataset.candidates(user, split == EvalSplit::Test);
        let plain = |ranked: Vec<RankedItem>, short: bool, source: &str| RecommendationSlate {
            user,
            items: ranked.iter().map(|r| r.item).collect(),
            scores: ranked.iter().map(|r| r.adjusted).collect(),
            provenance: Provenance {
                source: source.into(),
                ..Default::default()
            },
            short,
        };
        let single = |slate: RecommendationSlate| vec![slate; points.len()];
        match variant {
            Variant::Base | Variant::WoUF | Variant::WoIF => {
                let scored = match variant {
                    Variant::Base => &self.base,
                    Variant::WoUF => need_model(&self.wo_uf, variant)?,
                    _ => need_model(&self.wo_if, variant)?,
                };
                let y = self.factual(scored, user, &cands)?;
                let (ranked, short) = rank_with_policy(&cands, &y, &vec![1; cands.len()], 0.0, k);
                Ok(single(plain(ranked, short, variant.name())))
            }
            Variant::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (user as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let n = k.min(cands.len());
                let idx = rand::seq::index::sample(&mut rng, cands.len(), n);
                let items: Vec<u32> = idx.iter().map(|i| cands[i]).collect();
                Ok(single(RecommendationSlate {
                    user,
                    scores: vec![0.0; items.len()],
                    items,
                    provenance: Provenance {
                        source: variant.name().into(),
                        ..Default::default()
                    },
                    short: cands.len() < k,
                }))
            }
            Variant::Diversity => {
                let y = self.factual(&self.base, user, &cands)?;
                let (items, scores) = diversify(self.dataset, &cands, &y, k);
                Ok(single(RecommendationSlate {
                    user,
                    items,
                    scores,
                    provenance: Provenance {
                        source: variant.name().into(),
                        ..Default::default()
                    },
                    short: cands.len() < k,
                }))
            }
            Variant::Fairco => {
                let ext = self.external.ok_or_else(|| {
                    EvalError::Unsupported("Fairco is an extension point; register a SlateReranker".into())
                })?;
                let y = self.factual(&self.base, user, &cands)?;
                let mut items = ext.rerank(self.dataset, cu, &cands, &y, k);
                items.truncate(k);
                Ok(single(RecommendationSlate {
                    user,
                    scores: vec![0.0; items.len()],
                    items,
                    provenance: Provenance {
                        source: variant.name().into(),
                        ..Default::default()
                    },
                    short: cands.len() < k,
                }))
            }
            _ => self.control_slates(variant, cu, cands, points, k),
        }
    }

    fn control_slates(
        &self,
        variant: Variant,
        cu: &CohortUser,
        cands: Vec<u32>,
        points: &[GridPoint],
        k: usize,
    ) -> Result<Vec<RecommendationSlate>, EvalError> {
        let ctx = self.control();
        let user = cu.user;
        let first = self
            .command(variant, cu, points.first().unwrap_or(&GridPoint::OFF))?
            .expect("control variant");
        first.validate_for(self.dataset, user)?;
        // the edit depends only on the cohort user, so scores are shared by every point
        let edit = first.user_edit(self.dataset, user);
        let scores = CounterfactualScores::compute(self.base.model, self.base.items, self.dataset, user, &edit, cands)?;
        let mut policies: BTreeMap<usize, (Regularizer, Vec<usize>, Option<usize>, bool)> = BTreeMap::new();
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            let cmd = self.command(variant, cu, p)?.expect("control variant");
            cmd.validate_for(self.dataset, user)?;
            let alpha = match cmd {
                ControlCommand::UserFine { alpha, .. } | ControlCommand::UserCoarse { alpha, .. } => alpha,
                ControlCommand::ItemFine { alpha, .. } | ControlCommand::ItemCoarse { alpha, .. } => {
                    alpha.unwrap_or(ctx.item_alpha)
                }
            };
            let (reg, targets, demoted, predicted) = match policies.get(&p.k_targets) {
                Some(cached) => cached.clone(),
                None => {
                    let pol = item_policy(&ctx, user, &cmd)?;
                    let entry = (pol.regularizer, pol.targets, pol.demoted, pol.predicted);
                    policies.insert(p.k_targets, entry.clone());
                    entry
                }
            };
            let is_item = !self.scenario.is_user();
            let beta = if is_item { p.beta } else { 0.0 };
            let (ranked, short) = policy_ranking(self.dataset, &scores, alpha, &reg, beta, k);
            out.push(RecommendationSlate {
                user,
                items: ranked.iter().map(|r| r.item).collect(),
                scores: ranked.iter().map(|r| r.adjusted).collect(),
                provenance: Provenance {
                    source: variant.name().into(),
                    alpha: Some(alpha),
                    beta: is_item.then_some(beta),
                    targets,
                    demoted,
                    predicted_targets: predicted,
                },
                short,
            });
        }
        Ok(out)
    }
}

fn need_model<'s, 'a>(m: &'s Option<Scored<'a>>, v: Variant) -> Result<&'s Scored<'a>, EvalError> {
    m.as_ref()
        .ok_or_else(|| EvalError::Unsupported(format!("{v} needs its ablated model")))
}

fn cosine(a: &[u16], b: &[u16]) -> f64 {
    let common = a.iter().filter(|c| b.binary_search(c).is_ok()).count();
    common as f64 / ((a.len() * b.len()) as f64).sqrt()
}

/// Greedy topic diversification: from the top-[`DIVERSITY_POOL`] items by base
/// score, repeatedly add the item maximizing
/// `(1 − w)·Y − w·mean cos(categories, chosen)`, ties to higher `Y` then lower index.
pub fn diversify(dataset: &Dataset, candidates: &[u32], scores: &[f64], k: usize) -> (Vec<u32>, Vec<f64>) {
    let mut pool = top_k(candidates, scores, DIVERSITY_POOL);
    let mut items = Vec::with_capacity(k);
    let mut objective = Vec::with_capacity(k);
    let w = DIVERSITY_WEIGHT;
    while items.len() < k && !pool.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &(item, y)) in pool.iter().enumerate() {
            let cats = &dataset.item_profiles[item as usize].categories;
            let sim = if items.is_empty() {
                0.0
            } else {
                items
                    .iter()
                    .map(|&j: &u32| cosine(cats, &dataset.item_profiles[j as usize].categories))
                    .sum::<f64>()
                    / items.len() as f64
            };
            let v = (1.0 - w) * y - w * sim;
            // pool is already in (score desc, index asc) order, so strict `>` keeps the tie rule
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((pos, v));
            }
        }
        let (pos, v) = best.expect("non-empty pool");
        items.push(pool.remove(pos).0);
        objective.push(v);
    }
    (items, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{apply_control, baseline_slate};
    use crate::data::fixtures;
    use crate::eval::cohort::select_cohort;
    use crate::model::{init_rng, FeatureLayout, FmParams, Params};

    fn model(d: &Dataset) -> Model {
        let layout = FeatureLayout::for_dataset(d);
        Model {
            layout,
            params: Params::Fm(FmParams::init(layout.len(), 4, 0.5, &mut init_rng(3))),
        }
    }

    fn ctx<'a>(d: &'a Dataset, m: &'a Model, t: &'a ItemTable, scenario: Scenario) -> EvalContext<'a> {
        EvalContext {
            dataset: d,
            scenario,
            base: Scored { model: m, items: t },
            wo_uf: None,
            wo_if: None,
            predictor: None,
            external: None,
            seed: 1,
        }
    }

    #[test]
    fn grid_shapes() {
        let g = Grids::default();
        assert_eq!(grid_points(Variant::Base, &g), vec![GridPoint::OFF]);
        assert_eq!(grid_points(Variant::Uci, &g).len(), 6);
        assert_eq!(grid_points(Variant::Reranking, &g).len(), 11);
        assert_eq!(grid_points(Variant::CUci, &g).len(), 6 * 11 * 5);
        assert!(grid_points(Variant::Reranking, &g).iter().all(|p| p.alpha == 0.0));
    }

    #[test]
    fn control_variants_match_apply_control_on_test() {
        let d = fixtures::tiny();
        let m = model(&d);
        let t = ItemTable::new(&m, &d);
        for scenario in [Scenario::ItemFine, Scenario::ItemCoarse, Scenario::UserFine, Scenario::UserCoarse] {
            let e = ctx(&d, &m, &t, scenario);
            let cohort = select_cohort(scenario, &d, None).unwrap();
            let variants: &[Variant] = if scenario.is_user() {
                &[Variant::Uci, Variant::ChangeUF, Variant::MaskUF]
            } else {
                &[Variant::Reranking, Variant::FUci, Variant::FUciNoCi]
            };
            for &v in variants {
                if !v.applies_to(scenario) {
                    continue;
                }
                for cu in &cohort.users {
                    let pts = grid_points(v, &Grids::default());
                    let got = e.slates(v, cu, EvalSplit::Test, &pts, 3).unwrap();
                    for (p, s) in pts.iter().zip(&got) {
                        let cmd = e.command(v, cu, p).unwrap().unwrap();
                        let want = apply_control(&e.control(), cu.user, &cmd, 3).unwrap();
                        assert_eq!(s.items, want.items, "{v} {p:?}");
                        assert_eq!(s.scores, want.scores);
                    }
                }
            }
        }
    }

    #[test]
    fn off_point_reproduces_base() {
        let d = fixtures::tiny();
        let m = model(&d);
        let t = ItemTable::new(&m, &d);
        let e = ctx(&d, &m, &t, Scenario::ItemCoarse);
        let cohort = select_cohort(Scenario::ItemCoarse, &d, None).unwrap();
        for cu in &cohort.users {
            let base = e.slates(Variant::Base, cu, EvalSplit::Test, &[GridPoint::OFF], 3).unwrap();
            let rr = e.slates(Variant::Reranking, cu, EvalSplit::Test, &[GridPoint::OFF], 3).unwrap();
            let direct = baseline_slate(&e.control(), cu.user, 3).unwrap();
            assert_eq!(base[0].items, rr[0].items);
            assert_eq!(base[0].scores, rr[0].scores);
            assert_eq!(base[0].items, direct.items);
        }
    }

    #[test]
    fn random_is_seeded_and_within_candidates() {
        let d = fixtures::tiny();
        let m = model(&d);
        let t = ItemTable::new(&m, &d);
        let e = ctx(&d, &m, &t, Scenario::ItemFine);
        let cu = CohortUser {
            user: 2,
            own_feature: None,
            target_feature: None,
            demoted: Some(2),
            target_category: Some(0),
        };
        let a = e.slates(Variant::Random, &cu, EvalSplit::Test, &[GridPoint::OFF], 3).unwrap();
        let b = e.slates(Variant::Random, &cu, EvalSplit::Test, &[GridPoint::OFF], 3).unwrap();
        assert_eq!(a, b);
        let cands = d.candidates(2, true);
        assert_eq!(a[0].items.len(), 3);
        assert!(a[0].items.iter().all(|i| cands.contains(i)));
    }

    #[test]
    fn fairco_without_reranker_is_unsupported() {
        let d = fixtures::tiny();
        let m = model(&d);
        let t = ItemTable::new(&m, &d);
        let e = ctx(&d, &m, &t, Scenario::ItemFine);
        let cohort = select_cohort(Scenario::ItemFine, &d, None).unwrap();
        let r = e.slates(Variant::Fairco, &cohort.users[0], EvalSplit::Test, &[GridPoint::OFF], 3);
        assert!(matches!(r, Err(EvalError::Unsupported(_))));
    }

    #[test]
    fn diversify_hand_example() {
        let d = fixtures::tiny();
        // items: 0 {action}, 1 {action, comedy}, 2 {comedy}, 3 {drama}, 4 {comedy, drama}
        let cands = [0, 1, 2, 3, 4];
        let y = [0.9, 0.85, 0.5, 0.3, 0.6];
        let (items, obj) = diversify(&d, &cands, &y, 3);
        // step 1: 0.45 for item 0
        // step 2: item 1 → 0.425 − 0.5·0.7071 = 0.0714; item 2 → 0.25; item 3 → 0.15; item 4 → 0.30
        // step 3 (chosen 0, 4): item 1 → 0.425 − 0.25·(0.7071 + 0.5) = 0.1232; item 2 → 0.25 − 0.25·0.7071 = 0.0732;
        //   item 3 → 0.15 − 0.25·0.7071 = −0.0268
        assert_eq!(items, vec![0, 4, 1]);
        assert!((obj[0] - 0.45).abs() < 1e-12);
        assert!((obj[1] - 0.30).abs() < 1e-12);
        assert!((obj[2] - (0.425 - 0.25 * (0.5f64.sqrt() + 0.5))).abs() < 1e-12);
    }
}
