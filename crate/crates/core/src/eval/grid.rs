use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::config::Variant;
use super::table::{average, user_metrics, UserMetrics};
use super::variants::{EvalContext, GridPoint};
use super::EvalError;
use crate::detect::mean;
use crate::model::EvalSplit;

/// One line of `grid_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLogEntry {
    /// `train` or `control`.
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub valid_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_ndcg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

/// Outcome of picking the best grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice<T> {
    pub best: T,
    pub index: usize,
    /// Mean validation score of the winner over seeds.
    pub score: Option<f64>,
    /// The runner-up lies within the seed-to-seed spread of the winner or runner-up.
    pub tie: bool,
}

fn spread(xs: &[f64]) -> f64 {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Highest mean score wins (earliest cell on exact ties); cells without any score rank last.
///
/// `scores[cell][seed]`.
pub fn choose_best<T: Clone>(cells: &[T], scores: &[Vec<Option<f64>>]) -> Result<GridChoice<T>, EvalError> {
    if cells.is_empty() || cells.len() != scores.len() {
        return Err(EvalError::Config("grid must be non-empty with one score row per cell".into()));
    }
    let means: Vec<Option<f64>> = scores.iter().map(|s| mean(s.iter().flatten().copied())).collect();
    let key = |i: usize| means[i].unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let best = order[0];
    let tie = order.get(1).is_some_and(|&second| {
        let (Some(a), Some(b)) = (means[best], means[second]) else {
            return false;
        };
        let vals = |i: usize| scores[i].iter().flatten().copied().collect::<Vec<_>>();
        a - b <= spread(&vals(best)).max(spread(&vals(second)))
    });
    Ok(GridChoice {
        best: cells[best].clone(),
        index: best,
        score: means[best],
        tie,
    })
}

fn point_params(p: &GridPoint) -> serde_json::Map<String, serde_json::Value> {
    match serde_json::to_value(p) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => serde_json::Map::new(),
    }
}

/// Macro-averaged validation metrics of `variant` at every point, for one seed.
pub fn sweep(
    ctx: &EvalContext<'_>,
    cohort: &Cohort,
    variant: Variant,
    points: &[GridPoint],
    k: usize,
) -> Result<Vec<UserMetrics>, EvalError> {
    let per_user: Vec<Vec<UserMetrics>> = cohort
        .users
        .par_iter()
        .map(|cu| {
            let slates = ctx.slates(variant, cu, EvalSplit::Valid, points, k)?;
            Ok(slates
                .iter()
                .map(|s| user_metrics(&s.items, cu, ctx.dataset, EvalSplit::Valid, k))
                .collect())
        })
        .collect::<Result<_, EvalError>>()?;
    Ok((0..points.len())
        .map(|p| average(&per_user.iter().map(|u| u[p].clone()).collect::<Vec<_>>()))
        .collect())
}

/// Exhaustive search over `points` by mean validation Recall@k across the seed contexts.
pub fn tune_variant(
    contexts: &[EvalContext<'_>],
    cohort: &Cohort,
    variant: Variant,
    points: &[GridPoint],
    k: usize,
) -> Result<(GridChoice<GridPoint>, Vec<GridLogEntry>), EvalError> {
    let mut log = Vec::new();
    let mut scores = vec![Vec::with_capacity(contexts.len()); points.len()];
    for ctx in contexts {
        let ms = sweep(ctx, cohort, variant, points, k)?;
        for (i, (p, m)) in points.iter().zip(ms).enumerate() {
            scores[i].push(m.recall);
            log.push(GridLogEntry {
                stage: "control".into(),
                variant: Some(variant.name().into()),
                seed: ctx.seed,
                params: point_params(p),
                valid_recall: m.recall,
                valid_ndcg: m.ndcg,
                tcd: m.tcd,
                mcd: m.mcd,
                coverage: Some(m.coverage),
            });
        }
    }
    let choice = choose_best(points, &scores)?;
    if choice.tie && points.len() > 1 {
        log::warn!("{variant}: best grid cell {:?} is tied within seed noise", choice.best);
    }
    Ok((choice, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::CategoryPredictor;
    use crate::data::fixtures;
    use crate::eval::cohort::select_cohort;
    use crate::eval::config::{Grids, Scenario};
    use crate::eval::variants::{grid_points, Scored};
    use crate::model::{init_rng, FeatureLayout, FmParams, ItemTable, Model, Params};

    #[test]
    fn singleton_grid_returns_it() {
        let c = choose_best(&["only"], &[vec![None]]).unwrap();
        assert_eq!(c.best, "only");
        assert!(!c.tie);
    }

    #[test]
    fn picks_highest_mean_and_flags_ties() {
        let cells = [1, 2, 3];
        let clear = [vec![Some(0.1), Some(0.1)], vec![Some(0.5), Some(0.5)], vec![Some(0.2), Some(0.2)]];
        let c = choose_best(&cells, &clear).unwrap();
        assert_eq!((c.best, c.tie), (2, false));
        let noisy = [vec![Some(0.1), Some(0.5)], vec![Some(0.3), Some(0.4)], vec![None, None]];
        let c = choose_best(&cells, &noisy).unwrap();
        assert_eq!((c.best, c.tie), (2, true));
        let equal = [vec![Some(0.3)], vec![Some(0.3)]];
        assert_eq!(choose_best(&[7, 8], &equal).unwrap().best, 7);
    }

    #[test]
    fn logged_tcd_is_monotone_in_beta() {
        let d = fixtures::tiny();
        let layout = FeatureLayout::for_dataset(&d);
        let m = Model {
            layout,
            params: Params::Fm(FmParams::init(layout.len(), 4, 0.5, &mut init_rng(5))),
        };
        let t = ItemTable::new(&m, &d);
        let pred = CategoryPredictor::init(d.n_categories(), 4, 6);
        let ctx = EvalContext {
            dataset: &d,
            scenario: Scenario::ItemFine,
            base: Scored { model: &m, items: &t },
            wo_uf: None,
            wo_if: None,
            predictor: Some(&pred),
            external: None,
            seed: 1,
        };
        let cohort = select_cohort(Scenario::ItemFine, &d, None).unwrap();
        let pts = grid_points(Variant::FUciNoCi, &Grids::default());
        let (_, log) = tune_variant(&[ctx], &cohort, Variant::FUciNoCi, &pts, 2).unwrap();
        let tcds: Vec<f64> = log.iter().map(|e| e.tcd.unwrap()).collect();
        assert!(tcds.windows(2).all(|w| w[0] <= w[1]), "{tcds:?}");
    }
}
