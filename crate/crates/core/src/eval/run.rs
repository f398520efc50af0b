use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{select_cohort, Cohort};
use super::config::{ExperimentConfig, Variant};
use super::grid::{choose_best, tune_variant, GridLogEntry};
use super::table::{emit_table, merge_seeds, ResultTable};
use super::variants::{grid_points, EvalContext, GridPoint, Scored, SlateReranker};
use super::EvalError;
use crate::control::{train_category_predictor, CategoryPredictor};
use crate::data::{load_dataset, Dataset};
use crate::detect::{write_slates, RecommendationSlate};
use crate::model::{train, EvalSplit, FeatureLayout, ItemTable, Model, ModelKind, Role, TrainConfig};

/// Training hyperparameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPoint {
    pub learning_rate: f64,
    pub l2: f64,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GridPoint>,
    pub tie: bool,
    /// Test slates of the first seed, one per cohort user.
    #[serde(skip)]
    pub slates: Vec<RecommendationSlate>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cohort: Cohort,
    pub train_point: TrainPoint,
    pub variants: Vec<VariantOutcome>,
    pub table: ResultTable,
    pub grid_log: Vec<GridLogEntry>,
}

/// Frozen models and predictor of an experiment, per seed.
pub struct Trained {
    pub seeds: Vec<u64>,
    pub base: Vec<Model>,
    pub wo_uf: Vec<Model>,
    pub wo_if: Vec<Model>,
    pub predictor: Option<CategoryPredictor>,
    pub point: TrainPoint,
}

fn train_config(base: &TrainConfig, p: &TrainPoint, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: p.learning_rate,
        l2: p.l2,
        hidden: p.hidden,
        seed,
        ..base.clone()
    }
}

fn train_points(cfg: &ExperimentConfig) -> Vec<TrainPoint> {
    // FM has no hidden layer, so its hidden grid collapses to one value
    let hidden = if cfg.model == ModelKind::Nfm {
        cfg.grids.hidden.clone()
    } else {
        cfg.grids.hidden[..1].to_vec()
    };
    let mut out = Vec::new();
    for &learning_rate in &cfg.grids.learning_rate {
        for &l2 in &cfg.grids.l2 {
            for &h in &hidden {
                out.push(TrainPoint {
                    learning_rate,
                    l2,
                    hidden: h,
                });
            }
        }
    }
    out
}

/// Trains (or loads) every model the requested variants need; the training grid
/// is searched by validation Recall@k of the full-layout model.
pub fn train_models(cfg: &ExperimentConfig, dataset: &Dataset, log: &mut Vec<GridLogEntry>) -> Result<Trained, EvalError> {
    let full = FeatureLayout::for_dataset(dataset);
    let needs = |v: Variant| cfg.variants.contains(&v);
    let (base, point) = if let Some(path) = &cfg.checkpoint {
        let (model, header) = Model::load(path)?;
        model.layout.check_dataset(dataset)?;
        info!("loaded {} model from {}", header.kind, path.display());
        let point = TrainPoint {
            learning_rate: cfg.train.learning_rate,
            l2: cfg.train.l2,
            hidden: header.hidden,
        };
        (vec![model], point)
    } else {
        let points = train_points(cfg);
        let mut models: Vec<Vec<Model>> = Vec::with_capacity(points.len());
        let mut scores: Vec<Vec<Option<f64>>> = Vec::with_capacity(points.len());
        for p in &points {
            let mut per_seed = Vec::new();
            let mut s = Vec::new();
            for &seed in &cfg.seeds {
                let (model, tl) = train(dataset, &train_config(&cfg.train, p, seed), cfg.model, full)?;
                info!("trained {} {p:?} seed {seed}: best epoch {}, valid recall {:?}", cfg.model, tl.best_epoch, tl.best_valid_recall);
                let mut params = serde_json::Map::new();
                params.insert("learning_rate".into(), p.learning_rate.into());
                params.insert("l2".into(), p.l2.into());
                params.insert("hidden".into(), p.hidden.into());
                params.insert("best_epoch".into(), tl.best_epoch.into());
                log.push(GridLogEntry {
                    stage: "train".into(),
                    variant: None,
                    seed,
                    params,
                    valid_recall: tl.best_valid_recall,
                    valid_ndcg: None,
                    tcd: None,
                    mcd: None,
                    coverage: None,
                });
                s.push(tl.best_valid_recall);
                per_seed.push(model);
            }
            models.push(per_seed);
            scores.push(s);
        }
        let choice = choose_best(&points, &scores)?;
        if choice.tie && points.len() > 1 {
            log::warn!("training grid: best cell {:?} is tied within seed noise", choice.best);
        }
        (models.swap_remove(choice.index), choice.best)
    };
    let ablated = |role: Role| -> Result<Vec<Model>, EvalError> {
        cfg.seeds
            .iter()
            .map(|&seed| {
                let (m, _) = train(dataset, &train_config(&cfg.train, &point, seed), cfg.model, full.without(role))?;
                Ok(m)
            })
            .collect()
    };
    let wo_uf = if needs(Variant::WoUF) { ablated(Role::UserAttr)? } else { Vec::new() };
    let wo_if = if needs(Variant::WoIF) { ablated(Role::ItemCat)? } else { Vec::new() };
    let predictor = if needs(Variant::CUci) || needs(Variant::CUciNoCi) {
        Some(match &cfg.predictor_checkpoint {
            Some(p) => CategoryPredictor::load(p)?,
            None => train_category_predictor(dataset, &cfg.predictor)?.0,
        })
    } else {
        None
    };
    Ok(Trained {
        seeds: cfg.seeds.clone(),
        base,
        wo_uf,
        wo_if,
        predictor,
        point,
    })
}

/// Runs every requested variant on the scenario cohort against already trained models.
pub fn evaluate(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    trained: &Trained,
    external: Option<&dyn SlateReranker>,
    log: &mut Vec<GridLogEntry>,
) -> Result<(Cohort, Vec<VariantOutcome>, ResultTable), EvalError> {
    let cohort = select_cohort(cfg.scenario, dataset, cfg.attribute())?;
    info!("{} cohort: {} users", cfg.scenario, cohort.len());
    let tables_of = |ms: &[Model]| ms.iter().map(|m| ItemTable::new(m, dataset)).collect::<Vec<_>>();
    let (bt, ut, it) = (tables_of(&trained.base), tables_of(&trained.wo_uf), tables_of(&trained.wo_if));
    let contexts: Vec<EvalContext<'_>> = (0..trained.base.len())
        .map(|s| EvalContext {
            dataset,
            scenario: cfg.scenario,
            base: Scored {
                model: &trained.base[s],
                items: &bt[s],
            },
            wo_uf: trained.wo_uf.get(s).map(|m| Scored { model: m, items: &ut[s] }),
            wo_if: trained.wo_if.get(s).map(|m| Scored { model: m, items: &it[s] }),
            predictor: trained.predictor.as_ref(),
            external,
            seed: trained.seeds[s],
        })
        .collect();

    let test_slates = |ctx: &EvalContext<'_>, v: Variant, p: GridPoint| -> Result<Vec<RecommendationSlate>, EvalError> {
        cohort
            .users
            .par_iter()
            .map(|cu| Ok(ctx.slates(v, cu, EvalSplit::Test, &[p], cfg.k)?.remove(0)))
            .collect()
    };

    let mut outcomes = Vec::with_capacity(cfg.variants.len());
    let mut per_seed: Vec<Vec<Vec<RecommendationSlate>>> = vec![Vec::new(); contexts.len()];
    for &v in &cfg.variants {
        let points = grid_points(v, &cfg.grids);
        let (point, tie) = if points.len() > 1 {
            let (choice, entries) = tune_variant(&contexts, &cohort, v, &points, cfg.k)?;
            info!("{v}: selected {:?} (valid recall {:?})", choice.best, choice.score);
            log.extend(entries);
            (choice.best, choice.tie)
        } else {
            (points[0], false)
        };
        for (s, ctx) in contexts.iter().enumerate() {
            per_seed[s].push(test_slates(ctx, v, point)?);
        }
        outcomes.push(VariantOutcome {
            variant: v,
            point: v.tuned().any().then_some(point),
            tie,
            slates: per_seed[0].last().cloned().unwrap_or_default(),
        });
    }

    let mut tables = Vec::with_capacity(contexts.len());
    for (s, ctx) in contexts.iter().enumerate() {
        let reference = match cfg.variants.iter().position(|&v| v == Variant::Base) {
            Some(i) => per_seed[s][i].clone(),
            None => test_slates(ctx, Variant::Base, GridPoint::OFF)?,
        };
        let rows: Vec<(String, Option<GridPoint>, &[RecommendationSlate])> = outcomes
            .iter()
            .zip(&per_seed[s])
            .map(|(o, sl)| (o.variant.name().to_string(), o.point, sl.as_slice()))
            .collect();
        tables.push(emit_table(&cohort, dataset, cfg.k, &rows, Some(&reference))?);
    }
    let mut table = merge_seeds(tables)?;
    table.model = Some(cfg.model.to_string());
    Ok((cohort, outcomes, table))
}

/// Loads the dataset, trains, tunes and evaluates.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    external: Option<&dyn SlateReranker>,
) -> Result<(Dataset, ExperimentOutput), EvalError> {
    cfg.validate()?;
    let (dataset, _) = load_dataset(&cfg.data)?;
    let mut grid_log = Vec::new();
    let trained = train_models(cfg, &dataset, &mut grid_log)?;
    let (cohort, variants, table) = evaluate(cfg, &dataset, &trained, external, &mut grid_log)?;
    Ok((
        dataset,
        ExperimentOutput {
            cohort,
            train_point: trained.point,
            variants,
            table,
            grid_log,
        },
    ))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `table.json`, `table.txt`, `grid_log.jsonl`, `selection.json` and
/// `slates/<variant>.tsv` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    let slate_dir = dir.join("slates");
    fs::create_dir_all(&slate_dir).map_err(io_err(&slate_dir))?;
    write_json(&dir.join("table.json"), &out.table)?;
    let txt = dir.join("table.txt");
    fs::write(&txt, out.table.render_text()).map_err(io_err(&txt))?;
    let selection = serde_json::json!({
        "train": out.train_point,
        "cohort_size": out.cohort.len(),
        "variants": out.variants,
    });
    write_json(&dir.join("selection.json"), &selection)?;
    let log_path = dir.join("grid_log.jsonl");
    let mut f = std::io::BufWriter::new(fs::File::create(&log_path).map_err(io_err(&log_path))?);
    for e in &out.grid_log {
        let line = serde_json::to_string(e).map_err(|e| EvalError::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(io_err(&log_path))?;
    }
    f.flush().map_err(io_err(&log_path))?;
    for v in &out.variants {
        write_slates(slate_dir.join(format!("{}.tsv", v.variant.name())), &v.slates, dataset)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EvalError::Config(e.to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}
