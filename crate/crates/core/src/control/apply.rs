use super::command::ControlCommand;
use super::counterfactual::CounterfactualScores;
use super::policy::{rank_with_policy, RankedItem, Regularizer};
use super::predictor::{predict_target_categories, CategoryPredictor};
use super::ControlError;
use crate::data::{largest_category, Dataset};
use crate::detect::{Provenance, RecommendationSlate};
use crate::model::{ItemTable, Model, UserEdit};

/// α used by item-feature commands that do not set one.
pub const DEFAULT_ITEM_ALPHA: f64 = 0.1;

/// Frozen state needed to answer control commands.
#[derive(Clone, Copy)]
pub struct ControlContext<'a> {
    pub model: &'a Model,
    pub items: &'a ItemTable,
    pub dataset: &'a Dataset,
    pub predictor: Option<&'a CategoryPredictor>,
    pub item_alpha: f64,
}

impl<'a> ControlContext<'a> {
    pub fn new(model: &'a Model, items: &'a ItemTable, dataset: &'a Dataset) -> Self {
        ControlContext {
            model,
            items,
            dataset,
            predictor: None,
            item_alpha: DEFAULT_ITEM_ALPHA,
        }
    }

    pub fn with_predictor(mut self, predictor: Option<&'a CategoryPredictor>) -> Self {
        self.predictor = predictor;
        self
    }

    fn check_user(&self, user: u32) -> Result<(), ControlError> {
        if user as usize >= self.dataset.n_users() {
            return Err(ControlError::UnknownUser(user.to_string()));
        }
        Ok(())
    }

    /// Factual and ID-masked scores over the all-ranking candidate set.
    pub fn scores(&self, user: u32, edit: &UserEdit) -> Result<CounterfactualScores, ControlError> {
        self.check_user(user)?;
        let candidates = self.dataset.candidates(user, true);
        CounterfactualScores::compute(self.model, self.items, self.dataset, user, edit, candidates)
    }
}

/// How an item command shapes the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemPolicy {
    pub regularizer: Regularizer,
    pub beta: f64,
    pub targets: Vec<usize>,
    pub demoted: Option<usize>,
    pub predicted: bool,
}

impl ItemPolicy {
    pub fn off() -> Self {
        ItemPolicy {
            regularizer: Regularizer::Off,
            beta: 0.0,
            targets: Vec::new(),
            demoted: None,
            predicted: false,
        }
    }
}

/// Regularizer and β of an item-feature command (prediction included); `off` for user commands.
pub fn item_policy(ctx: &ControlContext<'_>, user: u32, command: &ControlCommand) -> Result<ItemPolicy, ControlError> {
    match *command {
        ControlCommand::ItemFine {
            target_category, beta, ..
        } => Ok(ItemPolicy {
            regularizer: Regularizer::Fine {
                targets: vec![target_category],
            },
            beta,
            targets: vec![target_category],
            demoted: None,
            predicted: false,
        }),
        ControlCommand::ItemCoarse {
            beta,
            k_targets,
            use_prediction,
            demoted,
            ..
        } => {
            let history = ctx.dataset.train_distribution(user);
            let demoted = match demoted {
                Some(c) => c,
                None => largest_category(&history)
                    .ok_or_else(|| ControlError::Precondition("user has no train history".into()))?,
            };
            if use_prediction {
                let p = ctx.predictor.ok_or(ControlError::PredictorMissing)?;
                let targets = predict_target_categories(p, &history, demoted, k_targets)?.categories;
                Ok(ItemPolicy {
                    regularizer: Regularizer::Combined {
                        targets: targets.clone(),
                        demoted,
                    },
                    beta,
                    targets,
                    demoted: Some(demoted),
                    predicted: true,
                })
            } else {
                Ok(ItemPolicy {
                    regularizer: Regularizer::Coarse { demoted },
                    beta,
                    targets: Vec::new(),
                    demoted: Some(demoted),
                    predicted: false,
                })
            }
        }
        _ => Ok(ItemPolicy::off()),
    }
}

/// Ranks blended scores under a policy.
pub fn policy_ranking(
    dataset: &Dataset,
    scores: &CounterfactualScores,
    alpha: f64,
    regularizer: &Regularizer,
    beta: f64,
    k: usize,
) -> (Vec<RankedItem>, bool) {
    let y = scores.blend(alpha);
    let r: Vec<u8> = scores
        .candidates
        .iter()
        .map(|&i| regularizer.value(&dataset.item_profiles[i as usize]))
        .collect();
    rank_with_policy(&scores.candidates, &y, &r, beta, k)
}

fn to_slate(user: u32, ranked: Vec<RankedItem>, short: bool, provenance: Provenance) -> RecommendationSlate {
    RecommendationSlate {
        user,
        items: ranked.iter().map(|x| x.item).collect(),
        scores: ranked.iter().map(|x| x.adjusted).collect(),
        provenance,
        short,
    }
}

/// Uncontrolled top-`k` of the base model.
pub fn baseline_slate(ctx: &ControlContext<'_>, user: u32, k: usize) -> Result<RecommendationSlate, ControlError> {
    let scores = ctx.scores(user, &UserEdit::None)?;
    let (ranked, short) = policy_ranking(ctx.dataset, &scores, 0.0, &Regularizer::Off, 0.0, k);
    Ok(to_slate(user, ranked, short, Provenance::baseline()))
}

/// Answers one control command for `user` with a top-`k` slate.
pub fn apply_control(
    ctx: &ControlContext<'_>,
    user: u32,
    command: &ControlCommand,
    k: usize,
) -> Result<RecommendationSlate, ControlError> {
    ctx.check_user(user)?;
    command.validate_for(ctx.dataset, user)?;
    let edit = command.user_edit(ctx.dataset, user);
    let alpha = match *command {
        ControlCommand::UserFine { alpha, .. } | ControlCommand::UserCoarse { alpha, .. } => alpha,
        ControlCommand::ItemFine { alpha, .. } | ControlCommand::ItemCoarse { alpha, .. } => {
            alpha.unwrap_or(ctx.item_alpha)
        }
    };
    let policy = item_policy(ctx, user, command)?;
    let scores = ctx.scores(user, &edit)?;
    let (ranked, short) = policy_ranking(ctx.dataset, &scores, alpha, &policy.regularizer, policy.beta, k);
    let is_item = matches!(command, ControlCommand::ItemFine { .. } | ControlCommand::ItemCoarse { .. });
    let provenance = Provenance {
        source: command.kind().into(),
        alpha: Some(alpha),
        beta: is_item.then_some(policy.beta),
        targets: policy.targets,
        demoted: policy.demoted,
        predicted_targets: policy.predicted,
    };
    Ok(to_slate(user, ranked, short, provenance))
}
