use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::data::Dataset;
use crate::model::UserEdit;

/// Largest number of predicted target categories a coarse item command may ask for.
pub const MAX_K_TARGETS: usize = 5;

/// A user intervention, resolved to dense indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlCommand {
    /// Adopt attribute value `target_feature` (a user-feature slot the user does not have).
    UserFine { target_feature: usize, alpha: f64 },
    /// Leave the group of attribute value `own_feature` (a slot the user has).
    UserCoarse { own_feature: usize, alpha: f64 },
    /// Promote items of `target_category`.
    ItemFine {
        target_category: usize,
        beta: f64,
        alpha: Option<f64>,
    },
    /// Demote items of the user's largest train category (or `demoted` when given).
    ItemCoarse {
        beta: f64,
        k_targets: usize,
        use_prediction: bool,
        demoted: Option<usize>,
        alpha: Option<f64>,
    },
}

/// Wire form: `{"type":"user_fine"|"user_coarse"|"item_fine"|"item_coarse", "target", "alpha", "beta", "k_targets", "use_prediction"}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandJson {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_targets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_prediction: Option<bool>,
}

fn invalid(msg: impl Into<String>) -> ControlError {
    ControlError::InvalidCommand(msg.into())
}

fn unit(name: &str, v: f64) -> Result<f64, ControlError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(v)
}

fn category(dataset: &Dataset, name: &str) -> Result<usize, ControlError> {
    dataset
        .category_names
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| invalid(format!("unknown category '{name}'")))
}

fn feature(dataset: &Dataset, name: &str) -> Result<usize, ControlError> {
    dataset
        .user_schema
        .feature_by_name(name)
        .ok_or_else(|| invalid(format!("unknown user feature '{name}' (expected attr=value)")))
}

impl CommandJson {
    /// Resolves names against the dataset and checks ranges.
    pub fn resolve(&self, dataset: &Dataset) -> Result<ControlCommand, ControlError> {
        let target = || self.target.as_deref().ok_or_else(|| invalid(format!("{} needs a target", self.kind)));
        let alpha = self.alpha.map(|a| unit("alpha", a)).transpose()?;
        let beta = self.beta.map(|b| unit("beta", b)).transpose()?;
        let cmd = match self.kind.as_str() {
            "user_fine" => ControlCommand::UserFine {
                target_feature: feature(dataset, target()?)?,
                alpha: alpha.unwrap_or(0.0),
            },
            "user_coarse" => ControlCommand::UserCoarse {
                own_feature: feature(dataset, target()?)?,
                alpha: alpha.unwrap_or(0.0),
            },
            "item_fine" => ControlCommand::ItemFine {
                target_category: category(dataset, target()?)?,
                beta: beta.unwrap_or(0.0),
                alpha,
            },
            "item_coarse" => {
                let k = self.k_targets.unwrap_or(1);
                if !(1..=MAX_K_TARGETS).contains(&k) {
                    return Err(invalid(format!("k_targets must lie in 1..={MAX_K_TARGETS}, got {k}")));
                }
                ControlCommand::ItemCoarse {
                    beta: beta.unwrap_or(0.0),
                    k_targets: k,
                    use_prediction: self.use_prediction.unwrap_or(false),
                    demoted: self.target.as_deref().map(|t| category(dataset, t)).transpose()?,
                    alpha,
                }
            }
            other => return Err(invalid(format!("unknown command type '{other}'"))),
        };
        Ok(cmd)
    }
}

impl ControlCommand {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlCommand::UserFine { .. } => "user_fine",
            ControlCommand::UserCoarse { .. } => "user_coarse",
            ControlCommand::ItemFine { .. } => "item_fine",
            ControlCommand::ItemCoarse { .. } => "item_coarse",
        }
    }

    /// Wire form of this command, naming features and categories.
    pub fn to_json(&self, dataset: &Dataset) -> CommandJson {
        let feature = |f: usize| dataset.user_schema.feature_name(f);
        let cat = |c: usize| dataset.category_names.get(c).cloned();
        let kind = self.kind().to_string();
        match *self {
            ControlCommand::UserFine { target_feature, alpha } => CommandJson {
                kind,
                target: feature(target_feature),
                alpha: Some(alpha),
                ..Default::default()
            },
            ControlCommand::UserCoarse { own_feature, alpha } => CommandJson {
                kind,
                target: feature(own_feature),
                alpha: Some(alpha),
                ..Default::default()
            },
            ControlCommand::ItemFine {
                target_category,
                beta,
                alpha,
            } => CommandJson {
                kind,
                target: cat(target_category),
                alpha,
                beta: Some(beta),
                ..Default::default()
            },
            ControlCommand::ItemCoarse {
                beta,
                k_targets,
                use_prediction,
                demoted,
                alpha,
            } => CommandJson {
                kind,
                target: demoted.and_then(cat),
                alpha,
                beta: Some(beta),
                k_targets: Some(k_targets),
                use_prediction: Some(use_prediction),
            },
        }
    }

    /// Checks the command's preconditions for `user`.
    pub fn validate_for(&self, dataset: &Dataset, user: u32) -> Result<(), ControlError> {
        let schema = &dataset.user_schema;
        let profile = &dataset.user_profiles[user as usize];
        match *self {
            ControlCommand::UserFine { target_feature, alpha } => {
                unit("alpha", alpha)?;
                if target_feature >= schema.len() {
                    return Err(invalid(format!("feature slot {target_feature} out of range")));
                }
                if profile.has_feature(schema, target_feature) {
                    return Err(ControlError::Precondition(format!(
                        "user already has {}",
                        schema.feature_name(target_feature).unwrap_or_default()
                    )));
                }
            }
            ControlCommand::UserCoarse { own_feature, alpha } => {
                unit("alpha", alpha)?;
                if own_feature >= schema.len() {
                    return Err(invalid(format!("feature slot {own_feature} out of range")));
                }
                if !profile.has_feature(schema, own_feature) {
                    return Err(ControlError::Precondition(format!(
                        "user does not have {}",
                        schema.feature_name(own_feature).unwrap_or_default()
                    )));
                }
            }
            ControlCommand::ItemFine {
                target_category,
                beta,
                alpha,
            } => {
                unit("beta", beta)?;
                alpha.map(|a| unit("alpha", a)).transpose()?;
                if target_category >= dataset.n_categories() {
                    return Err(invalid(format!("category {target_category} out of range")));
                }
            }
            ControlCommand::ItemCoarse {
                beta,
                k_targets,
                demoted,
                alpha,
                ..
            } => {
                unit("beta", beta)?;
                alpha.map(|a| unit("alpha", a)).transpose()?;
                if !(1..=MAX_K_TARGETS).contains(&k_targets) {
                    return Err(invalid(format!("k_targets must lie in 1..={MAX_K_TARGETS}")));
                }
                if demoted.is_some_and(|c| c >= dataset.n_categories()) {
                    return Err(invalid("demoted category out of range"));
                }
            }
        }
        Ok(())
    }

    /// Attribute edit applied to the user before scoring.
    pub fn user_edit(&self, dataset: &Dataset, user: u32) -> UserEdit {
        let schema = &dataset.user_schema;
        match *self {
            ControlCommand::UserFine { target_feature, .. } => {
                let mut x = dataset.user_profiles[user as usize].feature_vector(schema);
                let g = schema.group_of(target_feature).expect("validated slot");
                let group = &schema.groups[g];
                x[group.offset..group.offset + group.values.len()].fill(0);
                x[target_feature] = 1;
                UserEdit::Override(x)
            }
            ControlCommand::UserCoarse { own_feature, .. } => UserEdit::Drop(vec![own_feature]),
            _ => UserEdit::None,
        }
    }
}
