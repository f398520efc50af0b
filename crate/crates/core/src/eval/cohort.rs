use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::EvalError;
use crate::data::{largest_category, Dataset, UNKNOWN_VALUE};

/// One evaluated user with the parameters of their simulated command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortUser {
    pub user: u32,
    /// Feature slot the user holds in the scenario's attribute group.
    pub own_feature: Option<usize>,
    /// Feature slot adopted under a fine user control.
    pub target_feature: Option<usize>,
    /// Largest train category.
    pub demoted: Option<usize>,
    /// Largest test category.
    pub target_category: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub scenario: Scenario,
    pub attribute: Option<String>,
    pub users: Vec<CohortUser>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn user_ids(&self) -> Vec<u32> {
        self.users.iter().map(|c| c.user).collect()
    }
}

/// Users and command parameters of a scenario.
///
/// User scenarios keep users with a known value of `attribute` and at least one
/// test positive; the fine target is the next known value of the group in
/// schema order (the opposite value for a two-valued group). Item scenarios use
/// the preference-shift users.
pub fn select_cohort(scenario: Scenario, dataset: &Dataset, attribute: Option<&str>) -> Result<Cohort, EvalError> {
    let h = dataset.histories();
    let users = if scenario.is_user() {
        let name = attribute
            .or(scenario.default_attribute())
            .ok_or_else(|| EvalError::Unsupported("user scenario without an attribute".into()))?;
        let g = dataset.user_schema.group_index(name).ok_or_else(|| {
            EvalError::Unsupported(format!("{scenario} needs user attribute '{name}', which the dataset lacks"))
        })?;
        let group = &dataset.user_schema.groups[g];
        let known: Vec<usize> = (0..group.values.len())
            .filter(|&v| group.values[v] != UNKNOWN_VALUE)
            .collect();
        if known.len() < 2 {
            return Err(EvalError::Unsupported(format!(
                "attribute '{name}' has fewer than two known values"
            )));
        }
        (0..dataset.n_users() as u32)
            .filter(|&u| !h.test[u as usize].is_empty())
            .filter_map(|u| {
                let v = dataset.user_profiles[u as usize].values[g] as usize;
                let pos = known.iter().position(|&k| k == v)?;
                let target = known[(pos + 1) % known.len()];
                Some(CohortUser {
                    user: u,
                    own_feature: Some(group.offset + v),
                    target_feature: (scenario == Scenario::UserFine).then_some(group.offset + target),
                    demoted: None,
                    target_category: None,
                })
            })
            .collect()
    } else {
        dataset
            .select_preference_shift_users()
            .into_iter()
            .map(|u| CohortUser {
                user: u,
                own_feature: None,
                target_feature: None,
                demoted: largest_category(&dataset.train_distribution(u)),
                target_category: largest_category(&dataset.test_distribution(u)),
            })
            .collect()
    };
    let cohort = Cohort {
        scenario,
        attribute: scenario
            .is_user()
            .then(|| attribute.or(scenario.default_attribute()).unwrap_or_default().to_string()),
        users,
    };
    if cohort.is_empty() {
        return Err(EvalError::EmptyCohort(scenario.name().into()));
    }
    Ok(cohort)
}
