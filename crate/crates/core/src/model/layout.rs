use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::Dataset;

/// Field roles of the sparse input, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    UserId,
    UserAttr,
    ItemId,
    ItemCat,
}

impl Role {
    const fn bit(self) -> u8 {
        match self {
            Role::UserId => 1,
            Role::UserAttr => 2,
            Role::ItemId => 4,
            Role::ItemCat => 8,
        }
    }
}

/// A set of roles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoleSet(u8);

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet(0);

    pub fn of(roles: &[Role]) -> Self {
        RoleSet(roles.iter().fold(0, |acc, r| acc | r.bit()))
    }

    pub fn contains(self, role: Role) -> bool {
        self.0 & role.bit() != 0
    }

    pub fn with(self, role: Role) -> Self {
        RoleSet(self.0 | role.bit())
    }
}

/// Offsets of the four roles inside the global feature index space.
///
/// `F = n_users + N + n_items + M`. A role can be disabled for a whole model
/// (models trained without user attributes or without item categories); its
/// slots still exist but are never activated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_users: usize,
    pub n_user_features: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub disabled: RoleSet,
}

impl FeatureLayout {
    pub fn for_dataset(dataset: &Dataset) -> Self {
        FeatureLayout {
            n_users: dataset.n_users(),
            n_user_features: dataset.n_user_features(),
            n_items: dataset.n_items(),
            n_categories: dataset.n_categories(),
            disabled: RoleSet::EMPTY,
        }
    }

    pub fn without(mut self, role: Role) -> Self {
        self.disabled = self.disabled.with(role);
        self
    }

    /// Total feature count `F`.
    pub fn len(&self) -> usize {
        self.n_users + self.n_user_features + self.n_items + self.n_categories
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, role: Role) -> usize {
        match role {
            Role::UserId => 0,
            Role::UserAttr => self.n_users,
            Role::ItemId => self.n_users + self.n_user_features,
            Role::ItemCat => self.n_users + self.n_user_features + self.n_items,
        }
    }

    pub fn role_len(&self, role: Role) -> usize {
        match role {
            Role::UserId => self.n_users,
            Role::UserAttr => self.n_user_features,
            Role::ItemId => self.n_items,
            Role::ItemCat => self.n_categories,
        }
    }

    pub fn role_of(&self, feature: usize) -> Option<Role> {
        [Role::UserId, Role::UserAttr, Role::ItemId, Role::ItemCat]
            .into_iter()
            .find(|&r| feature >= self.offset(r) && feature < self.offset(r) + self.role_len(r))
    }

    pub fn enabled(&self, role: Role) -> bool {
        !self.disabled.contains(role)
    }

    /// Checks that the layout matches the dataset's dimensions.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<(), ModelError> {
        let expected = FeatureLayout {
            disabled: self.disabled,
            ..FeatureLayout::for_dataset(dataset)
        };
        if *self != expected {
            return Err(ModelError::LayoutMismatch(format!(
                "model layout {self:?} does not match dataset {expected:?}"
            )));
        }
        Ok(())
    }
}

/// Edit applied to a user's attribute features before scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserEdit {
    #[default]
    None,
    /// Replace the whole attribute vector (length N, one-hot per group).
    Override(Vec<u8>),
    /// Drop the listed attribute slots.
    Drop(Vec<usize>),
}

/// One `(user, item)` scoring request with optional masking and feature edits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringRequest {
    pub user: u32,
    pub item: u32,
    pub mask_roles: RoleSet,
    pub edit: UserEdit,
}

impl ScoringRequest {
    pub fn plain(user: u32, item: u32) -> Self {
        ScoringRequest {
            user,
            item,
            mask_roles: RoleSet::EMPTY,
            edit: UserEdit::None,
        }
    }
}

/// User-side active features: ID bit (unless masked) plus attribute bits, after edits.
pub fn user_features(
    layout: &FeatureLayout,
    dataset: &Dataset,
    user: u32,
    mask_roles: RoleSet,
    edit: &UserEdit,
) -> Result<Vec<u32>, ModelError> {
    if user as usize >= layout.n_users {
        return Err(ModelError::InvalidRequest(format!("user index {user} out of range")));
    }
    let mut out = Vec::with_capacity(1 + dataset.user_schema.groups.len());
    if layout.enabled(Role::UserId) && !mask_roles.contains(Role::UserId) {
        out.push((layout.offset(Role::UserId) + user as usize) as u32);
    }
    if layout.enabled(Role::UserAttr) && !mask_roles.contains(Role::UserAttr) {
        let schema = &dataset.user_schema;
        let base = layout.offset(Role::UserAttr);
        let mut attrs = match edit {
            UserEdit::Override(x) => {
                schema
                    .validate_vector(x)
                    .map_err(ModelError::InvalidRequest)?;
                x.iter()
                    .enumerate()
                    .filter(|(_, &b)| b == 1)
                    .map(|(f, _)| f)
                    .collect()
            }
            _ => dataset.user_profiles[user as usize].active_features(schema),
        };
        if let UserEdit::Drop(dropped) = edit {
            if let Some(&bad) = dropped.iter().find(|&&f| f >= schema.len()) {
                return Err(ModelError::InvalidRequest(format!("feature slot {bad} out of range")));
            }
            attrs.retain(|f| !dropped.contains(f));
        }
        out.extend(attrs.into_iter().map(|f| (base + f) as u32));
    }
    Ok(out)
}

/// Item-side active features: ID bit plus category bits.
pub fn item_features(layout: &FeatureLayout, dataset: &Dataset, item: u32, mask_roles: RoleSet, out: &mut Vec<u32>) {
    if layout.enabled(Role::ItemId) && !mask_roles.contains(Role::ItemId) {
        out.push((layout.offset(Role::ItemId) + item as usize) as u32);
    }
    if layout.enabled(Role::ItemCat) && !mask_roles.contains(Role::ItemCat) {
        let base = layout.offset(Role::ItemCat);
        out.extend(
            dataset.item_profiles[item as usize]
                .categories
                .iter()
                .map(|&c| (base + c as usize) as u32),
        );
    }
}

/// Builds the sparse binary input for one request: active feature indices, ascending.
pub fn assemble_features(
    request: &ScoringRequest,
    layout: &FeatureLayout,
    dataset: &Dataset,
) -> Result<Vec<u32>, ModelError> {
    if request.item as usize >= layout.n_items {
        return Err(ModelError::InvalidRequest(format!("item index {} out of range", request.item)));
    }
    let mut features = user_features(layout, dataset, request.user, request.mask_roles, &request.edit)?;
    item_features(layout, dataset, request.item, request.mask_roles, &mut features);
    Ok(features)
}
