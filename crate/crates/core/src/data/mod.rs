//! Interaction logs, user/item feature tables, and the chronologically split dataset.
//!
//! The pipeline is `load_*` → [`kcore_filter`] → [`binarize_and_split`] → [`Dataset::from_split`].
//! Everything here is a pure function of its inputs (plus a seed where sampling is involved).

mod distribution;
mod kcore;
mod load;
pub mod movielens;
mod negatives;
mod snapshot;
mod split;
pub mod synthetic;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use distribution::{category_distribution, largest_category, CategoryDistribution};
pub use kcore::kcore_filter;
pub use load::{load_interactions, load_item_categories, load_user_features, ItemRow, UserRow};
pub use negatives::{sample_negatives, LabeledPair};
pub use snapshot::{load_dataset, save_dataset, DatasetManifest, MANIFEST_FILE};
pub use split::{binarize_and_split, SplitFractions, SplitLog};

/// Value used for users that have no entry for an attribute group.
pub const UNKNOWN_VALUE: &str = "unknown";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("user {user_id} has interacted with every item; no negative can be sampled")]
    NoNegativeAvailable { user_id: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// One row of the raw interaction log, before binarization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub timestamp: u64,
}

/// A positive interaction after indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: u64,
}

/// Bidirectional map between opaque raw ids and dense indices.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_ids(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Vocab { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// One categorical user attribute (e.g. gender) and its one-hot slot range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeGroup {
    pub name: String,
    pub values: Vec<String>,
    pub offset: usize,
}

/// Layout of the user-feature vector: concatenated one-hot groups, `N` slots total.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSchema {
    pub groups: Vec<AttributeGroup>,
}

impl UserSchema {
    /// Builds groups in order of first appearance; values within a group are sorted
    /// numerically when every value parses as a number, lexically otherwise.
    pub fn from_rows(rows: &[UserRow]) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut values: HashMap<String, Vec<String>> = HashMap::new();
        for row in rows {
            for (attr, value) in &row.attrs {
                let entry = values.entry(attr.clone()).or_insert_with(|| {
                    order.push(attr.clone());
                    Vec::new()
                });
                if !entry.contains(value) {
                    entry.push(value.clone());
                }
            }
        }
        let mut offset = 0;
        let groups = order
            .into_iter()
            .map(|name| {
                let mut vals = values.remove(&name).unwrap_or_default();
                sort_values(&mut vals);
                let group = AttributeGroup {
                    name,
                    offset,
                    values: vals,
                };
                offset += group.values.len();
                group
            })
            .collect();
        UserSchema { groups }
    }

    /// Total number of user-feature slots `N`.
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Group index owning feature slot `feature`.
    pub fn group_of(&self, feature: usize) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| feature >= g.offset && feature < g.offset + g.values.len())
    }

    /// Human-readable `attr=value` name of a feature slot.
    pub fn feature_name(&self, feature: usize) -> Option<String> {
        let g = &self.groups[self.group_of(feature)?];
        Some(format!("{}={}", g.name, g.values[feature - g.offset]))
    }

    /// Parses `attr=value` back into a feature slot.
    pub fn feature_by_name(&self, name: &str) -> Option<usize> {
        let (attr, value) = name.split_once('=')?;
        let g = &self.groups[self.group_index(attr.trim())?];
        let pos = g.values.iter().position(|v| v == value.trim())?;
        Some(g.offset + pos)
    }

    /// Checks that `features` is a binary vector of length N with exactly one
    /// active bit per attribute group.
    pub fn validate_vector(&self, features: &[u8]) -> Result<(), String> {
        if features.len() != self.len() {
            return Err(format!(
                "feature vector has length {}, expected {}",
                features.len(),
                self.len()
            ));
        }
        if let Some(bad) = features.iter().position(|&b| b > 1) {
            return Err(format!("feature slot {bad} is not binary"));
        }
        for g in &self.groups {
            let active = features[g.offset..g.offset + g.values.len()]
                .iter()
                .filter(|&&b| b == 1)
                .count();
            if active != 1 {
                return Err(format!(
                    "attribute group '{}' has {active} active bits, expected exactly 1",
                    g.name
                ));
            }
        }
        Ok(())
    }
}

fn sort_values(values: &mut [String]) {
    let all_numeric = values.iter().all(|v| v.parse::<f64>().is_ok());
    if all_numeric {
        values.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    } else {
        values.sort();
    }
}

/// A user's attribute values, one value index per schema group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub values: Vec<u16>,
}

impl UserProfile {
    /// Active feature slots (one per group), ascending.
    pub fn active_features(&self, schema: &UserSchema) -> Vec<usize> {
        schema
            .groups
            .iter()
            .zip(&self.values)
            .map(|(g, &v)| g.offset + v as usize)
            .collect()
    }

    /// Dense binary feature vector `x_u` of length N.
    pub fn feature_vector(&self, schema: &UserSchema) -> Vec<u8> {
        let mut x = vec![0u8; schema.len()];
        for f in self.active_features(schema) {
            x[f] = 1;
        }
        x
    }

    pub fn has_feature(&self, schema: &UserSchema, feature: usize) -> bool {
        self.active_features(schema).contains(&feature)
    }
}

/// An item's category set `h_i` (sorted, non-empty) and optional display title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemProfile {
    pub categories: Vec<u16>,
    pub title: Option<String>,
}

impl ItemProfile {
    pub fn has_category(&self, category: usize) -> bool {
        self.categories.binary_search(&(category as u16)).is_ok()
    }
}

/// Per-user positive item lists per split, each in chronological order.
#[derive(Debug, Clone, Default)]
pub struct Histories {
    pub train: Vec<Vec<u32>>,
    pub valid: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
}

impl Histories {
    fn build(n_users: usize, train: &[Interaction], valid: &[Interaction], test: &[Interaction]) -> Self {
        let collect = |split: &[Interaction]| {
            let mut out = vec![Vec::new(); n_users];
            for it in split {
                out[it.user as usize].push(it.item);
            }
            out
        };
        Histories {
            train: collect(train),
            valid: collect(valid),
            test: collect(test),
        }
    }
}

/// Indexed, split dataset of positive interactions plus profiles.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub users: Vocab,
    pub items: Vocab,
    pub user_schema: UserSchema,
    pub user_profiles: Vec<UserProfile>,
    pub category_names: Vec<String>,
    pub item_profiles: Vec<ItemProfile>,
    pub train: Vec<Interaction>,
    pub valid: Vec<Interaction>,
    pub test: Vec<Interaction>,
    histories: Histories,
}

impl Dataset {
    /// Assembles a dataset from its parts, checking the cross-reference invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        users: Vocab,
        items: Vocab,
        user_schema: UserSchema,
        user_profiles: Vec<UserProfile>,
        category_names: Vec<String>,
        item_profiles: Vec<ItemProfile>,
        train: Vec<Interaction>,
        valid: Vec<Interaction>,
        test: Vec<Interaction>,
    ) -> Result<Self, DataError> {
        if user_profiles.len() != users.len() {
            return Err(DataError::Invalid(format!(
                "{} user profiles for {} users",
                user_profiles.len(),
                users.len()
            )));
        }
        if item_profiles.len() != items.len() {
            return Err(DataError::Invalid(format!(
                "{} item profiles for {} items",
                item_profiles.len(),
                items.len()
            )));
        }
        for p in &user_profiles {
            if p.values.len() != user_schema.groups.len()
                || p
                    .values
                    .iter()
                    .zip(&user_schema.groups)
                    .any(|(&v, g)| v as usize >= g.values.len())
            {
                return Err(DataError::Invalid("user profile does not match schema".into()));
            }
        }
        let m = category_names.len();
        for (i, p) in item_profiles.iter().enumerate() {
            if p.categories.is_empty() || p.categories.iter().any(|&c| c as usize >= m) {
                return Err(DataError::Invalid(format!(
                    "item {} has an empty or out-of-range category set",
                    items.raw(i as u32)
                )));
            }
        }
        for it in train.iter().chain(&valid).chain(&test) {
            if it.user as usize >= users.len() || it.item as usize >= items.len() {
                return Err(DataError::Invalid("interaction references unknown profile".into()));
            }
        }
        let histories = Histories::build(users.len(), &train, &valid, &test);
        Ok(Dataset {
            users,
            items,
            user_schema,
            user_profiles,
            category_names,
            item_profiles,
            train,
            valid,
            test,
            histories,
        })
    }

    /// Indexes a split log against the feature tables. Users and items are the ones
    /// appearing in any split, indexed in lexical order of their raw ids; interactions
    /// whose item has no category entry must already have been removed.
    pub fn from_split(split: &SplitLog, user_rows: &[UserRow], item_rows: &[ItemRow]) -> Result<Self, DataError> {
        let all = || split.train.iter().chain(&split.valid).chain(&split.test);
        let mut user_ids: Vec<String> = all().map(|r| r.user_id.clone()).collect();
        user_ids.sort();
        user_ids.dedup();
        let mut item_ids: Vec<String> = all().map(|r| r.item_id.clone()).collect();
        item_ids.sort();
        item_ids.dedup();
        let users = Vocab::from_ids(user_ids);
        let items = Vocab::from_ids(item_ids);

        let mut schema_rows: Vec<UserRow> = user_rows
            .iter()
            .filter(|r| users.get(&r.user_id).is_some())
            .cloned()
            .collect();
        let row_by_user: HashMap<&str, &UserRow> =
            user_rows.iter().map(|r| (r.user_id.as_str(), r)).collect();
        // users without a row, or missing a group, get the "unknown" value
        let provisional = UserSchema::from_rows(&schema_rows);
        let needs_unknown: Vec<bool> = provisional
            .groups
            .iter()
            .map(|g| {
                users.ids().iter().any(|u| {
                    row_by_user
                        .get(u.as_str())
                        .is_none_or(|r| !r.attrs.iter().any(|(a, _)| a == &g.name))
                })
            })
            .collect();
        for (g, need) in provisional.groups.iter().zip(&needs_unknown) {
            if *need && !g.values.iter().any(|v| v == UNKNOWN_VALUE) {
                schema_rows.push(UserRow {
                    user_id: String::new(),
                    attrs: vec![(g.name.clone(), UNKNOWN_VALUE.to_string())],
                });
            }
        }
        let schema = UserSchema::from_rows(&schema_rows);
        let user_profiles = users
            .ids()
            .iter()
            .map(|u| {
                let row = row_by_user.get(u.as_str());
                let values = schema
                    .groups
                    .iter()
                    .map(|g| {
                        let value = row
                            .and_then(|r| r.attrs.iter().find(|(a, _)| a == &g.name))
                            .map_or(UNKNOWN_VALUE, |(_, v)| v.as_str());
                        g.values.iter().position(|v| v == value).unwrap() as u16
                    })
                    .collect();
                UserProfile { values }
            })
            .collect();

        let row_by_item: HashMap<&str, &ItemRow> =
            item_rows.iter().map(|r| (r.item_id.as_str(), r)).collect();
        let mut category_names: Vec<String> = items
            .ids()
            .iter()
            .filter_map(|i| row_by_item.get(i.as_str()))
            .flat_map(|r| r.categories.iter().cloned())
            .collect();
        category_names.sort();
        category_names.dedup();
        let cat_index: HashMap<&str, u16> = category_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u16))
            .collect();
        let mut item_profiles = Vec::with_capacity(items.len());
        for id in items.ids() {
            let row = row_by_item
                .get(id.as_str())
                .ok_or_else(|| DataError::Invalid(format!("item {id} has no category entry")))?;
            let mut categories: Vec<u16> = row.categories.iter().map(|c| cat_index[c.as_str()]).collect();
            categories.sort_unstable();
            categories.dedup();
            item_profiles.push(ItemProfile {
                categories,
                title: row.title.clone(),
            });
        }

        let index = |rows: &[RawInteraction]| -> Vec<Interaction> {
            rows.iter()
                .map(|r| Interaction {
                    user: users.get(&r.user_id).unwrap(),
                    item: items.get(&r.item_id).unwrap(),
                    timestamp: r.timestamp,
                })
                .collect()
        };
        let (train, valid, test) = (index(&split.train), index(&split.valid), index(&split.test));
        Dataset::new(
            users,
            items,
            schema,
            user_profiles,
            category_names,
            item_profiles,
            train,
            valid,
            test,
        )
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of user-feature slots `N`.
    pub fn n_user_features(&self) -> usize {
        self.user_schema.len()
    }

    /// Number of item categories `M`.
    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn histories(&self) -> &Histories {
        &self.histories
    }

    /// Items the user may not be recommended: train positives, plus validation
    /// positives when `include_valid` (the test-time all-ranking exclusion set).
    pub fn known_positives(&self, user: u32, include_valid: bool) -> Vec<u32> {
        let h = &self.histories;
        let mut known: Vec<u32> = h.train[user as usize].clone();
        if include_valid {
            known.extend_from_slice(&h.valid[user as usize]);
        }
        known.sort_unstable();
        known.dedup();
        known
    }

    /// All-ranking candidate set: every item minus the exclusion set, ascending.
    pub fn candidates(&self, user: u32, include_valid: bool) -> Vec<u32> {
        let known = self.known_positives(user, include_valid);
        (0..self.n_items() as u32)
            .filter(|i| known.binary_search(i).is_err())
            .collect()
    }

    /// Category distribution of the user's train history.
    pub fn train_distribution(&self, user: u32) -> CategoryDistribution {
        category_distribution(&self.histories.train[user as usize], self)
    }

    /// Category distribution of the user's test positives.
    pub fn test_distribution(&self, user: u32) -> CategoryDistribution {
        category_distribution(&self.histories.test[user as usize], self)
    }

    /// Users whose largest train category differs from their largest test category.
    /// Users with an empty train or test history are excluded.
    pub fn select_preference_shift_users(&self) -> Vec<u32> {
        (0..self.n_users() as u32)
            .filter(|&u| {
                let h = &self.histories;
                if h.train[u as usize].is_empty() || h.test[u as usize].is_empty() {
                    return false;
                }
                largest_category(&self.train_distribution(u)) != largest_category(&self.test_distribution(u))
            })
            .collect()
    }
}

/// Configuration of the full preparation pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub kcore: usize,
    pub positive_threshold: u8,
    pub fractions: SplitFractions,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            kcore: 10,
            positive_threshold: 4,
            fractions: SplitFractions::default(),
        }
    }
}

/// Counts reported by [`prepare`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PrepareStats {
    pub raw_interactions: usize,
    pub dropped_uncategorized: usize,
    pub after_kcore: usize,
    pub positives: usize,
}

/// Runs the whole pipeline: drop interactions on uncategorized items, k-core filter,
/// binarize, split, index.
pub fn prepare(
    interactions: Vec<RawInteraction>,
    user_rows: &[UserRow],
    item_rows: &[ItemRow],
    config: &PrepareConfig,
) -> Result<(Dataset, PrepareStats), DataError> {
    let mut stats = PrepareStats {
        raw_interactions: interactions.len(),
        ..Default::default()
    };
    let categorized: std::collections::HashSet<&str> = item_rows
        .iter()
        .filter(|r| !r.categories.is_empty())
        .map(|r| r.item_id.as_str())
        .collect();
    let kept: Vec<RawInteraction> = interactions
        .into_iter()
        .filter(|r| categorized.contains(r.item_id.as_str()))
        .collect();
    stats.dropped_uncategorized = stats.raw_interactions - kept.len();
    let filtered = kcore_filter(kept, config.kcore);
    stats.after_kcore = filtered.len();
    let split = binarize_and_split(&filtered, config.positive_threshold, config.fractions);
    stats.positives = split.len();
    if split.is_empty() {
        return Err(DataError::Invalid("no positive interactions remain after filtering".into()));
    }
    let dataset = Dataset::from_split(&split, user_rows, item_rows)?;
    Ok((dataset, stats))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Small hand-built dataset: 3 users, 5 items, 3 categories, gender + age groups.
    pub fn tiny() -> Dataset {
        let users = Vocab::from_ids(vec!["u0".into(), "u1".into(), "u2".into()]);
        let items = Vocab::from_ids((0..5).map(|i| format!("i{i}")).collect());
        let schema = UserSchema {
            groups: vec![
                AttributeGroup {
                    name: "gender".into(),
                    values: vec!["F".into(), "M".into()],
                    offset: 0,
                },
                AttributeGroup {
                    name: "age".into(),
                    values: vec!["18".into(), "30".into(), "50".into()],
                    offset: 2,
                },
            ],
        };
        let profiles = vec![
            UserProfile { values: vec![0, 1] },
            UserProfile { values: vec![1, 0] },
            UserProfile { values: vec![1, 2] },
        ];
        let cats = vec!["action".into(), "comedy".into(), "drama".into()];
        let item_profiles = vec![
            ItemProfile { categories: vec![0], title: None },
            ItemProfile { categories: vec![0, 1], title: None },
            ItemProfile { categories: vec![1], title: None },
            ItemProfile { categories: vec![2], title: None },
            ItemProfile { categories: vec![1, 2], title: None },
        ];
        let it = |user, item, timestamp| Interaction { user, item, timestamp };
        Dataset::new(
            users,
            items,
            schema,
            profiles,
            cats,
            item_profiles,
            vec![it(0, 0, 1), it(0, 1, 2), it(1, 2, 3), it(2, 3, 4), it(1, 3, 5)],
            vec![it(0, 2, 6)],
            vec![it(0, 3, 7), it(1, 0, 8)],
        )
        .unwrap()
    }
}
