//! Seeded synthetic logs with group-dependent category tastes and planted
//! preference shifts, for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ItemRow, RawInteraction, UserRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction follows the user's favourite category.
    pub focus: f64,
    /// Share of users whose favourite moves to the next category late in time.
    pub shift_fraction: f64,
    /// Time fraction after which shifted users follow their new favourite.
    pub shift_at: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 200,
            n_items: 300,
            n_categories: 6,
            interactions_per_user: 30,
            focus: 0.7,
            shift_fraction: 0.5,
            shift_at: 0.75,
            seed: 7,
        }
    }
}

pub const AGE_BUCKETS: [&str; 4] = ["18", "25", "35", "50"];
const HORIZON: u64 = 1_000_000;

/// Raw interactions (all rated 5), user rows (`gender`, `age`) and item rows.
///
/// Item `i` has primary category `i mod M` and, for every third item, also the
/// next category. Users of gender F favour the first half of the categories and
/// M the second half; age shifts the favourite within that half.
pub fn generate(cfg: &SyntheticConfig) -> (Vec<RawInteraction>, Vec<UserRow>, Vec<ItemRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.n_categories.max(2);
    let items: Vec<ItemRow> = (0..cfg.n_items)
        .map(|i| {
            let mut cats = vec![i % m];
            if i % 3 == 0 {
                cats.push((i + 1) % m);
            }
            cats.sort_unstable();
            ItemRow {
                item_id: format!("i{i}"),
                categories: cats.iter().map(|c| format!("cat{c}")).collect(),
                title: Some(format!("Item {i}")),
            }
        })
        .collect();
    let by_primary: Vec<Vec<usize>> = (0..m).map(|c| (c..cfg.n_items).step_by(m).collect()).collect();
    let half = m / 2;
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut log = Vec::with_capacity(cfg.n_users * cfg.interactions_per_user);
    for u in 0..cfg.n_users {
        let gender = u % 2;
        let age = rng.random_range(0..AGE_BUCKETS.len());
        let (lo, width) = if gender == 0 { (0, half) } else { (half, m - half) };
        let fav = lo + (age + rng.random_range(0..2)) % width.max(1);
        let shifted = rng.random_bool(cfg.shift_fraction.clamp(0.0, 1.0));
        let late_fav = (fav + 1) % m;
        users.push(UserRow {
            user_id: format!("u{u}"),
            attrs: vec![
                ("gender".into(), if gender == 0 { "F" } else { "M" }.into()),
                ("age".into(), AGE_BUCKETS[age].into()),
            ],
        });
        let mut seen = std::collections::HashSet::new();
        let mut tries = 0;
        while seen.len() < cfg.interactions_per_user.min(cfg.n_items) && tries < 50 * cfg.interactions_per_user {
            tries += 1;
            let t = rng.random_range(0..HORIZON);
            let favourite = if shifted && t as f64 >= cfg.shift_at * HORIZON as f64 {
                late_fav
            } else {
                fav
            };
            let c = if rng.random_bool(cfg.focus.clamp(0.0, 1.0)) {
                favourite
            } else {
                rng.random_range(0..m)
            };
            let pool = &by_primary[c];
            if pool.is_empty() {
                continue;
            }
            // popularity skew: squaring a uniform favours low ranks
            let r: f64 = rng.random();
            let item = pool[((r * r) * pool.len() as f64) as usize % pool.len()];
            if seen.insert(item) {
                log.push(RawInteraction {
                    user_id: format!("u{u}"),
                    item_id: format!("i{item}"),
                    rating: 5,
                    timestamp: t,
                });
            }
        }
    }
    (log, users, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, PrepareConfig};

    #[test]
    fn deterministic_and_preparable() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.0, b.0);
        let (d, _) = prepare(a.0, &a.1, &a.2, &PrepareConfig::default()).unwrap();
        assert!(d.n_users() > 150);
        assert!(!d.select_preference_shift_users().is_empty());
        assert_eq!(d.user_schema.groups.len(), 2);
    }
}
