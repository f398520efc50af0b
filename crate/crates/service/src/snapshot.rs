use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use ucrs_core::control::{rank_with_policy, CategoryPredictor, RankedItem};
use ucrs_core::data::{category_distribution, load_dataset, Dataset};
use ucrs_core::detect::{coverage, isolation_index, mcd, GroupExposure};
use ucrs_core::model::{score_all_items, ItemTable, Model, RoleSet, UserEdit};

use crate::ServiceError;

pub const MODEL_FILE: &str = "model.bin";
pub const PREDICTOR_FILE: &str = "predictor.bin";
/// Baseline slate depth kept in memory per user.
pub const PRECOMPUTED_K: usize = 100;
/// Slate depth bubble reports are computed at.
pub const REPORT_K: usize = 10;

/// Where a snapshot was loaded from, so it can be reloaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotSource {
    pub data: PathBuf,
    pub model: PathBuf,
    pub predictor: Option<PathBuf>,
}

impl SnapshotSource {
    /// A snapshot directory: the prepared dataset plus `model.bin` and, optionally, `predictor.bin`.
    pub fn dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let predictor = dir.join(PREDICTOR_FILE);
        SnapshotSource {
            data: dir.to_path_buf(),
            model: dir.join(MODEL_FILE),
            predictor: predictor.exists().then_some(predictor),
        }
    }
}

/// Per-window bubble inputs of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSignals {
    pub coverage: f64,
    pub iso_index: f64,
    pub mcd: f64,
}

/// Read-only serving state.
pub struct ServingSnapshot {
    pub dataset: Dataset,
    pub model: Model,
    pub items: ItemTable,
    pub predictor: Option<CategoryPredictor>,
    pub version: String,
    pub source: SnapshotSource,
    /// Attribute group bubble reports compare a user's group against the rest with.
    pub grouping: Option<String>,
    /// Train interactions per user as `(item, timestamp)`, time-ordered.
    pub history: Vec<Vec<(u32, u64)>>,
    baselines: OnceLock<Vec<Vec<RankedItem>>>,
    isolation: OnceLock<Isolation>,
}

struct Isolation {
    /// Indexed by value of the grouping attribute: `(history, recommendation)`.
    by_value: Vec<(f64, f64)>,
}

fn hash_files(paths: &[PathBuf]) -> Result<String, ServiceError> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| ServiceError::io(p, e))?;
        h.update(p.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(&h.finalize()[..8]))
}

impl ServingSnapshot {
    /// Loads and validates the parts; baselines are computed on first use (see [`Self::warm`]).
    pub fn load(source: SnapshotSource, grouping: Option<String>) -> Result<Self, ServiceError> {
        let (dataset, _) = load_dataset(&source.data)?;
        let (model, _) = Model::load(&source.model)?;
        model.layout.check_dataset(&dataset)?;
        let predictor = match &source.predictor {
            Some(p) => {
                let pred = CategoryPredictor::load(p)?;
                if pred.m != dataset.n_categories() {
                    return Err(ServiceError::Invalid(format!(
                        "predictor has {} categories, dataset {}",
                        pred.m,
                        dataset.n_categories()
                    )));
                }
                Some(pred)
            }
            None => None,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&source.data)
            .map_err(|e| ServiceError::io(&source.data, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for extra in std::iter::once(&source.model).chain(source.predictor.as_ref()) {
            if !files.contains(extra) {
                files.push(extra.clone());
            }
        }
        let version = hash_files(&files)?;
        let grouping = match grouping {
            Some(g) => {
                if dataset.user_schema.group_index(&g).is_none() {
                    return Err(ServiceError::Invalid(format!("unknown grouping attribute '{g}'")));
                }
                Some(g)
            }
            None => dataset.user_schema.groups.first().map(|g| g.name.clone()),
        };
        let mut history = vec![Vec::new(); dataset.n_users()];
        for it in &dataset.train {
            history[it.user as usize].push((it.item, it.timestamp));
        }
        for h in &mut history {
            h.sort_by_key(|&(item, t)| (t, item));
        }
        let items = ItemTable::new(&model, &dataset);
        Ok(ServingSnapshot {
            dataset,
            model,
            items,
            predictor,
            version,
            source,
            grouping,
            history,
            baselines: OnceLock::new(),
            isolation: OnceLock::new(),
        })
    }

    /// Precomputes every baseline slate and the group isolation table.
    pub fn warm(&self) {
        self.isolation();
    }

    pub fn user_index(&self, raw: &str) -> Option<u32> {
        self.dataset.users.get(raw)
    }

    /// Uncontrolled ranking of `user` over all items minus train and valid positives.
    pub fn rank_baseline(&self, user: u32, k: usize) -> (Vec<RankedItem>, bool) {
        let cands = self.dataset.candidates(user, true);
        let y = score_all_items(&self.model, &self.items, &self.dataset, user, &cands, RoleSet::EMPTY, &UserEdit::None)
            .expect("user index in range");
        rank_with_policy(&cands, &y, &vec![1; cands.len()], 0.0, k)
    }

    fn all_baselines(&self) -> &[Vec<RankedItem>] {
        self.baselines.get_or_init(|| {
            (0..self.dataset.n_users() as u32)
                .map(|u| self.rank_baseline(u, PRECOMPUTED_K).0)
                .collect()
        })
    }

    /// Baseline top-`k`, served from the precomputed prefix once warm. Ranking
    /// is a total order, so the prefix equals a fresh top-`k`.
    pub fn baseline(&self, user: u32, k: usize) -> (Vec<RankedItem>, bool) {
        if let (Some(cache), true) = (self.baselines.get(), k <= PRECOMPUTED_K) {
            let all = &cache[user as usize];
            let n_cands = self.dataset.n_items() - self.dataset.known_positives(user, true).len();
            (all[..k.min(all.len())].to_vec(), n_cands < k)
        } else {
            self.rank_baseline(user, k)
        }
    }

    fn isolation(&self) -> &Isolation {
        self.isolation.get_or_init(|| {
            let Some(g) = self.grouping.as_deref().and_then(|g| self.dataset.user_schema.group_index(g)) else {
                return Isolation { by_value: Vec::new() };
            };
            let n_values = self.dataset.user_schema.groups[g].values.len();
            let baselines = self.all_baselines();
            let h = self.dataset.histories();
            let mut hist = vec![Vec::new(); n_values];
            let mut recs = vec![Vec::new(); n_values];
            for u in 0..self.dataset.n_users() {
                let v = self.dataset.user_profiles[u].values[g] as usize;
                hist[v].push(h.train[u].clone());
                recs[v].push(baselines[u].iter().take(REPORT_K).map(|r| r.item).collect::<Vec<u32>>());
            }
            let one_vs_rest = |lists: &[Vec<Vec<u32>>], v: usize| -> f64 {
                let inside = GroupExposure::from_slates(lists[v].iter().map(|s| s.as_slice()));
                let rest = GroupExposure::from_slates(
                    lists
                        .iter()
                        .enumerate()
                        .filter(|&(w, _)| w != v)
                        .flat_map(|(_, ls)| ls.iter().map(|s| s.as_slice())),
                );
                isolation_index(&inside, &rest).unwrap_or(0.0)
            };
            Isolation {
                by_value: (0..n_values)
                    .map(|v| (one_vs_rest(&hist, v), one_vs_rest(&recs, v)))
                    .collect(),
            }
        })
    }

    /// Group label of `user` under the configured grouping.
    pub fn group_of(&self, user: u32) -> Option<String> {
        let name = self.grouping.as_deref()?;
        let g = self.dataset.user_schema.group_index(name)?;
        let group = &self.dataset.user_schema.groups[g];
        let v = self.dataset.user_profiles[user as usize].values[g] as usize;
        Some(format!("{name}={}", group.values[v]))
    }

    /// `(history, recommendation)` window signals of `user`.
    pub fn bubble_signals(&self, user: u32) -> (WindowSignals, WindowSignals) {
        let h = &self.dataset.histories().train[user as usize];
        let (slate, _) = self.baseline(user, REPORT_K);
        let slate: Vec<u32> = slate.iter().map(|r| r.item).collect();
        let (iso_h, iso_r) = self
            .grouping
            .as_deref()
            .and_then(|g| self.dataset.user_schema.group_index(g))
            .and_then(|g| {
                let v = self.dataset.user_profiles[user as usize].values[g] as usize;
                self.isolation().by_value.get(v).copied()
            })
            .unwrap_or((0.0, 0.0));
        let hist_mcd = {
            let d = category_distribution(h, &self.dataset);
            // share of history items carrying the largest category
            ucrs_core::data::largest_category(&d)
                .map(|c| {
                    h.iter()
                        .filter(|&&i| self.dataset.item_profiles[i as usize].has_category(c))
                        .count() as f64
                        / h.len() as f64
                })
                .unwrap_or(0.0)
        };
        let history = WindowSignals {
            coverage: coverage(h, &self.dataset) as f64,
            iso_index: iso_h,
            mcd: hist_mcd,
        };
        let recommendation = WindowSignals {
            coverage: coverage(&slate, &self.dataset) as f64,
            iso_index: iso_r,
            mcd: mcd(&slate, h, &self.dataset, REPORT_K).unwrap_or(0.0),
        };
        (history, recommendation)
    }
}
