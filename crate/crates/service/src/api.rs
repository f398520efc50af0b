//! JSON bodies and the functions that build them. The CLI calls the same
//! builders, so both surfaces return identical documents.

use serde::{Deserialize, Serialize};
use ucrs_core::control::{apply_control, CommandJson, ControlContext, ControlError, RankedItem};
use ucrs_core::data::{category_distribution, CategoryDistribution};
use ucrs_core::detect::{coverage, mcd, severity, BubbleReport, Provenance, SEVERITY_RULE};

use crate::snapshot::{ServingSnapshot, REPORT_K};

/// Machine-readable error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// An error with its HTTP status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    pub fn unknown_user(raw: &str) -> Self {
        ApiError::new(404, "unknown_user", format!("no user with id '{raw}'"))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.body.code, self.status, self.body.message)
    }
}

impl std::error::Error for ApiError {}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::InvalidCommand(m) => ApiError::new(422, "invalid_command", m),
            ControlError::Precondition(m) => ApiError::new(422, "precondition_failed", m),
            ControlError::UnknownUser(u) => ApiError::unknown_user(&u),
            ControlError::PredictorMissing => ApiError::new(422, "predictor_missing", e.to_string()),
            other => ApiError::new(500, "internal", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateItem {
    pub item: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub categories: Vec<String>,
    pub score: f64,
}

/// Provenance with categories named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceJson {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demoted: Option<String>,
    pub predicted_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateJson {
    pub user: String,
    pub k: usize,
    pub items: Vec<SlateItem>,
    /// Fewer than `k` candidates existed.
    pub short: bool,
    pub provenance: ProvenanceJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateStats {
    pub mcd: Option<f64>,
    /// Share of the slate in any target category; `None` without targets.
    pub tcd: Option<f64>,
    pub coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    /// Items in the adjusted slate but not the baseline, in adjusted order.
    pub entering: Vec<String>,
    /// Items in the baseline but not the adjusted slate, in baseline order.
    pub leaving: Vec<String>,
    pub before: SlateStats,
    pub after: SlateStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResponse {
    pub user: String,
    pub command: CommandJson,
    pub baseline: SlateJson,
    pub adjusted: SlateJson,
    pub delta: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleReportJson {
    pub user: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Level after the history → recommendation trend rule.
    pub severity: u8,
    pub severity_rule: String,
    /// `history` then `recommendation`.
    pub windows: Vec<BubbleReport>,
    pub history_distribution: Vec<CategoryShare>,
    pub recommendation_distribution: Vec<CategoryShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub index: usize,
    pub name: String,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroupInfo {
    pub name: String,
    pub values: Vec<String>,
    /// Feature names (`attr=value`) accepted as command targets.
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub categories: Vec<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryJson {
    pub user: String,
    pub items: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

fn user(snap: &ServingSnapshot, raw: &str) -> Result<u32, ApiError> {
    snap.user_index(raw).ok_or_else(|| ApiError::unknown_user(raw))
}

fn categories(snap: &ServingSnapshot, item: u32) -> Vec<String> {
    snap.dataset.item_profiles[item as usize]
        .categories
        .iter()
        .map(|&c| snap.dataset.category_names[c as usize].clone())
        .collect()
}

fn slate_json(snap: &ServingSnapshot, raw: &str, k: usize, ranked: &[RankedItem], short: bool, p: &Provenance) -> SlateJson {
    let names = &snap.dataset.category_names;
    SlateJson {
        user: raw.to_string(),
        k,
        items: ranked
            .iter()
            .map(|r| SlateItem {
                item: snap.dataset.items.raw(r.item).to_string(),
                title: snap.dataset.item_profiles[r.item as usize].title.clone(),
                categories: categories(snap, r.item),
                score: r.adjusted,
            })
            .collect(),
        short,
        provenance: ProvenanceJson {
            source: p.source.clone(),
            alpha: p.alpha,
            beta: p.beta,
            targets: p.targets.iter().map(|&c| names[c].clone()).collect(),
            demoted: p.demoted.map(|c| names[c].clone()),
            predicted_targets: p.predicted_targets,
        },
    }
}

/// `GET /users/{id}/recommendations?k=`.
pub fn recommendations(snap: &ServingSnapshot, raw: &str, k: usize) -> Result<SlateJson, ApiError> {
    let u = user(snap, raw)?;
    let (ranked, short) = snap.baseline(u, k);
    Ok(slate_json(snap, raw, k, &ranked, short, &Provenance::baseline()))
}

fn stats(snap: &ServingSnapshot, user: u32, items: &[u32], targets: &[usize], k: usize) -> SlateStats {
    let d = &snap.dataset;
    let tcd = (!targets.is_empty() && k > 0).then(|| {
        items
            .iter()
            .take(k)
            .filter(|&&i| targets.iter().any(|&t| d.item_profiles[i as usize].has_category(t)))
            .count() as f64
            / k as f64
    });
    SlateStats {
        mcd: mcd(items, &d.histories().train[user as usize], d, k).ok(),
        tcd,
        coverage: coverage(items, d),
    }
}

/// `POST /users/{id}/controls`: resolves, validates and applies one command.
pub fn control_response(snap: &ServingSnapshot, raw: &str, command: &CommandJson, k: usize) -> Result<ControlResponse, ApiError> {
    let u = user(snap, raw)?;
    let cmd = command.resolve(&snap.dataset)?;
    let ctx = ControlContext::new(&snap.model, &snap.items, &snap.dataset).with_predictor(snap.predictor.as_ref());
    let adjusted = apply_control(&ctx, u, &cmd, k)?;
    let (base, base_short) = snap.baseline(u, k);
    let base_items: Vec<u32> = base.iter().map(|r| r.item).collect();
    let ranked: Vec<RankedItem> = adjusted
        .items
        .iter()
        .zip(&adjusted.scores)
        .map(|(&item, &s)| RankedItem {
            item,
            adjusted: s,
            base: s,
            r: 1,
        })
        .collect();
    let raw_item = |i: &u32| snap.dataset.items.raw(*i).to_string();
    let targets = &adjusted.provenance.targets;
    let delta = Delta {
        entering: adjusted.items.iter().filter(|i| !base_items.contains(i)).map(raw_item).collect(),
        leaving: base_items.iter().filter(|i| !adjusted.items.contains(i)).map(raw_item).collect(),
        before: stats(snap, u, &base_items, targets, k),
        after: stats(snap, u, &adjusted.items, targets, k),
    };
    Ok(ControlResponse {
        user: raw.to_string(),
        command: cmd.to_json(&snap.dataset),
        baseline: slate_json(snap, raw, k, &base, base_short, &Provenance::baseline()),
        adjusted: slate_json(snap, raw, k, &ranked, adjusted.short, &adjusted.provenance),
        delta,
    })
}

fn shares(snap: &ServingSnapshot, d: &CategoryDistribution) -> Vec<CategoryShare> {
    snap.dataset
        .category_names
        .iter()
        .zip(&d.probs)
        .map(|(c, &p)| CategoryShare {
            category: c.clone(),
            share: p,
        })
        .collect()
}

/// `GET /users/{id}/bubble-report`.
pub fn bubble_report(snap: &ServingSnapshot, raw: &str) -> Result<BubbleReportJson, ApiError> {
    let u = user(snap, raw)?;
    let (h, r) = snap.bubble_signals(u);
    let windows = vec![
        BubbleReport::new(h.coverage, h.iso_index, h.mcd, "history"),
        BubbleReport::new(r.coverage, r.iso_index, r.mcd, "recommendation"),
    ];
    let (slate, _) = snap.baseline(u, REPORT_K);
    let slate: Vec<u32> = slate.iter().map(|x| x.item).collect();
    Ok(BubbleReportJson {
        user: raw.to_string(),
        k: REPORT_K,
        group: snap.group_of(u),
        severity: severity(&windows),
        severity_rule: SEVERITY_RULE.into(),
        windows,
        history_distribution: shares(snap, &snap.dataset.train_distribution(u)),
        recommendation_distribution: shares(snap, &category_distribution(&slate, &snap.dataset)),
    })
}

/// `GET /catalog/categories`.
pub fn catalog_categories(snap: &ServingSnapshot) -> Vec<CategoryInfo> {
    let mut counts = vec![0; snap.dataset.n_categories()];
    for p in &snap.dataset.item_profiles {
        for &c in &p.categories {
            counts[c as usize] += 1;
        }
    }
    snap.dataset
        .category_names
        .iter()
        .enumerate()
        .map(|(index, name)| CategoryInfo {
            index,
            name: name.clone(),
            n_items: counts[index],
        })
        .collect()
}

/// `GET /catalog/user-features`.
pub fn catalog_user_features(snap: &ServingSnapshot) -> Vec<FeatureGroupInfo> {
    snap.dataset
        .user_schema
        .groups
        .iter()
        .map(|g| FeatureGroupInfo {
            name: g.name.clone(),
            values: g.values.clone(),
            features: g.values.iter().map(|v| format!("{}={v}", g.name)).collect(),
        })
        .collect()
}

/// `GET /users/{id}/history`: train interactions, oldest first.
pub fn history(snap: &ServingSnapshot, raw: &str) -> Result<HistoryJson, ApiError> {
    let u = user(snap, raw)?;
    Ok(HistoryJson {
        user: raw.to_string(),
        items: snap.history[u as usize]
            .iter()
            .map(|&(item, timestamp)| HistoryEntry {
                item: snap.dataset.items.raw(item).to_string(),
                title: snap.dataset.item_profiles[item as usize].title.clone(),
                categories: categories(snap, item),
                timestamp,
            })
            .collect(),
    })
}

pub fn health(snap: &ServingSnapshot) -> Health {
    Health {
        status: "ok".into(),
        version: snap.version.clone(),
    }
}
