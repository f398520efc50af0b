use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::isolation::{pairwise_isolation, GroupExposure};
use super::metrics::{coverage, mcd, ndcg_at_k, recall_at_k};
use super::severity::{severity_level, severity_score};
use super::{compensated_sum, mean, DetectError};
use crate::data::{category_distribution, largest_category, CategoryDistribution, Dataset};

/// How users are partitioned into groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    All,
    /// By the value of one user-attribute group (e.g. `gender`).
    Attribute(String),
    /// By the user's largest train category.
    MajorityCategory,
}

impl std::str::FromStr for Grouping {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" => Err(DetectError::UnknownGrouping(s.into())),
            "all" => Ok(Grouping::All),
            "majority-category" => Ok(Grouping::MajorityCategory),
            other => Ok(Grouping::Attribute(other.to_string())),
        }
    }
}

impl Grouping {
    /// Non-empty groups as `(label, users)`, users ascending, groups in value order.
    pub fn partition(&self, dataset: &Dataset, users: &[u32]) -> Result<Vec<(String, Vec<u32>)>, DetectError> {
        let mut groups: Vec<(String, Vec<u32>)> = match self {
            Grouping::All => vec![("all".into(), Vec::new())],
            Grouping::Attribute(name) => {
                let g = dataset
                    .user_schema
                    .group_index(name)
                    .ok_or_else(|| DetectError::UnknownGrouping(name.clone()))?;
                dataset.user_schema.groups[g]
                    .values
                    .iter()
                    .map(|v| (format!("{name}={v}"), Vec::new()))
                    .collect()
            }
            Grouping::MajorityCategory => dataset.category_names.iter().map(|c| (c.clone(), Vec::new())).collect(),
        };
        let mut sorted = users.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for u in sorted {
            let slot = match self {
                Grouping::All => Some(0),
                Grouping::Attribute(name) => {
                    let g = dataset.user_schema.group_index(name).unwrap();
                    Some(dataset.user_profiles[u as usize].values[g] as usize)
                }
                Grouping::MajorityCategory => largest_category(&dataset.train_distribution(u)),
            };
            if let Some(s) = slot {
                groups[s].1.push(u);
            }
        }
        groups.retain(|(_, us)| !us.is_empty());
        Ok(groups)
    }

    pub fn label(&self) -> String {
        match self {
            Grouping::All => "all".into(),
            Grouping::Attribute(a) => a.clone(),
            Grouping::MajorityCategory => "majority-category".into(),
        }
    }
}

/// History vs recommendation category shares for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBias {
    pub group: String,
    pub n_users: usize,
    pub history: Vec<f64>,
    pub recommendation: Vec<f64>,
    /// Largest category of the group's mean history distribution.
    pub majority_category: Option<usize>,
    /// `recommendation[majority] − history[majority]`.
    pub majority_delta: Option<f64>,
    /// Users whose own majority category has a larger share in their slate than in their history.
    pub users_amplified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub category_names: Vec<String>,
    pub groups: Vec<GroupBias>,
}

/// Aligned per-user history and slate distributions, grouped by `groups[u]` (first-appearance order).
pub fn bias_amplification_report(
    history: &[CategoryDistribution],
    slates: &[CategoryDistribution],
    groups: &[String],
    category_names: &[String],
) -> Result<BiasReport, DetectError> {
    if history.len() != slates.len() || history.len() != groups.len() {
        return Err(DetectError::DimensionMismatch(history.len(), slates.len().min(groups.len())));
    }
    let m = category_names.len();
    let mut order: Vec<&String> = Vec::new();
    let mut members: HashMap<&String, Vec<usize>> = HashMap::new();
    for (u, g) in groups.iter().enumerate() {
        if !members.contains_key(g) {
            order.push(g);
        }
        members.entry(g).or_default().push(u);
    }
    let mut out = Vec::new();
    for g in order {
        let idx = &members[g];
        let avg = |dists: &[CategoryDistribution]| -> Result<Vec<f64>, DetectError> {
            let mut cols = vec![Vec::with_capacity(idx.len()); m];
            for &u in idx {
                if dists[u].len() != m {
                    return Err(DetectError::DimensionMismatch(dists[u].len(), m));
                }
                for (c, &p) in dists[u].probs.iter().enumerate() {
                    cols[c].push(p);
                }
            }
            Ok(cols.into_iter().map(|c| compensated_sum(c) / idx.len() as f64).collect())
        };
        let h = avg(history)?;
        let r = avg(slates)?;
        let major = largest_category(&CategoryDistribution { probs: h.clone() });
        let users_amplified = idx
            .iter()
            .filter(|&&u| {
                largest_category(&history[u]).is_some_and(|c| slates[u].probs[c] > history[u].probs[c])
            })
            .count();
        out.push(GroupBias {
            group: g.clone(),
            n_users: idx.len(),
            majority_delta: major.map(|c| r[c] - h[c]),
            majority_category: major,
            history: h,
            recommendation: r,
            users_amplified,
        });
    }
    Ok(BiasReport {
        category_names: category_names.to_vec(),
        groups: out,
    })
}

/// Macro-averaged metrics of one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetrics {
    pub group: String,
    pub n_users: usize,
    /// Users with test positives (the Recall/NDCG denominator).
    pub n_eval_users: usize,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub coverage: Option<f64>,
    pub mcd: Option<f64>,
    pub severity: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub k: usize,
    pub grouping: String,
    pub overall: CohortMetrics,
    pub groups: Vec<CohortMetrics>,
    /// Mean pairwise isolation index between the groups; `None` with fewer than two.
    pub iso_index: Option<f64>,
    pub bias: BiasReport,
}

fn cohort_metrics(
    name: &str,
    users: &[u32],
    slates: &HashMap<u32, &[u32]>,
    dataset: &Dataset,
    k: usize,
    iso: f64,
) -> CohortMetrics {
    let h = dataset.histories();
    let slate = |u: u32| slates.get(&u).copied().unwrap_or(&[]);
    let recall: Vec<f64> = users.iter().filter_map(|&u| recall_at_k(slate(u), &h.test[u as usize], k)).collect();
    let ndcg = mean(users.iter().filter_map(|&u| ndcg_at_k(slate(u), &h.test[u as usize], k)));
    let cov = mean(users.iter().map(|&u| coverage(slate(u), dataset) as f64));
    let mcd_v = mean(users.iter().filter_map(|&u| mcd(slate(u), &h.train[u as usize], dataset, k).ok()));
    CohortMetrics {
        group: name.to_string(),
        n_users: users.len(),
        n_eval_users: recall.len(),
        recall: mean(recall),
        ndcg,
        severity: match (cov, mcd_v) {
            (Some(c), Some(m)) => Some(severity_level(severity_score(c, iso, m))),
            _ => None,
        },
        coverage: cov,
        mcd: mcd_v,
    }
}

/// Accuracy, bubble metrics and history-vs-recommendation tables for the users in `slates`.
pub fn cohort_report(
    dataset: &Dataset,
    slates: &[(u32, Vec<u32>)],
    grouping: &Grouping,
    k: usize,
) -> Result<Report, DetectError> {
    let by_user: HashMap<u32, &[u32]> = slates.iter().map(|(u, s)| (*u, s.as_slice())).collect();
    let users: Vec<u32> = slates.iter().map(|(u, _)| *u).collect();
    let groups = grouping.partition(dataset, &users)?;
    let exposures: Vec<GroupExposure> = groups
        .iter()
        .map(|(_, us)| GroupExposure::from_slates(us.iter().map(|u| by_user[u])))
        .collect();
    let iso_index = if exposures.len() >= 2 && exposures.iter().all(|e| e.total() > 0) {
        Some(pairwise_isolation(&exposures)?)
    } else {
        None
    };
    let iso = iso_index.unwrap_or(0.0);
    let mut all: Vec<u32> = users.clone();
    all.sort_unstable();
    all.dedup();

    let mut hist = Vec::new();
    let mut recs = Vec::new();
    let mut labels = Vec::new();
    for (name, us) in &groups {
        for &u in us {
            hist.push(dataset.train_distribution(u));
            recs.push(category_distribution(by_user[&u], dataset));
            labels.push(name.clone());
        }
    }
    Ok(Report {
        k,
        grouping: grouping.label(),
        overall: cohort_metrics("all", &all, &by_user, dataset, k, iso),
        groups: groups
            .iter()
            .map(|(name, us)| cohort_metrics(name, us, &by_user, dataset, k, iso))
            .collect(),
        iso_index,
        bias: bias_amplification_report(&hist, &recs, &labels, &dataset.category_names)?,
    })
}
