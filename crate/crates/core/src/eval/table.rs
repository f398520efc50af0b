use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, CohortUser};
use super::config::Scenario;
use super::variants::GridPoint;
use super::EvalError;
use crate::data::{category_distribution, CategoryDistribution, Dataset};
use crate::detect::{coverage, dis_euc, mcd, mean, ndcg_at_k, pairwise_isolation, recall_at_k, tcd, w_ndcg_at_k, GroupExposure, RecommendationSlate};
use crate::model::EvalSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    Recall,
    #[serde(rename = "NDCG")]
    Ndcg,
    #[serde(rename = "W-NDCG")]
    WNdcg,
    #[serde(rename = "Iso-Index")]
    IsoIndex,
    #[serde(rename = "DIS-EUC")]
    DisEuc,
    #[serde(rename = "MCD")]
    Mcd,
    #[serde(rename = "TCD")]
    Tcd,
    Coverage,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::Recall => "Recall",
            Column::Ndcg => "NDCG",
            Column::WNdcg => "W-NDCG",
            Column::IsoIndex => "Iso-Index",
            Column::DisEuc => "DIS-EUC",
            Column::Mcd => "MCD",
            Column::Tcd => "TCD",
            Column::Coverage => "Coverage",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Column::IsoIndex | Column::DisEuc | Column::Mcd)
    }

    pub fn for_scenario(scenario: Scenario) -> Vec<Column> {
        use Column::*;
        match scenario {
            Scenario::UserFine => vec![Recall, Ndcg, IsoIndex, DisEuc, Coverage],
            Scenario::UserCoarse => vec![Recall, Ndcg, IsoIndex, Coverage],
            Scenario::ItemFine | Scenario::ItemCoarse => vec![Recall, Ndcg, WNdcg, Mcd, Tcd, Coverage],
        }
    }
}

/// Per-user values of one slate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub w_ndcg: Option<f64>,
    pub mcd: Option<f64>,
    pub tcd: Option<f64>,
    pub coverage: f64,
}

/// Metrics of `slate` against the positives of `split`.
pub fn user_metrics(slate: &[u32], cu: &CohortUser, dataset: &Dataset, split: EvalSplit, k: usize) -> UserMetrics {
    let h = dataset.histories();
    let positives = match split {
        EvalSplit::Valid => &h.valid[cu.user as usize],
        EvalSplit::Test => &h.test[cu.user as usize],
    };
    let target = cu.target_category;
    UserMetrics {
        recall: recall_at_k(slate, positives, k),
        ndcg: ndcg_at_k(slate, positives, k),
        w_ndcg: target.and_then(|t| {
            w_ndcg_at_k(slate, positives, |i| dataset.item_profiles[i as usize].has_category(t), k)
        }),
        mcd: mcd(slate, &h.train[cu.user as usize], dataset, k).ok(),
        tcd: target.map(|t| tcd(slate, t, dataset, k)),
        coverage: coverage(slate, dataset) as f64,
    }
}

/// Macro average of the per-user metrics, skipping undefined entries.
pub fn average(ms: &[UserMetrics]) -> UserMetrics {
    UserMetrics {
        recall: mean(ms.iter().filter_map(|m| m.recall)),
        ndcg: mean(ms.iter().filter_map(|m| m.ndcg)),
        w_ndcg: mean(ms.iter().filter_map(|m| m.w_ndcg)),
        mcd: mean(ms.iter().filter_map(|m| m.mcd)),
        tcd: mean(ms.iter().filter_map(|m| m.tcd)),
        coverage: mean(ms.iter().map(|m| m.coverage)).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: String,
    /// Selected coefficients, for tuned rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GridPoint>,
    /// Mean over seeds, one cell per column.
    pub values: Vec<Option<f64>>,
    /// One row of cells per seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub cohort_size: usize,
    pub k: usize,
    pub columns: Vec<Column>,
    pub rows: Vec<TableRow>,
}

fn group_means(
    cohort: &Cohort,
    slates: &[RecommendationSlate],
    dataset: &Dataset,
) -> BTreeMap<usize, CategoryDistribution> {
    let mut by_group: BTreeMap<usize, Vec<CategoryDistribution>> = BTreeMap::new();
    for (cu, s) in cohort.users.iter().zip(slates) {
        if let Some(g) = cu.own_feature {
            by_group.entry(g).or_default().push(category_distribution(&s.items, dataset));
        }
    }
    by_group
        .into_iter()
        .map(|(g, ds)| (g, CategoryDistribution::mean(&ds, dataset.n_categories())))
        .collect()
}

fn isolation(cohort: &Cohort, slates: &[RecommendationSlate]) -> Result<Option<f64>, EvalError> {
    let mut groups: BTreeMap<usize, Vec<&[u32]>> = BTreeMap::new();
    for (cu, s) in cohort.users.iter().zip(slates) {
        if let Some(g) = cu.own_feature {
            groups.entry(g).or_default().push(&s.items);
        }
    }
    let exposures: Vec<GroupExposure> = groups
        .into_values()
        .map(GroupExposure::from_slates)
        .filter(|e| e.total() > 0)
        .collect();
    if exposures.len() < 2 {
        return Ok(None);
    }
    Ok(Some(pairwise_isolation(&exposures)?))
}

/// Builds one table from per-variant slates (one slate per cohort user, in cohort
/// order). `reference` holds the base model's slates, used for the group
/// averages of DIS-EUC.
pub fn emit_table(
    cohort: &Cohort,
    dataset: &Dataset,
    k: usize,
    rows: &[(String, Option<GridPoint>, &[RecommendationSlate])],
    reference: Option<&[RecommendationSlate]>,
) -> Result<ResultTable, EvalError> {
    let columns = Column::for_scenario(cohort.scenario);
    let ids = cohort.user_ids();
    let check = |name: &str, slates: &[RecommendationSlate]| {
        if slates.len() != ids.len() || slates.iter().zip(&ids).any(|(s, &u)| s.user != u) {
            return Err(EvalError::CohortMismatch(name.to_string()));
        }
        Ok(())
    };
    let refs = match reference {
        Some(r) if columns.contains(&Column::DisEuc) => {
            check("reference", r)?;
            Some(group_means(cohort, r, dataset))
        }
        _ => None,
    };
    let mut out = Vec::with_capacity(rows.len());
    for (name, point, slates) in rows {
        check(name, slates)?;
        let per_user: Vec<UserMetrics> = cohort
            .users
            .iter()
            .zip(slates.iter())
            .map(|(cu, s)| user_metrics(&s.items, cu, dataset, EvalSplit::Test, k))
            .collect();
        let avg = average(&per_user);
        let mut values = Vec::with_capacity(columns.len());
        for c in &columns {
            let v = match c {
                Column::Recall => avg.recall,
                Column::Ndcg => avg.ndcg,
                Column::WNdcg => avg.w_ndcg,
                Column::Mcd => avg.mcd,
                Column::Tcd => avg.tcd,
                Column::Coverage => Some(avg.coverage),
                Column::IsoIndex => isolation(cohort, slates)?,
                Column::DisEuc => match &refs {
                    Some(refs) => {
                        let mut vals = Vec::new();
                        for (cu, s) in cohort.users.iter().zip(slates.iter()) {
                            let (Some(own), Some(target)) = (cu.own_feature, cu.target_feature) else {
                                continue;
                            };
                            let (Some(o), Some(t)) = (refs.get(&own), refs.get(&target)) else {
                                continue;
                            };
                            vals.push(dis_euc(&category_distribution(&s.items, dataset), o, t)?);
                        }
                        mean(vals)
                    }
                    None => None,
                },
            };
            values.push(v);
        }
        out.push(TableRow {
            variant: name.clone(),
            point: *point,
            values,
            per_seed: Vec::new(),
        });
    }
    Ok(ResultTable {
        scenario: cohort.scenario,
        model: None,
        cohort_size: cohort.len(),
        k,
        columns,
        rows: out,
    })
}

/// Averages cell-wise over per-seed tables with identical shape; keeps each seed's cells.
pub fn merge_seeds(tables: Vec<ResultTable>) -> Result<ResultTable, EvalError> {
    let mut it = tables.into_iter();
    let mut first = it.next().ok_or_else(|| EvalError::Config("no tables to merge".into()))?;
    let rest: Vec<ResultTable> = it.collect();
    for row in &mut first.rows {
        row.per_seed = vec![row.values.clone()];
    }
    for t in rest {
        if t.rows.len() != first.rows.len() || t.columns != first.columns {
            return Err(EvalError::CohortMismatch("seed tables differ in shape".into()));
        }
        for (a, b) in first.rows.iter_mut().zip(t.rows) {
            a.per_seed.push(b.values);
        }
    }
    for row in &mut first.rows {
        let n = row.values.len();
        row.values = (0..n).map(|c| mean(row.per_seed.iter().filter_map(|s| s[c]))).collect();
        if row.per_seed.len() == 1 {
            row.per_seed.clear();
        }
    }
    Ok(first)
}

impl ResultTable {
    /// Index of the best row per column; rows named `Random` are not ranked.
    pub fn best_rows(&self) -> Vec<Option<usize>> {
        (0..self.columns.len())
            .map(|c| {
                let up = self.columns[c].higher_is_better();
                let mut best: Option<(usize, f64)> = None;
                for (r, row) in self.rows.iter().enumerate() {
                    if row.variant == "Random" {
                        continue;
                    }
                    let Some(v) = row.values[c] else { continue };
                    let better = match best {
                        None => true,
                        Some((_, b)) => (up && v > b) || (!up && v < b),
                    };
                    if better {
                        best = Some((r, v));
                    }
                }
                best.map(|(r, _)| r)
            })
            .collect()
    }

    /// Aligned text table; `↑`/`↓` mark the preferred direction, `**x**` the best row.
    pub fn render_text(&self) -> String {
        let best = self.best_rows();
        let header: Vec<String> = std::iter::once("Method".to_string())
            .chain(
                self.columns
                    .iter()
                    .map(|c| format!("{} {}", c.name(), if c.higher_is_better() { "↑" } else { "↓" })),
            )
            .collect();
        let mut cells: Vec<Vec<String>> = vec![header];
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.variant.clone()];
            for (c, v) in row.values.iter().enumerate() {
                let s = match v {
                    Some(v) => format!("{v:.4}"),
                    None => "-".into(),
                };
                line.push(if best[c] == Some(r) { format!("**{s}**") } else { s });
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} / {} / cohort {} / top-{}",
            self.scenario,
            self.model.as_deref().unwrap_or("-"),
            self.cohort_size,
            self.k
        );
        for (i, line) in cells.iter().enumerate() {
            let padded: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    let pad = widths[c] - s.chars().count();
                    if c == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use crate::detect::Provenance;
    use crate::eval::cohort::select_cohort;

    fn slate(user: u32, items: &[u32]) -> RecommendationSlate {
        RecommendationSlate {
            user,
            items: items.to_vec(),
            scores: vec![0.0; items.len()],
            provenance: Provenance::default(),
            short: false,
        }
    }

    #[test]
    fn single_user_table_equals_user_metrics() {
        let d = fixtures::tiny();
        let mut c = select_cohort(Scenario::ItemFine, &d, None).unwrap();
        c.users.truncate(1);
        let cu = c.users[0].clone();
        let s = vec![slate(cu.user, &[3, 4, 0])];
        let t = emit_table(&c, &d, 3, &[("x".into(), None, &s)], None).unwrap();
        let m = user_metrics(&s[0].items, &cu, &d, EvalSplit::Test, 3);
        assert_eq!(t.rows[0].values, vec![m.recall, m.ndcg, m.w_ndcg, m.mcd, m.tcd, Some(m.coverage)]);
    }

    #[test]
    fn identical_slates_give_identical_rows() {
        let d = fixtures::tiny();
        let c = select_cohort(Scenario::UserFine, &d, None).unwrap();
        let s: Vec<_> = c.users.iter().map(|cu| slate(cu.user, &[3, 4])).collect();
        let t = emit_table(&c, &d, 2, &[("a".into(), None, &s), ("b".into(), None, &s)], Some(&s)).unwrap();
        assert_eq!(t.rows[0].values, t.rows[1].values);
        // same exposure in both gender groups
        assert_eq!(t.rows[0].values[2], Some(0.0));
        // both groups average the same distribution, so distances cancel
        assert_eq!(t.rows[0].values[3], Some(0.0));
    }

    #[test]
    fn disjoint_group_exposure_isolates_fully() {
        let d = fixtures::tiny();
        let c = select_cohort(Scenario::UserFine, &d, None).unwrap();
        let s = vec![slate(0, &[3]), slate(1, &[4])];
        let t = emit_table(&c, &d, 1, &[("a".into(), None, &s)], Some(&s)).unwrap();
        assert!((t.rows[0].values[2].unwrap() - 1.0).abs() < 1e-12);
        // user 0 (drama slate) vs ref F = drama, M = {comedy, drama}/2: ‖d−ĝ‖ − ‖d−ḡ‖ = √0.5 − 0
        // user 1 (item 4 slate) vs own M ref = itself, target F ref = drama: √0.5 − 0
        assert!((t.rows[0].values[3].unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_cohort_is_rejected() {
        let d = fixtures::tiny();
        let c = select_cohort(Scenario::UserFine, &d, None).unwrap();
        let s = vec![slate(0, &[3])];
        assert!(matches!(
            emit_table(&c, &d, 1, &[("a".into(), None, &s)], None),
            Err(EvalError::CohortMismatch(_))
        ));
    }

    #[test]
    fn text_marks_best_and_direction() {
        let t = ResultTable {
            scenario: Scenario::UserCoarse,
            model: Some("fm".into()),
            cohort_size: 2,
            k: 10,
            columns: vec![Column::Recall, Column::IsoIndex],
            rows: vec![
                TableRow {
                    variant: "Random".into(),
                    point: None,
                    values: vec![Some(0.9), Some(0.0)],
                    per_seed: vec![],
                },
                TableRow {
                    variant: "base".into(),
                    point: None,
                    values: vec![Some(0.1), Some(0.3)],
                    per_seed: vec![],
                },
                TableRow {
                    variant: "UCI".into(),
                    point: None,
                    values: vec![Some(0.2), Some(0.2)],
                    per_seed: vec![],
                },
            ],
        };
        assert_eq!(t.best_rows(), vec![Some(2), Some(2)]);
        let txt = t.render_text();
        assert!(txt.contains("Recall ↑"));
        assert!(txt.contains("Iso-Index ↓"));
        assert!(txt.contains("**0.2000**"));
        assert!(!txt.contains("**0.9000**"));
    }

    #[test]
    fn merging_two_seeds_averages_cells() {
        let row = |v: f64| TableRow {
            variant: "base".into(),
            point: None,
            values: vec![Some(v)],
            per_seed: vec![],
        };
        let mk = |v| ResultTable {
            scenario: Scenario::ItemFine,
            model: None,
            cohort_size: 1,
            k: 10,
            columns: vec![Column::Recall],
            rows: vec![row(v)],
        };
        let m = merge_seeds(vec![mk(0.2), mk(0.4)]).unwrap();
        assert!((m.rows[0].values[0].unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(m.rows[0].per_seed.len(), 2);
    }
}
