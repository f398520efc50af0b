//! Slate files: one line per user, `user_id \t item,item,...`, raw ids.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset};

/// Which procedure and coefficients produced a slate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Target categories used by the ranking policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<usize>,
    /// Category whose items the ranking policy demotes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demoted: Option<usize>,
    #[serde(default)]
    pub predicted_targets: bool,
}

impl Provenance {
    pub fn baseline() -> Self {
        Provenance {
            source: "baseline".into(),
            ..Default::default()
        }
    }
}

/// Ranked top-k list for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSlate {
    pub user: u32,
    pub items: Vec<u32>,
    /// Ranking score per item (same order as `items`).
    pub scores: Vec<f64>,
    pub provenance: Provenance,
    /// Fewer than `k` candidates were available.
    #[serde(default)]
    pub short: bool,
}

pub fn write_slates(path: impl AsRef<Path>, slates: &[RecommendationSlate], dataset: &Dataset) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for s in slates {
            let items: Vec<&str> = s.items.iter().map(|&i| dataset.items.raw(i)).collect();
            writeln!(w, "{}\t{}", dataset.users.raw(s.user), items.join(","))?;
        }
        w.flush()
    };
    body().map_err(|e| DataError::io(path, e))
}

/// Reads a slate file against the dataset's vocabularies, as `(user, items)` rows.
pub fn read_slates(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Vec<(u32, Vec<u32>)>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let bad = |line: usize, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (user, items) = line.split_once('\t').unwrap_or((line, ""));
        let u = dataset
            .users
            .get(user.trim())
            .ok_or_else(|| bad(n + 1, format!("unknown user '{user}'")))?;
        let mut list = Vec::new();
        for raw in items.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let i = dataset
                .items
                .get(raw)
                .ok_or_else(|| bad(n + 1, format!("unknown item '{raw}'")))?;
            if list.contains(&i) {
                return Err(bad(n + 1, format!("duplicate item '{raw}'")));
            }
            list.push(i);
        }
        out.push((u, list));
    }
    Ok(out)
}
