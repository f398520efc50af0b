//! On-disk form of a prepared [`Dataset`]: a JSON manifest plus tab-separated
//! columnar tables, one row per dense index.
//!
//! ```text
//! manifest.json   counts, schema, category names, preparation settings
//! users.tsv       raw_id \t attr=value ...        (row = user index)
//! items.tsv       raw_id \t cat|cat \t title      (row = item index)
//! train.tsv       user_index \t item_index \t timestamp
//! valid.tsv, test.tsv
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DataError, Dataset, Interaction, ItemProfile, PrepareConfig, PrepareStats, UserProfile, UserSchema, Vocab,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "ucrs-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub n_users: usize,
    pub n_items: usize,
    /// `N`
    pub n_user_features: usize,
    /// `M`
    pub n_categories: usize,
    pub splits: SplitSizes,
    pub user_schema: UserSchema,
    pub category_names: Vec<String>,
    #[serde(default)]
    pub prepare: Option<PrepareConfig>,
    #[serde(default)]
    pub stats: Option<PrepareStats>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn describe(dataset: &Dataset) -> Self {
        DatasetManifest {
            format: FORMAT.into(),
            version: VERSION,
            n_users: dataset.n_users(),
            n_items: dataset.n_items(),
            n_user_features: dataset.n_user_features(),
            n_categories: dataset.n_categories(),
            splits: SplitSizes {
                train: dataset.train.len(),
                valid: dataset.valid.len(),
                test: dataset.test.len(),
            },
            user_schema: dataset.user_schema.clone(),
            category_names: dataset.category_names.clone(),
            prepare: None,
            stats: None,
            seed: None,
        }
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| DataError::io(path, e))
}

/// Writes the dataset under `dir` (created if needed) with the given manifest extras.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let schema = &dataset.user_schema;
    write_file(&dir.join("users.tsv"), |w| {
        for (u, profile) in dataset.user_profiles.iter().enumerate() {
            write!(w, "{}", dataset.users.raw(u as u32))?;
            for (g, &v) in schema.groups.iter().zip(&profile.values) {
                write!(w, "\t{}={}", g.name, g.values[v as usize])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_file(&dir.join("items.tsv"), |w| {
        for (i, profile) in dataset.item_profiles.iter().enumerate() {
            let cats: Vec<&str> = profile
                .categories
                .iter()
                .map(|&c| dataset.category_names[c as usize].as_str())
                .collect();
            writeln!(
                w,
                "{}\t{}\t{}",
                dataset.items.raw(i as u32),
                cats.join("|"),
                profile.title.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    })?;
    for (name, split) in [("train.tsv", &dataset.train), ("valid.tsv", &dataset.valid), ("test.tsv", &dataset.test)] {
        write_file(&dir.join(name), |w| {
            for it in split.iter() {
                writeln!(w, "{}\t{}\t{}", it.user, it.item, it.timestamp)?;
            }
            Ok(())
        })?;
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| DataError::io(&path, e))
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn bad(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_split(path: &Path) -> Result<Vec<Interaction>, DataError> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            let parse = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(path, n + 1, format!("bad number '{s}'")));
            if cols.len() != 3 {
                return Err(bad(path, n + 1, "expected 3 columns"));
            }
            Ok(Interaction {
                user: parse(cols[0])? as u32,
                item: parse(cols[1])? as u32,
                timestamp: parse(cols[2])?,
            })
        })
        .collect()
}

/// Loads a dataset written by [`save_dataset`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Dataset, DatasetManifest), DataError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&read(&manifest_path)?)
        .map_err(|e| bad(&manifest_path, e.line(), e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(DataError::Invalid(format!(
            "unsupported dataset format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let schema = manifest.user_schema.clone();

    let users_path = dir.join("users.tsv");
    let mut user_ids = Vec::new();
    let mut user_profiles = Vec::new();
    for (n, line) in read(&users_path)?.lines().enumerate() {
        let mut cols = line.split('\t');
        user_ids.push(cols.next().unwrap_or("").to_string());
        let mut values = vec![u16::MAX; schema.groups.len()];
        for col in cols {
            let f = schema
                .feature_by_name(col)
                .ok_or_else(|| bad(&users_path, n + 1, format!("unknown feature '{col}'")))?;
            let g = schema.group_of(f).unwrap();
            values[g] = (f - schema.groups[g].offset) as u16;
        }
        if values.contains(&u16::MAX) {
            return Err(bad(&users_path, n + 1, "missing attribute group"));
        }
        user_profiles.push(UserProfile { values });
    }

    let items_path = dir.join("items.tsv");
    let mut item_ids = Vec::new();
    let mut item_profiles = Vec::new();
    for (n, line) in read(&items_path)?.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(bad(&items_path, n + 1, "expected id and categories"));
        }
        item_ids.push(cols[0].to_string());
        let mut categories = Vec::new();
        for c in cols[1].split('|') {
            let idx = manifest
                .category_names
                .iter()
                .position(|name| name == c)
                .ok_or_else(|| bad(&items_path, n + 1, format!("unknown category '{c}'")))?;
            categories.push(idx as u16);
        }
        categories.sort_unstable();
        let title = cols.get(2).filter(|t| !t.is_empty()).map(|t| t.to_string());
        item_profiles.push(ItemProfile { categories, title });
    }

    let dataset = Dataset::new(
        Vocab::from_ids(user_ids),
        Vocab::from_ids(item_ids),
        schema,
        user_profiles,
        manifest.category_names.clone(),
        item_profiles,
        read_split(&dir.join("train.tsv"))?,
        read_split(&dir.join("valid.tsv"))?,
        read_split(&dir.join("test.tsv"))?,
    )?;
    if dataset.n_users() != manifest.n_users
        || dataset.n_items() != manifest.n_items
        || dataset.train.len() != manifest.splits.train
        || dataset.valid.len() != manifest.splits.valid
        || dataset.test.len() != manifest.splits.test
    {
        return Err(DataError::Invalid("tables disagree with manifest counts".into()));
    }
    Ok((dataset, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;

    #[test]
    fn save_then_load_preserves_dataset() {
        let d = fixtures::tiny();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path(), &DatasetManifest::describe(&d)).unwrap();
        let (back, manifest) = load_dataset(dir.path()).unwrap();
        assert_eq!(manifest.n_user_features, 5);
        assert_eq!(manifest.n_categories, 3);
        assert_eq!(back.user_profiles, d.user_profiles);
        assert_eq!(back.item_profiles, d.item_profiles);
        assert_eq!(back.train, d.train);
        assert_eq!(back.test, d.test);
        assert_eq!(back.users.ids(), d.users.ids());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let d = fixtures::tiny();
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::describe(&d);
        m.splits.train += 1;
        save_dataset(&d, dir.path(), &m).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DataError::Invalid(_))));
    }
}
