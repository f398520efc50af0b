use std::fs;
use std::path::Path;

use super::{DataError, RawInteraction};

/// A row of the user-feature file: `user_id \t attr=value \t attr=value ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRow {
    pub user_id: String,
    pub attrs: Vec<(String, String)>,
}

/// A row of the item-category file: `item_id \t cat1|cat2|... [\t title]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRow {
    pub item_id: String,
    pub categories: Vec<String>,
    pub title: Option<String>,
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a tab-separated `user_id \t item_id \t rating \t timestamp` file with no
/// header. Blank lines are skipped; rows are returned in file order.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<Vec<RawInteraction>, DataError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(parse_err(path, line_no, format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        let rating: u8 = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid rating '{}'", cols[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(parse_err(path, line_no, format!("rating {rating} outside [1,5]")));
        }
        let timestamp: u64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid timestamp '{}'", cols[3])))?;
        let user_id = cols[0].trim();
        let item_id = cols[1].trim();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(parse_err(path, line_no, "empty user or item id"));
        }
        out.push(RawInteraction {
            user_id: user_id.to_string(),
            item_id: item_id.to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

pub fn load_user_features(path: impl AsRef<Path>) -> Result<Vec<UserRow>, DataError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let user_id = cols.next().unwrap_or("").trim().to_string();
        if user_id.is_empty() {
            return Err(parse_err(path, n + 1, "empty user id"));
        }
        let mut attrs: Vec<(String, String)> = Vec::new();
        for col in cols {
            let (attr, value) = col
                .split_once('=')
                .ok_or_else(|| parse_err(path, n + 1, format!("expected attr=value, found '{col}'")))?;
            let (attr, value) = (attr.trim(), value.trim());
            if attr.is_empty() || value.is_empty() {
                return Err(parse_err(path, n + 1, format!("empty attribute or value in '{col}'")));
            }
            if attrs.iter().any(|(a, _)| a == attr) {
                return Err(parse_err(path, n + 1, format!("attribute '{attr}' repeated")));
            }
            attrs.push((attr.to_string(), value.to_string()));
        }
        out.push(UserRow { user_id, attrs });
    }
    Ok(out)
}

/// Reads the item-category file. With `keep_first_listed`, only the first listed
/// category of each item is retained (single-label datasets).
pub fn load_item_categories(path: impl AsRef<Path>, keep_first_listed: bool) -> Result<Vec<ItemRow>, DataError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(parse_err(path, n + 1, format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        let item_id = cols[0].trim().to_string();
        if item_id.is_empty() {
            return Err(parse_err(path, n + 1, "empty item id"));
        }
        let mut categories: Vec<String> = cols[1]
            .split('|')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if keep_first_listed {
            categories.truncate(1);
        }
        let title = cols.get(2).map(|t| t.trim().to_string()).filter(|t| !t.is_empty());
        out.push(ItemRow {
            item_id,
            categories,
            title,
        });
    }
    Ok(out)
}
