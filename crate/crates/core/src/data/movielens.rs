//! Converters from the MovieLens distribution formats into the tab-separated
//! interaction / user-feature / item-category files the loaders read.
//!
//! ML-1M: `ratings.dat`, `users.dat`, `movies.dat` with `::` separators.
//! ML-100K: `u.data` (tab), `u.user` and `u.item` (`|`).
//! Both ship Latin-1 encoded text.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::DataError;

pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const USER_FEATURES_FILE: &str = "user_features.tsv";
pub const ITEM_CATEGORIES_FILE: &str = "item_categories.tsv";

const ML100K_GENRES: [&str; 19] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MovieLensVariant {
    Ml1m,
    Ml100k,
}

impl MovieLensVariant {
    /// Detects the variant from the files present in `dir`.
    pub fn detect(dir: &Path) -> Option<Self> {
        if dir.join("ratings.dat").is_file() && dir.join("movies.dat").is_file() {
            Some(MovieLensVariant::Ml1m)
        } else if dir.join("u.data").is_file() && dir.join("u.item").is_file() {
            Some(MovieLensVariant::Ml100k)
        } else {
            None
        }
    }
}

/// Paths of the converted files.
#[derive(Debug, Clone)]
pub struct ConvertedFiles {
    pub interactions: PathBuf,
    pub user_features: PathBuf,
    pub item_categories: PathBuf,
}

fn read_latin1(path: &Path) -> Result<String, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    Ok(bytes.iter().map(|&b| b as char).collect())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Buckets a raw age into {<18, 18–24, 25–34, 35–49, 50+}.
pub fn age_bucket(age: u32) -> &'static str {
    match age {
        0..=17 => "under18",
        18..=24 => "18-24",
        25..=34 => "25-34",
        35..=49 => "35-49",
        _ => "50+",
    }
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ").trim().to_string()
}

/// Converts a MovieLens directory into the three tab-separated input files under `out`.
pub fn convert(src: &Path, out: &Path) -> Result<(MovieLensVariant, ConvertedFiles), DataError> {
    let variant = MovieLensVariant::detect(src).ok_or_else(|| {
        DataError::Invalid(format!("{} contains neither ML-1M nor ML-100K files", src.display()))
    })?;
    fs::create_dir_all(out).map_err(|e| DataError::io(out, e))?;
    let files = ConvertedFiles {
        interactions: out.join(INTERACTIONS_FILE),
        user_features: out.join(USER_FEATURES_FILE),
        item_categories: out.join(ITEM_CATEGORIES_FILE),
    };
    let (ratings, users, items) = match variant {
        MovieLensVariant::Ml1m => ml1m(src)?,
        MovieLensVariant::Ml100k => ml100k(src)?,
    };
    for (path, body) in [
        (&files.interactions, ratings),
        (&files.user_features, users),
        (&files.item_categories, items),
    ] {
        let mut f = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| DataError::io(path, e))?;
    }
    Ok((variant, files))
}

fn ml1m(src: &Path) -> Result<(String, String, String), DataError> {
    let split = |path: &Path, n: usize| -> Result<Vec<Vec<String>>, DataError> {
        read_latin1(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let cols: Vec<String> = l.split("::").map(str::to_string).collect();
                if cols.len() != n {
                    return Err(parse_err(path, i + 1, format!("expected {n} '::' fields")));
                }
                Ok(cols)
            })
            .collect()
    };
    let mut ratings = String::new();
    for c in split(&src.join("ratings.dat"), 4)? {
        ratings.push_str(&format!("{}\t{}\t{}\t{}\n", c[0], c[1], c[2], c[3].trim()));
    }
    let mut users = String::new();
    let users_path = src.join("users.dat");
    if users_path.is_file() {
        for c in split(&users_path, 5)? {
            users.push_str(&format!("{}\tgender={}\tage={}\toccupation={}\n", c[0], c[1], c[2], c[3]));
        }
    }
    let mut items = String::new();
    for c in split(&src.join("movies.dat"), 3)? {
        items.push_str(&format!("{}\t{}\t{}\n", c[0], c[2].trim(), clean(&c[1])));
    }
    Ok((ratings, users, items))
}

fn ml100k(src: &Path) -> Result<(String, String, String), DataError> {
    let data_path = src.join("u.data");
    let mut ratings = String::new();
    for (i, line) in read_latin1(&data_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(parse_err(&data_path, i + 1, "expected 4 fields"));
        }
        ratings.push_str(&format!("{}\t{}\t{}\t{}\n", cols[0], cols[1], cols[2], cols[3]));
    }
    let mut users = String::new();
    let user_path = src.join("u.user");
    if user_path.is_file() {
        for (i, line) in read_latin1(&user_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('|').collect();
            if cols.len() < 4 {
                return Err(parse_err(&user_path, i + 1, "expected id|age|gender|occupation|zip"));
            }
            let age: u32 = cols[1]
                .parse()
                .map_err(|_| parse_err(&user_path, i + 1, format!("bad age '{}'", cols[1])))?;
            users.push_str(&format!(
                "{}\tgender={}\tage={}\toccupation={}\n",
                cols[0],
                cols[2],
                age_bucket(age),
                cols[3]
            ));
        }
    }
    let item_path = src.join("u.item");
    let mut items = String::new();
    for (i, line) in read_latin1(&item_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('|').collect();
        if cols.len() != 5 + ML100K_GENRES.len() {
            return Err(parse_err(&item_path, i + 1, "unexpected column count"));
        }
        let genres: Vec<&str> = ML100K_GENRES
            .iter()
            .zip(&cols[5..])
            .filter(|(_, flag)| flag.trim() == "1")
            .map(|(g, _)| *g)
            .collect();
        items.push_str(&format!("{}\t{}\t{}\n", cols[0], genres.join("|"), clean(cols[1])));
    }
    Ok((ratings, users, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_interactions, load_item_categories, load_user_features};

    #[test]
    fn converts_ml1m_layout() {
        let src = tempfile::tempdir().unwrap();
        fs::write(src.path().join("ratings.dat"), "1::10::5::978300760\n2::10::3::978300761\n").unwrap();
        fs::write(src.path().join("users.dat"), "1::F::1::10::48067\n2::M::56::16::70072\n").unwrap();
        fs::write(src.path().join("movies.dat"), b"10::Caf\xe9 (1995)::Comedy|Drama\n".as_slice()).unwrap();
        let out = tempfile::tempdir().unwrap();
        let (variant, files) = convert(src.path(), out.path()).unwrap();
        assert_eq!(variant, MovieLensVariant::Ml1m);
        let rows = load_interactions(&files.interactions).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].rating, 3);
        let users = load_user_features(&files.user_features).unwrap();
        assert_eq!(users[1].attrs[1], ("age".to_string(), "56".to_string()));
        let items = load_item_categories(&files.item_categories, false).unwrap();
        assert_eq!(items[0].categories, vec!["Comedy", "Drama"]);
        assert_eq!(items[0].title.as_deref(), Some("Café (1995)"));
    }

    #[test]
    fn converts_ml100k_layout() {
        let src = tempfile::tempdir().unwrap();
        fs::write(src.path().join("u.data"), "196\t242\t3\t881250949\n").unwrap();
        fs::write(src.path().join("u.user"), "196|49|M|writer|55105\n").unwrap();
        let mut flags = vec!["0"; 19];
        flags[5] = "1";
        flags[8] = "1";
        fs::write(
            src.path().join("u.item"),
            format!("242|Kolya (1996)|24-Jan-1997||http://x|{}\n", flags.join("|")),
        )
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        let (variant, files) = convert(src.path(), out.path()).unwrap();
        assert_eq!(variant, MovieLensVariant::Ml100k);
        let users = load_user_features(&files.user_features).unwrap();
        assert_eq!(users[0].attrs[1], ("age".to_string(), "35-49".to_string()));
        let items = load_item_categories(&files.item_categories, false).unwrap();
        assert_eq!(items[0].categories, vec!["Comedy", "Drama"]);
    }

    #[test]
    fn age_buckets() {
        assert_eq!(age_bucket(17), "under18");
        assert_eq!(age_bucket(18), "18-24");
        assert_eq!(age_bucket(34), "25-34");
        assert_eq!(age_bucket(35), "35-49");
        assert_eq!(age_bucket(50), "50+");
    }
}
