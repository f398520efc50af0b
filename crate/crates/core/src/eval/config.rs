use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::control::{PredictorConfig, MAX_K_TARGETS};
use crate::model::{ModelKind, TrainConfig};

/// Which control the cohort exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    UserFine,
    UserCoarse,
    ItemFine,
    ItemCoarse,
}

impl Scenario {
    pub fn is_user(self) -> bool {
        matches!(self, Scenario::UserFine | Scenario::UserCoarse)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::UserFine => "user_fine",
            Scenario::UserCoarse => "user_coarse",
            Scenario::ItemFine => "item_fine",
            Scenario::ItemCoarse => "item_coarse",
        }
    }

    /// Attribute group used when the config names none.
    pub fn default_attribute(self) -> Option<&'static str> {
        match self {
            Scenario::UserFine => Some("gender"),
            Scenario::UserCoarse => Some("age"),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A row of a result table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Unmodified model.
    Base,
    /// Model trained without user attributes.
    WoUF,
    /// Model trained without item categories.
    WoIF,
    /// Fine user edit, no deduction.
    ChangeUF,
    /// Coarse user edit (attribute dropped), no deduction.
    MaskUF,
    /// Ranking policy only, `α = 0`.
    Reranking,
    /// Uniform sample of the candidates.
    Random,
    /// Greedy intra-list-similarity re-ranking.
    Diversity,
    /// External fair-ranking baseline; needs a registered [`super::SlateReranker`].
    Fairco,
    /// User-feature control with deduction.
    Uci,
    /// Item-fine control with the true target.
    FUci,
    /// Item-coarse control with predicted targets.
    CUci,
    /// `FUci` at `α = 0`.
    FUciNoCi,
    /// `CUci` at `α = 0`.
    CUciNoCi,
}

pub const ALL_VARIANTS: [Variant; 14] = [
    Variant::Base,
    Variant::WoUF,
    Variant::WoIF,
    Variant::ChangeUF,
    Variant::MaskUF,
    Variant::Reranking,
    Variant::Random,
    Variant::Diversity,
    Variant::Fairco,
    Variant::Uci,
    Variant::FUci,
    Variant::CUci,
    Variant::FUciNoCi,
    Variant::CUciNoCi,
];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::WoUF => "woUF",
            Variant::WoIF => "woIF",
            Variant::ChangeUF => "changeUF",
            Variant::MaskUF => "maskUF",
            Variant::Reranking => "Reranking",
            Variant::Random => "Random",
            Variant::Diversity => "Diversity",
            Variant::Fairco => "Fairco",
            Variant::Uci => "UCI",
            Variant::FUci => "F-UCI",
            Variant::CUci => "C-UCI",
            Variant::FUciNoCi => "F-UCI-noCI",
            Variant::CUciNoCi => "C-UCI-noCI",
        }
    }

    pub fn applies_to(self, scenario: Scenario) -> bool {
        match self {
            Variant::Base | Variant::WoUF | Variant::Random | Variant::Diversity | Variant::Fairco => true,
            Variant::ChangeUF => scenario == Scenario::UserFine,
            Variant::MaskUF => scenario == Scenario::UserCoarse,
            Variant::Uci => scenario.is_user(),
            Variant::WoIF
            | Variant::Reranking
            | Variant::FUci
            | Variant::CUci
            | Variant::FUciNoCi
            | Variant::CUciNoCi => !scenario.is_user(),
        }
    }

    /// Coefficients this variant searches over.
    pub fn tuned(self) -> Tuned {
        let (alpha, beta, k_targets) = match self {
            Variant::Uci => (true, false, false),
            Variant::Reranking | Variant::FUciNoCi => (false, true, false),
            Variant::FUci => (true, true, false),
            Variant::CUci => (true, true, true),
            Variant::CUciNoCi => (false, true, true),
            _ => (false, false, false),
        };
        Tuned { alpha, beta, k_targets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuned {
    pub alpha: bool,
    pub beta: bool,
    pub k_targets: bool,
}

impl Tuned {
    pub fn any(self) -> bool {
        self.alpha || self.beta || self.k_targets
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_VARIANTS
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::Config(format!("unknown variant '{s}'")))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hyperparameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub k_targets: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
    pub hidden: Vec<usize>,
}

fn steps(step: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| (i as f64 * step * 1e6).round() / 1e6).collect()
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            alpha: steps(0.1, 5),
            beta: steps(0.01, 10),
            k_targets: (1..=MAX_K_TARGETS).collect(),
            learning_rate: vec![0.05],
            l2: vec![0.0],
            hidden: vec![16],
        }
    }
}

pub const MAX_ALPHA: f64 = 0.5;
pub const MAX_BETA: f64 = 0.1;

impl Grids {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        for (name, g) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if g.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=MAX_ALPHA).contains(*a)) {
            return bad(format!("alpha {a} outside [0, {MAX_ALPHA}]"));
        }
        if let Some(b) = self.beta.iter().find(|b| !(0.0..=MAX_BETA).contains(*b)) {
            return bad(format!("beta {b} outside [0, {MAX_BETA}]"));
        }
        if self.k_targets.is_empty() || self.k_targets.iter().any(|k| !(1..=MAX_K_TARGETS).contains(k)) {
            return bad(format!("k_targets grid must be non-empty within 1..={MAX_K_TARGETS}"));
        }
        if self.learning_rate.is_empty() || self.l2.is_empty() || self.hidden.is_empty() {
            return bad("training grids must be non-empty".into());
        }
        Ok(())
    }
}

/// One experiment: dataset, scenario, rows and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prepared dataset directory.
    pub data: PathBuf,
    pub scenario: Scenario,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Attribute group for user scenarios (`gender` / `age` by default).
    #[serde(default)]
    pub attribute: Option<String>,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Base training settings; `seed`, `learning_rate`, `l2` and `hidden` are overridden by the grids.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    /// Frozen base model used instead of training (single seed only).
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Frozen predictor used instead of training.
    #[serde(default)]
    pub predictor_checkpoint: Option<PathBuf>,
}

fn default_model() -> ModelKind {
    ModelKind::Fm
}

fn default_seeds() -> Vec<u64> {
    vec![2022]
}

fn default_k() -> usize {
    10
}

impl ExperimentConfig {
    pub fn new(data: impl Into<PathBuf>, scenario: Scenario, variants: Vec<Variant>) -> Self {
        ExperimentConfig {
            data: data.into(),
            scenario,
            model: default_model(),
            attribute: None,
            variants,
            grids: Grids::default(),
            seeds: default_seeds(),
            k: default_k(),
            train: TrainConfig::default(),
            predictor: PredictorConfig::default(),
            checkpoint: None,
            predictor_checkpoint: None,
        }
    }

    /// Reads YAML; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ExperimentConfig = serde_yaml::from_str(&text).map_err(|e| EvalError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data);
        cfg.checkpoint.as_mut().map(resolve);
        cfg.predictor_checkpoint.as_mut().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        self.grids.validate()?;
        if self.variants.is_empty() {
            return Err(EvalError::Config("no variants requested".into()));
        }
        if let Some(v) = self.variants.iter().find(|v| !v.applies_to(self.scenario)) {
            return Err(EvalError::VariantMismatch {
                variant: v.name().into(),
                scenario: self.scenario.name().into(),
            });
        }
        if self.seeds.is_empty() {
            return Err(EvalError::Config("at least one seed is required".into()));
        }
        if self.k == 0 {
            return Err(EvalError::Config("k must be positive".into()));
        }
        if self.checkpoint.is_some() && self.seeds.len() > 1 {
            return Err(EvalError::Config("a frozen checkpoint allows a single seed".into()));
        }
        if self.checkpoint.is_some()
            && self
                .variants
                .iter()
                .any(|v| matches!(v, Variant::WoUF | Variant::WoIF))
        {
            return Err(EvalError::Config("woUF/woIF need training; drop the checkpoint".into()));
        }
        Ok(())
    }

    /// Attribute group of a user scenario.
    pub fn attribute(&self) -> Option<&str> {
        self.attribute.as_deref().or(self.scenario.default_attribute())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_match_quoted_ranges() {
        let g = Grids::default();
        assert_eq!(g.alpha, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(g.beta.len(), 11);
        assert_eq!(g.beta[10], 0.1);
        assert_eq!(g.k_targets, vec![1, 2, 3, 4, 5]);
        g.validate().unwrap();
    }

    #[test]
    fn yaml_round_trip_and_validation() {
        let yaml = "data: d\nscenario: item_coarse\nvariants: [base, Reranking, C-UCI, F-UCI-noCI]\ngrids:\n  beta: [0.0, 0.05]\n";
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.yaml");
        std::fs::write(&p, yaml).unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.data, dir.path().join("d"));
        assert_eq!(cfg.variants[2], Variant::CUci);
        assert_eq!(cfg.grids.beta, vec![0.0, 0.05]);
        assert_eq!(cfg.k, 10);

        let mut bad = cfg.clone();
        bad.grids.beta = vec![0.2];
        assert!(matches!(bad.validate(), Err(EvalError::Config(_))));
        let mut bad = cfg.clone();
        bad.variants = vec![Variant::ChangeUF];
        assert!(matches!(bad.validate(), Err(EvalError::VariantMismatch { .. })));
        assert!(serde_yaml::from_str::<ExperimentConfig>("data: d\nscenario: x\nvariants: [base]").is_err());
    }

    #[test]
    fn variant_names_parse_back() {
        for v in ALL_VARIANTS {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }
}
