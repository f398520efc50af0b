use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::{FeatureLayout, Role};
use super::params::{FmParams, Model, ModelKind, NfmParams, Params};
use super::ModelError;
use crate::checkpoint::{Checkpoint, CheckpointError};

/// Scores are `sigmoid(raw)`; recorded so readers know which convention produced slates.
pub const SCORE_CONVENTION: &str = "post_sigmoid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleOffsets {
    pub user_id: usize,
    pub user_attr: usize,
    pub item_id: usize,
    pub item_cat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: ModelKind,
    pub dim: usize,
    pub hidden: usize,
    pub n_features: usize,
    pub layout: FeatureLayout,
    pub offsets: RoleOffsets,
    pub score_convention: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Model {
    pub fn header(&self, seed: Option<u64>) -> ModelHeader {
        let l = &self.layout;
        ModelHeader {
            kind: self.kind(),
            dim: self.params.fm().dim,
            hidden: match &self.params {
                Params::Fm(_) => 0,
                Params::Nfm(p) => p.hidden,
            },
            n_features: l.len(),
            layout: *l,
            offsets: RoleOffsets {
                user_id: l.offset(Role::UserId),
                user_attr: l.offset(Role::UserAttr),
                item_id: l.offset(Role::ItemId),
                item_cat: l.offset(Role::ItemCat),
            },
            score_convention: SCORE_CONVENTION.into(),
            seed,
        }
    }

    pub fn to_checkpoint(&self, seed: Option<u64>) -> Checkpoint {
        Checkpoint {
            meta: serde_json::to_value(self.header(seed)).expect("header serializes"),
            arrays: self
                .params
                .blocks()
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Model, ModelHeader), ModelError> {
        let h: ModelHeader = ck.meta_as()?;
        let fmt = |m: String| ModelError::Checkpoint(CheckpointError::Format(m));
        if h.n_features != h.layout.len() {
            return Err(fmt(format!("n_features {} disagrees with layout", h.n_features)));
        }
        if h.score_convention != SCORE_CONVENTION {
            return Err(fmt(format!("unsupported score convention '{}'", h.score_convention)));
        }
        let f = h.n_features;
        let fm = FmParams {
            dim: h.dim,
            bias: ck.array_len("bias", 1)?[0],
            linear: ck.array_len("linear", f)?.to_vec(),
            embeddings: ck.array_len("embeddings", f * h.dim)?.to_vec(),
        };
        let params = match h.kind {
            ModelKind::Fm => Params::Fm(fm),
            ModelKind::Nfm => Params::Nfm(NfmParams {
                fm,
                hidden: h.hidden,
                w_hidden: ck.array_len("w_hidden", h.hidden * h.dim)?.to_vec(),
                b_hidden: ck.array_len("b_hidden", h.hidden)?.to_vec(),
                w_out: ck.array_len("w_out", h.hidden)?.to_vec(),
            }),
        };
        if !params.is_finite() {
            return Err(fmt("non-finite parameter".into()));
        }
        Ok((
            Model {
                layout: h.layout,
                params,
            },
            h,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<(), ModelError> {
        Ok(self.to_checkpoint(seed).save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Model, ModelHeader), ModelError> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }
}
