use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layout::FeatureLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fm,
    Nfm,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fm" => Ok(ModelKind::Fm),
            "nfm" => Ok(ModelKind::Nfm),
            other => Err(format!("unknown model kind '{other}' (expected fm or nfm)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Fm => "fm",
            ModelKind::Nfm => "nfm",
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Second-order FM parameters: global bias, per-feature linear weights and
/// `F × dim` embeddings (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    pub dim: usize,
    pub bias: f64,
    pub linear: Vec<f64>,
    pub embeddings: Vec<f64>,
}

impl FmParams {
    pub fn zeros(n_features: usize, dim: usize) -> Self {
        FmParams {
            dim,
            bias: 0.0,
            linear: vec![0.0; n_features],
            embeddings: vec![0.0; n_features * dim],
        }
    }

    /// Embeddings ~ N(0, init_std²); linear weights and bias zero.
    pub fn init(n_features: usize, dim: usize, init_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, init_std).expect("valid std");
        FmParams {
            dim,
            bias: 0.0,
            linear: vec![0.0; n_features],
            embeddings: (0..n_features * dim).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.linear.len()
    }

    #[inline]
    pub fn row(&self, feature: u32) -> &[f64] {
        let start = feature as usize * self.dim;
        &self.embeddings[start..start + self.dim]
    }
}

/// NFM: FM linear part plus one hidden ReLU layer over the bi-interaction vector.
/// `w_hidden` is `hidden × dim` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfmParams {
    pub fm: FmParams,
    pub hidden: usize,
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
}

impl NfmParams {
    pub fn zeros(n_features: usize, dim: usize, hidden: usize) -> Self {
        NfmParams {
            fm: FmParams::zeros(n_features, dim),
            hidden,
            w_hidden: vec![0.0; hidden * dim],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; hidden],
        }
    }

    /// FM part as [`FmParams::init`]; MLP weights Glorot-normal, hidden bias zero.
    pub fn init(n_features: usize, dim: usize, hidden: usize, init_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let fm = FmParams::init(n_features, dim, init_std, rng);
        let glorot = |fan_in: usize, fan_out: usize| Normal::new(0.0, (2.0 / (fan_in + fan_out) as f64).sqrt()).unwrap();
        let g1 = glorot(dim, hidden);
        let g2 = glorot(hidden, 1);
        NfmParams {
            fm,
            hidden,
            w_hidden: (0..hidden * dim).map(|_| g1.sample(rng)).collect(),
            b_hidden: vec![0.0; hidden],
            w_out: (0..hidden).map(|_| g2.sample(rng)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Fm(FmParams),
    Nfm(NfmParams),
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Params::Fm(_) => ModelKind::Fm,
            Params::Nfm(_) => ModelKind::Nfm,
        }
    }

    pub fn fm(&self) -> &FmParams {
        match self {
            Params::Fm(p) => p,
            Params::Nfm(p) => &p.fm,
        }
    }

    pub fn fm_mut(&mut self) -> &mut FmParams {
        match self {
            Params::Fm(p) => p,
            Params::Nfm(p) => &mut p.fm,
        }
    }

    pub fn is_finite(&self) -> bool {
        let fm = self.fm();
        let fm_ok = fm.bias.is_finite()
            && fm.linear.iter().all(|x| x.is_finite())
            && fm.embeddings.iter().all(|x| x.is_finite());
        match self {
            Params::Fm(_) => fm_ok,
            Params::Nfm(p) => {
                fm_ok && p.w_hidden.iter().chain(&p.b_hidden).chain(&p.w_out).all(|x| x.is_finite())
            }
        }
    }

    /// Every parameter block, in a fixed order (used for checkpoints and updates).
    pub fn blocks(&self) -> Vec<(&'static str, Vec<f64>)> {
        let fm = self.fm();
        let mut out = vec![
            ("bias", vec![fm.bias]),
            ("linear", fm.linear.clone()),
            ("embeddings", fm.embeddings.clone()),
        ];
        if let Params::Nfm(p) = self {
            out.push(("w_hidden", p.w_hidden.clone()));
            out.push(("b_hidden", p.b_hidden.clone()));
            out.push(("w_out", p.w_out.clone()));
        }
        out
    }

    /// All parameters concatenated in [`Params::blocks`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, v)| v).collect()
    }

    /// Inverse of [`Params::to_flat`]; panics on a length mismatch.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        let fm = self.fm_mut();
        take(std::slice::from_mut(&mut fm.bias));
        take(&mut fm.linear);
        take(&mut fm.embeddings);
        if let Params::Nfm(p) = self {
            take(&mut p.w_hidden);
            take(&mut p.b_hidden);
            take(&mut p.w_out);
        }
        assert!(rest.is_empty(), "flat parameter vector too long");
    }

    /// Rounds every parameter to the nearest `f32` so that in-memory parameters equal
    /// what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        let r = |v: &mut [f64]| v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        let fm = self.fm_mut();
        fm.bias = fm.bias as f32 as f64;
        r(&mut fm.linear);
        r(&mut fm.embeddings);
        if let Params::Nfm(p) = self {
            r(&mut p.w_hidden);
            r(&mut p.b_hidden);
            r(&mut p.w_out);
        }
    }
}

/// Linear sum, embedding sum and squared-embedding sum over a set of active features.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub linear: f64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl PartialSums {
    pub fn of(fm: &FmParams, features: &[u32]) -> Self {
        let mut linear = 0.0;
        let mut sum = vec![0.0; fm.dim];
        let mut sum_sq = vec![0.0; fm.dim];
        for &f in features {
            linear += fm.linear[f as usize];
            for ((s, q), &v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(fm.row(f)) {
                *s += v;
                *q += v * v;
            }
        }
        PartialSums { linear, sum, sum_sq }
    }

    pub fn view(&self) -> Partial<'_> {
        Partial {
            linear: self.linear,
            sum: &self.sum,
            sum_sq: &self.sum_sq,
        }
    }
}

/// Borrowed form of [`PartialSums`].
#[derive(Debug, Clone, Copy)]
pub struct Partial<'a> {
    pub linear: f64,
    pub sum: &'a [f64],
    pub sum_sq: &'a [f64],
}

/// A trained (or initialized) model together with its feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub layout: FeatureLayout,
    pub params: Params,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    /// Raw (pre-sigmoid) score of one sparse binary input.
    pub fn raw_score(&self, features: &[u32]) -> f64 {
        match &self.params {
            Params::Fm(p) => fm_score(p, features),
            Params::Nfm(p) => nfm_score(p, features),
        }
    }

    /// `Y = sigmoid(raw score)`.
    pub fn predict(&self, features: &[u32]) -> f64 {
        sigmoid(self.raw_score(features))
    }

    pub fn partial(&self, features: &[u32]) -> PartialSums {
        PartialSums::of(self.params.fm(), features)
    }

    /// Raw score of the union of two disjoint feature sets given their partial sums.
    pub fn raw_score_split(&self, a: Partial<'_>, b: Partial<'_>) -> f64 {
        let fm = self.params.fm();
        let linear = fm.bias + (a.linear + b.linear);
        match &self.params {
            Params::Fm(_) => {
                let mut pair = 0.0;
                for k in 0..fm.dim {
                    let s = a.sum[k] + b.sum[k];
                    pair += s * s - (a.sum_sq[k] + b.sum_sq[k]);
                }
                linear + 0.5 * pair
            }
            Params::Nfm(p) => {
                let mut stack = [0.0f64; STACK_DIM];
                let mut heap = Vec::new();
                let bi: &mut [f64] = if fm.dim <= STACK_DIM {
                    &mut stack[..fm.dim]
                } else {
                    heap.resize(fm.dim, 0.0);
                    &mut heap
                };
                for (k, z) in bi.iter_mut().enumerate() {
                    let s = a.sum[k] + b.sum[k];
                    *z = 0.5 * (s * s - (a.sum_sq[k] + b.sum_sq[k]));
                }
                linear + mlp(p, bi)
            }
        }
    }
}

const STACK_DIM: usize = 256;

/// `bias + Σ w_j + ½ Σ_k [(Σ_j v_jk)² − Σ_j v_jk²]` over active features.
pub fn fm_score(params: &FmParams, features: &[u32]) -> f64 {
    let ps = PartialSums::of(params, features);
    let pair: f64 = ps.sum.iter().zip(&ps.sum_sq).map(|(s, q)| s * s - q).sum();
    params.bias + ps.linear + 0.5 * pair
}

/// Bi-interaction pooling `½[(Σ v_j)² − Σ v_j²]` (a `dim`-vector).
pub fn bi_interaction(params: &FmParams, features: &[u32]) -> Vec<f64> {
    let ps = PartialSums::of(params, features);
    ps.sum.iter().zip(&ps.sum_sq).map(|(s, q)| 0.5 * (s * s - q)).collect()
}

fn mlp(p: &NfmParams, bi: &[f64]) -> f64 {
    let dim = p.fm.dim;
    let mut out = 0.0;
    for h in 0..p.hidden {
        let row = &p.w_hidden[h * dim..(h + 1) * dim];
        let pre: f64 = p.b_hidden[h] + row.iter().zip(bi).map(|(w, z)| w * z).sum::<f64>();
        if pre > 0.0 {
            out += p.w_out[h] * pre;
        }
    }
    out
}

/// `bias + Σ w_j + w_outᵀ ReLU(W · bi + b)`.
pub fn nfm_score(params: &NfmParams, features: &[u32]) -> f64 {
    let ps = PartialSums::of(&params.fm, features);
    let bi: Vec<f64> = ps.sum.iter().zip(&ps.sum_sq).map(|(s, q)| 0.5 * (s * s - q)).collect();
    params.fm.bias + ps.linear + mlp(params, &bi)
}

/// Seeded generator used for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_fm(n: usize, dim: usize, seed: u64) -> FmParams {
        let mut rng = init_rng(seed);
        let mut p = FmParams::init(n, dim, 0.3, &mut rng);
        p.bias = rng.random_range(-0.5..0.5);
        p.linear.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
        p
    }

    fn pairwise_oracle(p: &FmParams, features: &[u32]) -> f64 {
        let mut total = p.bias;
        for &f in features {
            total += p.linear[f as usize];
        }
        for a in 0..features.len() {
            for b in (a + 1)..features.len() {
                let dot: f64 = p.row(features[a]).iter().zip(p.row(features[b])).map(|(x, y)| x * y).sum();
                total += dot;
            }
        }
        total
    }

    #[test]
    fn zero_model_scores_half() {
        let p = FmParams::zeros(10, 4);
        assert_eq!(fm_score(&p, &[1, 2, 3]), 0.0);
        assert_eq!(sigmoid(fm_score(&p, &[1, 2, 3])), 0.5);
    }

    #[test]
    fn single_feature_has_no_pair_term() {
        let p = random_fm(8, 6, 1);
        assert!((fm_score(&p, &[5]) - (p.bias + p.linear[5])).abs() < 1e-15);
    }

    #[test]
    fn three_features_match_pairwise_oracle() {
        let p = random_fm(20, 8, 2);
        let f = [2, 9, 17];
        assert!((fm_score(&p, &f) - pairwise_oracle(&p, &f)).abs() < 1e-10);
    }

    #[test]
    fn split_scoring_matches_whole_input() {
        let mut rng = init_rng(3);
        let fm = random_fm(30, 8, 4);
        let mut nfm = NfmParams::init(30, 8, 5, 0.3, &mut rng);
        nfm.fm = fm.clone();
        nfm.b_hidden.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        for params in [Params::Fm(fm), Params::Nfm(nfm)] {
            let model = Model {
                layout: FeatureLayout {
                    n_users: 10,
                    n_user_features: 5,
                    n_items: 10,
                    n_categories: 5,
                    disabled: Default::default(),
                },
                params,
            };
            let user = [1u32, 11, 13];
            let item = [16u32, 27, 28];
            let all: Vec<u32> = user.iter().chain(&item).copied().collect();
            let whole = model.raw_score(&all);
            let split = model.raw_score_split(model.partial(&user).view(), model.partial(&item).view());
            assert!((whole - split).abs() < 1e-12);
        }
    }

    #[test]
    fn nfm_with_zero_hidden_weights_is_linear() {
        let mut p = NfmParams::zeros(10, 4, 3);
        p.fm = random_fm(10, 4, 5);
        let f = [1, 4, 7];
        let linear = p.fm.bias + p.fm.linear[1] + p.fm.linear[4] + p.fm.linear[7];
        assert!((nfm_score(&p, &f) - linear).abs() < 1e-15);
    }

    #[test]
    fn nfm_single_feature_hand_computed() {
        // bi-interaction of one feature is zero, so hidden = ReLU(b), out = w_out · ReLU(b)
        let mut p = NfmParams::zeros(4, 2, 3);
        p.fm.bias = 0.25;
        p.fm.linear[2] = -0.5;
        p.fm.embeddings = vec![0.3; 8];
        p.w_hidden = vec![1.0; 6];
        p.b_hidden = vec![0.5, -0.2, 0.1];
        p.w_out = vec![2.0, 3.0, -1.0];
        // 0.25 - 0.5 + (2*0.5 + 3*0 + (-1)*0.1) = 0.65
        assert!((nfm_score(&p, &[2]) - 0.65).abs() < 1e-15);
    }

    #[test]
    fn nfm_matches_layer_by_layer_oracle() {
        let mut rng = init_rng(9);
        let mut p = NfmParams::init(12, 3, 4, 0.5, &mut rng);
        p.fm.bias = 0.1;
        p.fm.linear.iter_mut().for_each(|w| *w = rng.random_range(-0.3..0.3));
        p.b_hidden.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        let f = [0u32, 3, 7, 11];
        // straight-line oracle: explicit pairwise bi-interaction
        let mut bi = [0.0f64; 3];
        for a in 0..f.len() {
            for b in (a + 1)..f.len() {
                for k in 0..3 {
                    bi[k] += p.fm.row(f[a])[k] * p.fm.row(f[b])[k];
                }
            }
        }
        let mut out = p.fm.bias + f.iter().map(|&j| p.fm.linear[j as usize]).sum::<f64>();
        for h in 0..4 {
            let mut z = p.b_hidden[h];
            for k in 0..3 {
                z += p.w_hidden[h * 3 + k] * bi[k];
            }
            out += p.w_out[h] * z.max(0.0);
        }
        assert!((nfm_score(&p, &f) - out).abs() < 1e-10);
    }

    #[test]
    fn rounding_to_f32_is_idempotent() {
        let mut p = Params::Fm(random_fm(5, 3, 6));
        p.round_to_f32();
        let once = p.clone();
        p.round_to_f32();
        assert_eq!(once, p);
    }
}
