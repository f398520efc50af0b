//! Target-category prediction: a one-hidden-layer network mapping the category
//! distribution of the first half of a user's history to that of the second half.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::checkpoint::Checkpoint;
use crate::data::{category_distribution, CategoryDistribution, Dataset};

const KIND: &str = "category_predictor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden: 16,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 256,
            seed: 2022,
        }
    }
}

/// `softmax(W2 · ReLU(W1 x + b1) + b2)`; `w1` is `hidden × m`, `w2` is `m × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPredictor {
    pub m: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// A training pair: first-half and second-half distributions.
pub type HalfPair = (CategoryDistribution, CategoryDistribution);

struct Forward {
    pre: Vec<f64>,
    probs: Vec<f64>,
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

impl CategoryPredictor {
    /// Glorot-normal weights, zero biases.
    pub fn init(m: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (2.0 / (m + hidden) as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        CategoryPredictor {
            m,
            hidden,
            w1: (0..hidden * m).map(|_| normal.sample(&mut rng)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..m * hidden).map(|_| normal.sample(&mut rng)).collect(),
            b2: vec![0.0; m],
        }
    }

    fn forward_full(&self, x: &[f64]) -> Forward {
        let (m, h) = (self.m, self.hidden);
        let pre: Vec<f64> = (0..h)
            .map(|j| self.b1[j] + self.w1[j * m..(j + 1) * m].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let mut probs: Vec<f64> = (0..m)
            .map(|c| {
                self.b2[c]
                    + self.w2[c * h..(c + 1) * h]
                        .iter()
                        .zip(&pre)
                        .map(|(w, &p)| w * p.max(0.0))
                        .sum::<f64>()
            })
            .collect();
        softmax(&mut probs);
        Forward { pre, probs }
    }

    /// Predicted second-half distribution.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_full(x).probs
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "flat parameter vector too long");
    }

    pub fn to_checkpoint(&self, seed: Option<u64>) -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({"kind": KIND, "m": self.m, "hidden": self.hidden, "seed": seed}),
            arrays: vec![
                ("w1".into(), self.w1.clone()),
                ("b1".into(), self.b1.clone()),
                ("w2".into(), self.w2.clone()),
                ("b2".into(), self.b2.clone()),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ControlError> {
        #[derive(Deserialize)]
        struct Meta {
            kind: String,
            m: usize,
            hidden: usize,
        }
        let meta: Meta = ck.meta_as()?;
        if meta.kind != KIND {
            return Err(ControlError::InvalidPredictor(format!("checkpoint kind '{}'", meta.kind)));
        }
        let (m, h) = (meta.m, meta.hidden);
        Ok(CategoryPredictor {
            m,
            hidden: h,
            w1: ck.array_len("w1", h * m)?.to_vec(),
            b1: ck.array_len("b1", h)?.to_vec(),
            w2: ck.array_len("w2", m * h)?.to_vec(),
            b2: ck.array_len("b2", m)?.to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<(), ControlError> {
        Ok(self.to_checkpoint(seed).save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ControlError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Rounds every weight to `f32`, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }
}

/// Mean cross-entropy `−Σ_c y_c log p_c` over the pairs.
pub fn predictor_loss(p: &CategoryPredictor, pairs: &[HalfPair]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(x, y)| {
            let probs = p.forward(&x.probs);
            -y.probs.iter().zip(&probs).filter(|(t, _)| **t > 0.0).map(|(t, q)| t * q.ln()).sum::<f64>()
        })
        .sum();
    total / pairs.len() as f64
}

/// Analytic gradient of [`predictor_loss`] in [`CategoryPredictor::to_flat`] order.
pub fn predictor_gradient(p: &CategoryPredictor, pairs: &[HalfPair]) -> (f64, Vec<f64>) {
    let (m, h) = (p.m, p.hidden);
    let mut gw1 = vec![0.0; h * m];
    let mut gb1 = vec![0.0; h];
    let mut gw2 = vec![0.0; m * h];
    let mut gb2 = vec![0.0; m];
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for (x, y) in pairs {
        let f = p.forward_full(&x.probs);
        let mass: f64 = y.probs.iter().sum();
        for c in 0..m {
            if y.probs[c] > 0.0 {
                loss -= y.probs[c] * f.probs[c].ln();
            }
        }
        // d loss / d logit_c = mass·p_c − y_c
        let dz: Vec<f64> = (0..m).map(|c| (mass * f.probs[c] - y.probs[c]) * scale).collect();
        let mut dh = vec![0.0; h];
        for c in 0..m {
            gb2[c] += dz[c];
            for j in 0..h {
                gw2[c * h + j] += dz[c] * f.pre[j].max(0.0);
                dh[j] += dz[c] * p.w2[c * h + j];
            }
        }
        for j in 0..h {
            if f.pre[j] > 0.0 {
                gb1[j] += dh[j];
                for i in 0..m {
                    gw1[j * m + i] += dh[j] * x.probs[i];
                }
            }
        }
    }
    (loss * scale, [gw1, gb1, gw2, gb2].concat())
}

/// First/second-half category distributions of each user's chronological train
/// history (odd lengths give the extra item to the first half). Users with fewer
/// than two train items are skipped.
pub fn half_split_pairs(dataset: &Dataset) -> Vec<HalfPair> {
    dataset
        .histories()
        .train
        .iter()
        .filter(|h| h.len() >= 2)
        .map(|h| {
            let cut = h.len().div_ceil(2);
            (category_distribution(&h[..cut], dataset), category_distribution(&h[cut..], dataset))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorLog {
    pub n_users: usize,
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch Adam on the cross-entropy over `pairs`.
pub fn fit_predictor(
    pairs: &[HalfPair],
    m: usize,
    config: &PredictorConfig,
) -> Result<(CategoryPredictor, PredictorLog), ControlError> {
    if pairs.is_empty() {
        return Err(ControlError::NoEligibleUsers);
    }
    if config.hidden == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(ControlError::InvalidPredictor("hidden, batch size and learning rate must be positive".into()));
    }
    let mut p = CategoryPredictor::init(m, config.hidden, config.seed);
    let mut theta = p.to_flat();
    let (mut m1, mut m2) = (vec![0.0; theta.len()], vec![0.0; theta.len()]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = PredictorLog {
        n_users: pairs.len(),
        epoch_loss: Vec::new(),
    };
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<HalfPair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let (loss, g) = predictor_gradient(&p, &batch);
            if !loss.is_finite() {
                return Err(ControlError::InvalidPredictor("non-finite predictor loss".into()));
            }
            total += loss * batch.len() as f64;
            t += 1;
            for k in 0..theta.len() {
                m1[k] = b1 * m1[k] + (1.0 - b1) * g[k];
                m2[k] = b2 * m2[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m1[k] / (1.0 - b1.powi(t));
                let vh = m2[k] / (1.0 - b2.powi(t));
                theta[k] -= config.learning_rate * mh / (vh.sqrt() + eps);
            }
            p.assign_flat(&theta);
        }
        log.epoch_loss.push(total / pairs.len() as f64);
    }
    p.round_to_f32();
    Ok((p, log))
}

/// Trains on the half-split pairs of every eligible user.
pub fn train_category_predictor(
    dataset: &Dataset,
    config: &PredictorConfig,
) -> Result<(CategoryPredictor, PredictorLog), ControlError> {
    fit_predictor(&half_split_pairs(dataset), dataset.n_categories(), config)
}

/// Predicted target categories, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub categories: Vec<usize>,
    /// Fewer than the requested number of categories were available.
    pub short: bool,
}

/// Zeroes `h̄` in the user's train distribution, renormalizes (uniform over the other
/// categories when nothing remains), runs the predictor and returns the top `k`
/// categories other than `h̄`, ties to the lower index.
pub fn predict_target_categories(
    predictor: &CategoryPredictor,
    history: &CategoryDistribution,
    demoted: usize,
    k: usize,
) -> Result<TargetPrediction, ControlError> {
    let m = predictor.m;
    if history.len() != m || demoted >= m {
        return Err(ControlError::InvalidPredictor(format!(
            "predictor expects {m} categories, got distribution of {} and category {demoted}",
            history.len()
        )));
    }
    let mut x = history.probs.clone();
    x[demoted] = 0.0;
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter_mut().for_each(|v| *v /= total);
    } else if m > 1 {
        let u = 1.0 / (m - 1) as f64;
        x.iter_mut().enumerate().for_each(|(c, v)| *v = if c == demoted { 0.0 } else { u });
    }
    let probs = predictor.forward(&x);
    let mut order: Vec<usize> = (0..m).filter(|&c| c != demoted).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let short = order.len() < k;
    order.truncate(k);
    Ok(TargetPrediction { categories: order, short })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> CategoryDistribution {
        CategoryDistribution { probs: v.to_vec() }
    }

    #[test]
    fn output_is_a_distribution() {
        let p = CategoryPredictor::init(5, 8, 1);
        let out = p.forward(&[0.2, 0.2, 0.1, 0.5, 0.0]);
        assert!(out.iter().all(|&q| q >= 0.0));
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = CategoryPredictor::init(4, 5, 3);
        p.b1 = vec![0.1, -0.05, 0.2, 0.07, 0.3];
        p.b2 = vec![0.05, -0.1, 0.0, 0.2];
        let pairs = vec![
            (dist(&[0.5, 0.5, 0.0, 0.0]), dist(&[0.0, 0.25, 0.75, 0.0])),
            (dist(&[0.1, 0.2, 0.3, 0.4]), dist(&[1.0, 0.0, 0.0, 0.0])),
            (dist(&[0.0, 0.0, 1.0, 0.0]), dist(&[0.0, 0.0, 0.5, 0.5])),
        ];
        let (loss, g) = predictor_gradient(&p, &pairs);
        assert!((loss - predictor_loss(&p, &pairs)).abs() < 1e-12);
        let base = p.to_flat();
        let h = 1e-4;
        for j in 0..base.len() {
            let mut q = p.clone();
            let mut x = base.clone();
            x[j] += h;
            q.assign_flat(&x);
            let up = predictor_loss(&q, &pairs);
            x[j] -= 2.0 * h;
            q.assign_flat(&x);
            let down = predictor_loss(&q, &pairs);
            let num = (up - down) / (2.0 * h);
            let rel = (num - g[j]).abs() / num.abs().max(g[j].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {j}: numeric {num} analytic {}", g[j]);
        }
    }

    #[test]
    fn two_categories_force_the_other() {
        let p = CategoryPredictor::init(2, 4, 9);
        for h in [dist(&[0.9, 0.1]), dist(&[1.0, 0.0])] {
            let t = predict_target_categories(&p, &h, 0, 1).unwrap();
            assert_eq!(t.categories, vec![1]);
        }
    }

    #[test]
    fn identity_like_predictor_ranks_remaining_mass() {
        // hidden = M, W1 = I, W2 = 4·I: logits are monotone in the input
        let m = 3;
        let mut p = CategoryPredictor::init(m, m, 0);
        p.w1 = vec![0.0; m * m];
        p.w2 = vec![0.0; m * m];
        for c in 0..m {
            p.w1[c * m + c] = 1.0;
            p.w2[c * m + c] = 4.0;
        }
        p.b1 = vec![0.0; m];
        p.b2 = vec![0.0; m];
        let t = predict_target_categories(&p, &dist(&[0.6, 0.3, 0.1]), 0, 1).unwrap();
        assert_eq!(t.categories, vec![1]);
        let all = predict_target_categories(&p, &dist(&[0.6, 0.3, 0.1]), 0, 3).unwrap();
        assert_eq!(all.categories, vec![1, 2]);
        assert!(all.short);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = CategoryPredictor::init(3, 4, 5);
        p.round_to_f32();
        let back = CategoryPredictor::from_checkpoint(&Checkpoint::from_bytes(&p.to_checkpoint(None).to_bytes()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn no_pairs_is_an_error() {
        assert!(matches!(fit_predictor(&[], 3, &PredictorConfig::default()), Err(ControlError::NoEligibleUsers)));
    }
}
