use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::{assemble_features, FeatureLayout, RoleSet, ScoringRequest, UserEdit};
use super::params::{init_rng, sigmoid, FmParams, Model, ModelKind, NfmParams, Params};
use super::scoring::{score_all_items, top_k, ItemTable};
use super::ModelError;
use crate::data::{sample_negatives, Dataset, LabeledPair};

const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub init_std: f64,
    /// Embedding L2 coefficient.
    pub l2: f64,
    /// NFM hidden width.
    pub hidden: usize,
    pub dim: usize,
    /// Draw fresh negatives every epoch instead of once.
    pub resample_negatives: bool,
    /// Cutoff of the validation Recall used for model selection.
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 1024,
            epochs: 100,
            patience: 10,
            seed: 2022,
            init_std: 0.01,
            l2: 0.0,
            hidden: 16,
            dim: 64,
            resample_negatives: false,
            eval_k: 10,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.dim == 0 || self.eval_k == 0 {
            return bad("batch size, epochs, dim and eval_k must be positive");
        }
        if !(self.l2 >= 0.0 && self.init_std >= 0.0) {
            return bad("l2 and init_std must be non-negative");
        }
        Ok(())
    }
}

/// One labeled sparse input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<u32>,
    pub label: f64,
}

/// Train positives followed by the given negatives, as sparse inputs.
pub fn build_examples(
    layout: &FeatureLayout,
    dataset: &Dataset,
    negatives: &[LabeledPair],
) -> Result<Vec<Example>, ModelError> {
    let positives = dataset.train.iter().map(|it| (it.user, it.item, 1.0));
    let negatives = negatives.iter().map(|p| (p.user, p.item, p.label as f64));
    positives
        .chain(negatives)
        .map(|(u, i, label)| {
            Ok(Example {
                features: assemble_features(&ScoringRequest::plain(u, i), layout, dataset)?,
                label,
            })
        })
        .collect()
}

/// Gradient of the batch objective, laid out like the parameters.
/// Linear and embedding rows are dense but only `touched` rows are non-zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub bias: f64,
    pub linear: Vec<f64>,
    pub embeddings: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    pub touched: Vec<u32>,
    dim: usize,
    mark: Vec<bool>,
}

impl Gradients {
    fn for_params(params: &Params) -> Self {
        let fm = params.fm();
        let (wh, bh, wo) = match params {
            Params::Fm(_) => (0, 0, 0),
            Params::Nfm(p) => (p.w_hidden.len(), p.b_hidden.len(), p.w_out.len()),
        };
        Gradients {
            bias: 0.0,
            linear: vec![0.0; fm.n_features()],
            embeddings: vec![0.0; fm.embeddings.len()],
            w_hidden: vec![0.0; wh],
            b_hidden: vec![0.0; bh],
            w_out: vec![0.0; wo],
            touched: Vec::new(),
            dim: fm.dim,
            mark: vec![false; fm.n_features()],
        }
    }

    fn clear(&mut self) {
        self.bias = 0.0;
        for &f in &self.touched {
            let f = f as usize;
            self.linear[f] = 0.0;
            self.embeddings[f * self.dim..(f + 1) * self.dim].fill(0.0);
            self.mark[f] = false;
        }
        self.touched.clear();
        self.w_hidden.fill(0.0);
        self.b_hidden.fill(0.0);
        self.w_out.fill(0.0);
    }

    fn touch(&mut self, f: u32) {
        if !self.mark[f as usize] {
            self.mark[f as usize] = true;
            self.touched.push(f);
        }
    }

    /// Concatenation in [`Params::blocks`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.bias];
        out.extend_from_slice(&self.linear);
        out.extend_from_slice(&self.embeddings);
        out.extend_from_slice(&self.w_hidden);
        out.extend_from_slice(&self.b_hidden);
        out.extend_from_slice(&self.w_out);
        out
    }
}

/// `softplus(x) − y·x`, the cross-entropy of `sigmoid(x)` against label `y`.
fn bce_with_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - y * x + (-x.abs()).exp().ln_1p()
}

fn unique_rows(batch: &[Example]) -> Vec<u32> {
    let mut rows: Vec<u32> = batch.iter().flat_map(|e| e.features.iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Batch objective `(1/B)[Σ BCE + (λ/2) Σ_{rows used in the batch} ‖v_j‖²]`.
pub fn objective(params: &Params, batch: &[Example], l2: f64) -> f64 {
    let fm = params.fm();
    let loss: f64 = batch
        .iter()
        .map(|e| {
            let raw = match params {
                Params::Fm(p) => super::params::fm_score(p, &e.features),
                Params::Nfm(p) => super::params::nfm_score(p, &e.features),
            };
            bce_with_logit(raw, e.label)
        })
        .sum();
    let reg: f64 = unique_rows(batch)
        .iter()
        .map(|&f| fm.row(f).iter().map(|v| v * v).sum::<f64>())
        .sum();
    (loss + 0.5 * l2 * reg) / batch.len() as f64
}

/// Analytic gradient of [`objective`], returned with the objective value.
pub fn gradient(params: &Params, batch: &[Example], l2: f64) -> (f64, Gradients) {
    let mut g = Gradients::for_params(params);
    let mut ws = Workspace::new(params);
    let loss = accumulate(params, batch, l2, &mut g, &mut ws);
    (loss, g)
}

struct Workspace {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    bi: Vec<f64>,
    pre: Vec<f64>,
    dbi: Vec<f64>,
}

impl Workspace {
    fn new(params: &Params) -> Self {
        let d = params.fm().dim;
        let h = match params {
            Params::Fm(_) => 0,
            Params::Nfm(p) => p.hidden,
        };
        Workspace {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            bi: vec![0.0; d],
            pre: vec![0.0; h],
            dbi: vec![0.0; d],
        }
    }
}

fn accumulate(params: &Params, batch: &[Example], l2: f64, g: &mut Gradients, ws: &mut Workspace) -> f64 {
    let fm: &FmParams = params.fm();
    let d = fm.dim;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        ws.sum.fill(0.0);
        ws.sum_sq.fill(0.0);
        let mut linear = fm.bias;
        for &f in &ex.features {
            linear += fm.linear[f as usize];
            for ((s, q), &v) in ws.sum.iter_mut().zip(ws.sum_sq.iter_mut()).zip(fm.row(f)) {
                *s += v;
                *q += v * v;
            }
        }
        let raw = match params {
            Params::Fm(_) => {
                let pair: f64 = ws.sum.iter().zip(&ws.sum_sq).map(|(s, q)| s * s - q).sum();
                linear + 0.5 * pair
            }
            Params::Nfm(p) => {
                for k in 0..d {
                    ws.bi[k] = 0.5 * (ws.sum[k] * ws.sum[k] - ws.sum_sq[k]);
                }
                let mut out = 0.0;
                for h in 0..p.hidden {
                    let row = &p.w_hidden[h * d..(h + 1) * d];
                    ws.pre[h] = p.b_hidden[h] + row.iter().zip(&ws.bi).map(|(w, z)| w * z).sum::<f64>();
                    if ws.pre[h] > 0.0 {
                        out += p.w_out[h] * ws.pre[h];
                    }
                }
                linear + out
            }
        };
        loss += bce_with_logit(raw, ex.label);
        let draw = (sigmoid(raw) - ex.label) * scale;

        g.bias += draw;
        // d raw / d bi, written into ws.dbi
        match params {
            Params::Fm(_) => ws.dbi.fill(draw),
            Params::Nfm(p) => {
                ws.dbi.fill(0.0);
                for h in 0..p.hidden {
                    if ws.pre[h] > 0.0 {
                        g.w_out[h] += draw * ws.pre[h];
                        let delta = draw * p.w_out[h];
                        g.b_hidden[h] += delta;
                        let row = &p.w_hidden[h * d..(h + 1) * d];
                        let grow = &mut g.w_hidden[h * d..(h + 1) * d];
                        for k in 0..d {
                            grow[k] += delta * ws.bi[k];
                            ws.dbi[k] += delta * row[k];
                        }
                    }
                }
            }
        }
        for &f in &ex.features {
            g.touch(f);
            g.linear[f as usize] += draw;
            let v = fm.row(f);
            let gv = &mut g.embeddings[f as usize * d..(f as usize + 1) * d];
            for k in 0..d {
                gv[k] += ws.dbi[k] * (ws.sum[k] - v[k]);
            }
        }
    }
    let mut reg = 0.0;
    if l2 > 0.0 {
        for &f in &g.touched {
            let v = fm.row(f);
            let gv = &mut g.embeddings[f as usize * d..(f as usize + 1) * d];
            for k in 0..d {
                reg += v[k] * v[k];
                gv[k] += l2 * scale * v[k];
            }
        }
    }
    (loss + 0.5 * l2 * reg) * scale
}

/// Per-parameter accumulated squared gradients; only touched rows are updated.
struct Adagrad {
    lr: f64,
    acc: Params,
}

impl Adagrad {
    fn new(params: &Params, lr: f64) -> Self {
        let fm = params.fm();
        let acc = match params {
            Params::Fm(_) => Params::Fm(FmParams::zeros(fm.n_features(), fm.dim)),
            Params::Nfm(p) => Params::Nfm(NfmParams::zeros(fm.n_features(), fm.dim, p.hidden)),
        };
        Adagrad { lr, acc }
    }

    fn step(&mut self, params: &mut Params, g: &Gradients) {
        let lr = self.lr;
        let upd = |p: &mut f64, a: &mut f64, g: f64| {
            *a += g * g;
            *p -= lr * g / (*a + ADAGRAD_EPS).sqrt();
        };
        let d = g.dim;
        {
            let (pf, af) = (params.fm_mut(), self.acc.fm_mut());
            upd(&mut pf.bias, &mut af.bias, g.bias);
            for &f in &g.touched {
                let f = f as usize;
                upd(&mut pf.linear[f], &mut af.linear[f], g.linear[f]);
                for k in f * d..(f + 1) * d {
                    upd(&mut pf.embeddings[k], &mut af.embeddings[k], g.embeddings[k]);
                }
            }
        }
        if let (Params::Nfm(p), Params::Nfm(a)) = (params, &mut self.acc) {
            for (blk, acc, grad) in [
                (&mut p.w_hidden, &mut a.w_hidden, &g.w_hidden),
                (&mut p.b_hidden, &mut a.b_hidden, &g.b_hidden),
                (&mut p.w_out, &mut a.w_out, &g.w_out),
            ] {
                for ((x, s), &gr) in blk.iter_mut().zip(acc.iter_mut()).zip(grad.iter()) {
                    upd(x, s, gr);
                }
            }
        }
    }
}

/// Which held-out split to rank against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    /// Targets: valid positives; excluded: train positives.
    Valid,
    /// Targets: test positives; excluded: train and valid positives.
    Test,
}

/// Macro-averaged Recall@k over users with at least one target positive, or `None`
/// when no user has one.
pub fn evaluate_recall(model: &Model, dataset: &Dataset, split: EvalSplit, k: usize) -> Option<f64> {
    let items = ItemTable::new(model, dataset);
    let h = dataset.histories();
    let per_user: Vec<Option<f64>> = (0..dataset.n_users() as u32)
        .into_par_iter()
        .map(|u| {
            let targets = match split {
                EvalSplit::Valid => &h.valid[u as usize],
                EvalSplit::Test => &h.test[u as usize],
            };
            if targets.is_empty() {
                return None;
            }
            let cands = dataset.candidates(u, split == EvalSplit::Test);
            let scores = score_all_items(model, &items, dataset, u, &cands, RoleSet::EMPTY, &UserEdit::None)
                .expect("user index in range");
            let mut t = targets.clone();
            t.sort_unstable();
            t.dedup();
            let hits = top_k(&cands, &scores, k)
                .iter()
                .filter(|(i, _)| t.binary_search(i).is_ok())
                .count();
            Some(hits as f64 / t.len() as f64)
        })
        .collect();
    let vals: Vec<f64> = per_user.into_iter().flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub valid_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_valid_recall: Option<f64>,
}

/// Trains with BCE and Adagrad, keeping the epoch with the best validation Recall@k.
/// Without validation positives the last epoch is kept. Returned parameters are
/// rounded to `f32`.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    kind: ModelKind,
    layout: FeatureLayout,
) -> Result<(Model, TrainLog), ModelError> {
    config.validate()?;
    layout.check_dataset(dataset)?;
    let mut init = init_rng(config.seed);
    let mut params = match kind {
        ModelKind::Fm => Params::Fm(FmParams::init(layout.len(), config.dim, config.init_std, &mut init)),
        ModelKind::Nfm => Params::Nfm(NfmParams::init(
            layout.len(),
            config.dim,
            config.hidden,
            config.init_std,
            &mut init,
        )),
    };
    let mut examples = build_examples(&layout, dataset, &sample_negatives(dataset, config.seed)?)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f5b_u64);
    let mut opt = Adagrad::new(&params, config.learning_rate);
    let mut grads = Gradients::for_params(&params);
    let mut ws = Workspace::new(&params);
    let has_valid = !dataset.valid.is_empty();

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_valid_recall: None,
    };
    let mut best: Option<Params> = None;
    let mut since_best = 0;
    let mut batch: Vec<Example> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        if config.resample_negatives && epoch > 1 {
            let negs = sample_negatives(dataset, config.seed.wrapping_add(epoch as u64))?;
            examples = build_examples(&layout, dataset, &negs)?;
        }
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i].clone()));
            grads.clear();
            let loss = accumulate(&params, &batch, config.l2, &mut grads, &mut ws);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut params, &grads);
        }
        epoch_loss /= examples.len().max(1) as f64;

        let model = Model { layout, params };
        let recall = if has_valid {
            evaluate_recall(&model, dataset, EvalSplit::Valid, config.eval_k)
        } else {
            None
        };
        params = model.params;
        debug!("epoch {epoch}: loss {epoch_loss:.6}, valid recall {recall:?}");
        log.epochs.push(EpochLog {
            epoch,
            loss: epoch_loss,
            valid_recall: recall,
        });
        let improved = match (recall, log.best_valid_recall) {
            (Some(r), Some(b)) => r > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            log.best_epoch = epoch;
            log.best_valid_recall = recall;
            best = Some(params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                info!("early stop at epoch {epoch}; best epoch {}", log.best_epoch);
                break;
            }
        }
    }
    let mut params = best.unwrap_or(params);
    params.round_to_f32();
    Ok((Model { layout, params }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use crate::model::Role;
    use rand::Rng;

    fn toy(kind: ModelKind, seed: u64) -> Params {
        let mut rng = init_rng(seed);
        match kind {
            ModelKind::Fm => {
                let mut p = FmParams::init(5, 3, 0.5, &mut rng);
                p.bias = 0.1;
                p.linear.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
                Params::Fm(p)
            }
            ModelKind::Nfm => {
                let mut p = NfmParams::init(5, 3, 4, 0.5, &mut rng);
                p.fm.linear.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
                p.b_hidden.iter_mut().for_each(|b| *b = rng.random_range(0.05..0.3));
                Params::Nfm(p)
            }
        }
    }

    fn toy_batch() -> Vec<Example> {
        vec![
            Example { features: vec![0, 2, 4], label: 1.0 },
            Example { features: vec![1, 2, 3], label: 0.0 },
            Example { features: vec![0, 1, 3, 4], label: 1.0 },
        ]
    }

    fn check_gradient(kind: ModelKind) {
        let params = toy(kind, 11);
        let batch = toy_batch();
        let l2 = 0.1;
        let (_, g) = gradient(&params, &batch, l2);
        let analytic = g.to_flat();
        let base = params.to_flat();
        assert_eq!(analytic.len(), base.len());
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for j in 0..base.len() {
            let mut p = params.clone();
            let mut x = base.clone();
            x[j] = base[j] + h;
            p.assign_flat(&x);
            let up = objective(&p, &batch, l2);
            x[j] = base[j] - h;
            p.assign_flat(&x);
            let down = objective(&p, &batch, l2);
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(analytic[j].abs()).max(1e-7);
            worst = worst.max((numeric - analytic[j]).abs() / denom);
        }
        assert!(worst < 1e-4, "{kind}: worst relative error {worst}");
    }

    #[test]
    fn fm_gradient_matches_finite_differences() {
        check_gradient(ModelKind::Fm);
    }

    #[test]
    fn nfm_gradient_matches_finite_differences() {
        check_gradient(ModelKind::Nfm);
    }

    #[test]
    fn objective_matches_accumulated_loss() {
        for kind in [ModelKind::Fm, ModelKind::Nfm] {
            let params = toy(kind, 3);
            let (loss, _) = gradient(&params, &toy_batch(), 0.2);
            assert!((loss - objective(&params, &toy_batch(), 0.2)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_examples_loss_decreases() {
        let mut params = Params::Fm(FmParams::init(4, 4, 0.01, &mut init_rng(0)));
        let batch = vec![
            Example { features: vec![0, 2], label: 1.0 },
            Example { features: vec![0, 3], label: 0.0 },
        ];
        let mut opt = Adagrad::new(&params, 0.05);
        let initial = objective(&params, &batch, 0.0);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (_, g) = gradient(&params, &batch, 0.0);
            opt.step(&mut params, &g);
            losses.push(objective(&params, &batch, 0.0));
        }
        assert!(losses.windows(2).skip(5).all(|w| w[1] <= w[0] + 1e-15));
        assert!(*losses.last().unwrap() < initial);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let d = fixtures::tiny();
        let cfg = TrainConfig {
            epochs: 5,
            dim: 8,
            batch_size: 2,
            ..Default::default()
        };
        let layout = FeatureLayout::for_dataset(&d);
        let (a, _) = train(&d, &cfg, ModelKind::Nfm, layout).unwrap();
        let (b, _) = train(&d, &cfg, ModelKind::Nfm, layout).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
    }

    #[test]
    fn trained_params_are_f32_exact() {
        let d = fixtures::tiny();
        let cfg = TrainConfig {
            epochs: 3,
            dim: 4,
            ..Default::default()
        };
        let (m, log) = train(&d, &cfg, ModelKind::Fm, FeatureLayout::for_dataset(&d)).unwrap();
        assert!(m.params.to_flat().iter().all(|&x| x == x as f32 as f64));
        assert!(log.best_epoch >= 1 && log.best_epoch <= 3);
    }

    #[test]
    fn disabled_role_rows_stay_at_init() {
        let d = fixtures::tiny();
        let cfg = TrainConfig {
            epochs: 3,
            dim: 4,
            batch_size: 3,
            ..Default::default()
        };
        let layout = FeatureLayout::for_dataset(&d).without(Role::UserAttr);
        let (m, _) = train(&d, &cfg, ModelKind::Fm, layout).unwrap();
        let fm = m.params.fm();
        let off = layout.offset(Role::UserAttr);
        for f in off..off + layout.role_len(Role::UserAttr) {
            assert_eq!(fm.linear[f], 0.0);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let d = fixtures::tiny();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            train(&d, &cfg, ModelKind::Fm, FeatureLayout::for_dataset(&d)),
            Err(ModelError::Config(_))
        ));
    }
}
