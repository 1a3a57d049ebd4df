//! Optimization: Adam with global-norm clipping, dev-loss early stopping, and
//! the three training procedures (acoustic encoder alone, text encoder by
//! distillation against a frozen acoustic encoder, and both jointly through a
//! cross-view triplet loss).
//!
//! Every random draw comes from a `(seed, stream, counter)` generator and
//! gradients are reduced in a fixed order, so a run is a pure function of its
//! config, data and seed regardless of thread count.

use std::fmt;

use rand::seq::index;

use crate::corpus::Utterance;
use crate::encoder::{self, EncoderConfig, Input, ParameterSet};
use crate::error::{Error, Result};
use crate::loss::{self, AneMode, TripletConfig};
use crate::par::{self, Parallelism};
use crate::rng;
use crate::sampler::{self, CorpusIndex, Microbatch, SamplerConfig, TripletExample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct OptState {
    pub cfg: AdamConfig,
    m: ParameterSet,
    v: ParameterSet,
    step: u64,
}

impl OptState {
    pub fn new(params: &ParameterSet, cfg: AdamConfig) -> Self {
        OptState { cfg, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(params: &mut ParameterSet, grads: &ParameterSet, state: &mut OptState) -> Result<()> {
    if params.config() != grads.config() || params.config() != state.m.config() {
        return Err(Error::InvalidArgument("optimizer state, parameters and gradients disagree in shape".into()));
    }
    if let Some(t) = grads.tensors().iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("gradient of {}", t.name)));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.cfg;
    let c1 = 1.0 - beta1.powf(state.step as f64);
    let c2 = 1.0 - beta2.powf(state.step as f64);
    let tensors = params.tensors_mut().iter_mut().zip(grads.tensors());
    let moments = state.m.tensors_mut().iter_mut().zip(state.v.tensors_mut());
    for ((p, g), (m, v)) in tensors.zip(moments) {
        for k in 0..p.data.len() {
            let gk = g.data[k];
            m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * gk;
            v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * gk * gk;
            let m_hat = m.data[k] / c1;
            let v_hat = v.data[k] / c2;
            p.data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all gradients together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [ParameterSet], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.l2_norm().powi(2)).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.iter_mut().for_each(|g| g.scale(max_norm / norm));
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    AnePivot,
    TripletMultiview,
    TripletSingleview,
    DistillMse,
    DistillCosine,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::AnePivot,
        Objective::TripletMultiview,
        Objective::TripletSingleview,
        Objective::DistillMse,
        Objective::DistillCosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::AnePivot => "ane-pivot",
            Objective::TripletMultiview => "triplet-multiview",
            Objective::TripletSingleview => "triplet-singleview",
            Objective::DistillMse => "distill-mse",
            Objective::DistillCosine => "distill-cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Depth and width of one encoder; input and output sizes come from the data
/// and from [`TrainConfig::embed_dim`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub layers: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub embed_dim: usize,
    pub f_shape: EncoderShape,
    pub g_shape: EncoderShape,
    pub sampler: SamplerConfig,
    pub microbatches_per_minibatch: usize,
    pub triplets_per_minibatch: usize,
    /// Utterances per distillation minibatch.
    pub distill_batch: usize,
    /// 0 sizes an epoch to roughly one pass over the training utterances.
    pub minibatches_per_epoch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    /// Global gradient norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub triplet: TripletConfig,
    /// Size of the fixed dev sample, in microbatches, triplets or
    /// utterances depending on the objective.
    pub dev_samples: usize,
    /// Recompute frozen acoustic embeddings every step instead of once.
    pub recompute_f: bool,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::AnePivot,
            embed_dim: 16,
            f_shape: EncoderShape { layers: 1, hidden: 32 },
            g_shape: EncoderShape { layers: 1, hidden: 32 },
            sampler: SamplerConfig::default(),
            microbatches_per_minibatch: 8,
            triplets_per_minibatch: 64,
            distill_batch: 64,
            minibatches_per_epoch: 0,
            max_epochs: 30,
            patience: 5,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            triplet: TripletConfig { margin: 0.15, similarity: loss::Similarity::Cosine },
            dev_samples: 200,
            recompute_f: false,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("f_layers", self.f_shape.layers),
            ("f_hidden", self.f_shape.hidden),
            ("g_layers", self.g_shape.layers),
            ("g_hidden", self.g_shape.hidden),
            ("microbatches_per_minibatch", self.microbatches_per_minibatch),
            ("triplets_per_minibatch", self.triplets_per_minibatch),
            ("distill_batch", self.distill_batch),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("dev_samples", self.dev_samples),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::InvalidValue { key: key.into(), reason: "must be positive".into() });
            }
        }
        self.sampler.validate()?;
        let a = &self.adam;
        let lr_ok = a.lr.is_finite() && a.lr >= 0.0;
        let eps_ok = a.eps.is_finite() && a.eps > 0.0;
        if !lr_ok || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !eps_ok {
            return Err(Error::InvalidValue { key: "adam".into(), reason: "lr ≥ 0, betas in [0,1), eps > 0".into() });
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return Err(Error::InvalidValue { key: "clip_norm".into(), reason: "must be ≥ 0".into() });
        }
        if self.triplet.margin.is_nan() || self.triplet.margin < 0.0 {
            return Err(Error::InvalidValue { key: "margin".into(), reason: "must be ≥ 0".into() });
        }
        Ok(())
    }

    fn f_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig::new(input_dim, self.f_shape.layers, self.f_shape.hidden, self.embed_dim)
    }

    fn g_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig::new(input_dim, self.g_shape.layers, self.g_shape.hidden, self.embed_dim)
    }

    fn require(&self, allowed: &[Objective]) -> Result<()> {
        if allowed.contains(&self.objective) {
            Ok(())
        } else {
            Err(Error::InvalidValue {
                key: "objective".into(),
                reason: format!("{} is not valid for this training procedure", self.objective),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub epoch: usize,
    pub split: Split,
    pub objective: Objective,
    pub value: f64,
}

/// `epoch,split,objective,value` lines with a header.
pub fn format_loss_curve(points: &[LossPoint]) -> String {
    let mut out = String::from("epoch,split,objective,value\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.epoch, p.split.name(), p.objective, p.value));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-dev parameters: `[f]`, `[g]` or `[f, g]`.
    pub params: Vec<ParameterSet>,
    pub curve: Vec<LossPoint>,
    pub best_epoch: usize,
    pub best_dev: f64,
    pub epochs_run: usize,
}

/// Posteriorgram of an utterance widened to f64 for the encoder.
pub fn acoustic_input(u: &Utterance) -> Vec<f64> {
    u.x.to_f64()
}

fn one_hot(u: &Utterance, dim: usize) -> Input<'_> {
    Input::OneHot { ids: &u.y, dim }
}

fn check_acoustic(utts: &[Utterance], what: &str) -> Result<usize> {
    let first = utts.first().ok_or_else(|| Error::InvalidArgument(format!("{what} corpus is empty")))?;
    let dim = first.x.dim();
    if let Some(u) = utts.iter().find(|u| u.x.dim() != dim) {
        return Err(Error::InvalidArgument(format!("{what} utterance {} has {} columns, expected {dim}", u.id, u.x.dim())));
    }
    Ok(dim)
}

fn acoustic_forward(params: &ParameterSet, u: &Utterance) -> Result<encoder::ForwardCache> {
    let x = acoustic_input(u);
    encoder::forward(params, Input::Dense { data: &x, dim: u.x.dim() })
}

/// Loss and gradient of one step for every trained encoder.
type StepOutput = (f64, Vec<ParameterSet>);

struct Loop<'a> {
    cfg: &'a TrainConfig,
    objective: Objective,
    params: Vec<ParameterSet>,
    batches_per_epoch: usize,
}

impl Loop<'_> {
    fn run(
        mut self,
        step: impl Fn(&[ParameterSet], u64) -> Result<StepOutput>,
        dev: impl Fn(&[ParameterSet]) -> Result<f64>,
    ) -> Result<TrainOutcome> {
        let cfg = self.cfg;
        let mut opt: Vec<OptState> = self.params.iter().map(|p| OptState::new(p, cfg.adam)).collect();
        let mut curve = Vec::new();
        let dev0 = dev(&self.params)?;
        check_finite(dev0, 0, "dev loss")?;
        curve.push(LossPoint { epoch: 0, split: Split::Dev, objective: self.objective, value: dev0 });
        log::info!("{} epoch 0 dev {dev0:.6}", self.objective);

        let mut best: Option<(f64, usize, Vec<ParameterSet>)> = None;
        let mut stale = 0;
        let mut epochs_run = 0;
        let mut counter = 0u64;
        for epoch in 1..=cfg.max_epochs {
            let mut total = 0.0;
            for _ in 0..self.batches_per_epoch {
                let (value, mut grads) = step(&self.params, counter)?;
                check_finite(value, epoch, &format!("training loss at minibatch {counter}"))?;
                counter += 1;
                total += value;
                clip_global_norm(&mut grads, cfg.clip_norm);
                for ((p, g), s) in self.params.iter_mut().zip(&grads).zip(opt.iter_mut()) {
                    adam_step(p, g, s)?;
                }
            }
            let train = total / self.batches_per_epoch as f64;
            let dev_loss = dev(&self.params)?;
            check_finite(dev_loss, epoch, "dev loss")?;
            epochs_run = epoch;
            curve.push(LossPoint { epoch, split: Split::Train, objective: self.objective, value: train });
            curve.push(LossPoint { epoch, split: Split::Dev, objective: self.objective, value: dev_loss });
            log::info!("{} epoch {epoch} train {train:.6} dev {dev_loss:.6}", self.objective);
            match &best {
                Some((b, _, _)) if dev_loss >= *b => {
                    stale += 1;
                    if stale >= cfg.patience {
                        log::info!("stopping after {stale} epochs without dev improvement");
                        break;
                    }
                }
                _ => {
                    best = Some((dev_loss, epoch, self.params.clone()));
                    stale = 0;
                }
            }
        }
        let (best_dev, best_epoch, params) = best.expect("at least one epoch");
        Ok(TrainOutcome { params, curve, best_epoch, best_dev, epochs_run })
    }
}

fn check_finite(v: f64, epoch: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} in epoch {epoch} is {v}")))
    }
}

fn sum_grads(parts: Vec<Vec<ParameterSet>>, scale: f64) -> Vec<ParameterSet> {
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("nonempty reduction");
    for part in iter {
        for (a, p) in acc.iter_mut().zip(&part) {
            a.add_scaled(p, 1.0);
        }
    }
    acc.iter_mut().for_each(|g| g.scale(scale));
    acc
}

/// Pivot neighbor-embedding loss of one microbatch and its parameter
/// gradient.
pub fn microbatch_loss_grad(
    params: &ParameterSet,
    utts: &[Utterance],
    index: &CorpusIndex,
    mb: &Microbatch,
) -> Result<(f64, ParameterSet)> {
    let caches: Vec<_> = mb.members.iter().map(|&s| acoustic_forward(params, &utts[s])).collect::<Result<_>>()?;
    let emb: Vec<Vec<f64>> = caches.iter().map(|c| c.embedding().to_vec()).collect();
    let (value, d) = loss::ane_loss_and_grad(&emb, &mb.labels(index), AneMode::Pivot)?;
    let mut grads = params.zeros_like();
    for (c, de) in caches.iter().zip(&d) {
        encoder::backward_into(params, c, de, &mut grads)?;
    }
    Ok((value, grads))
}

pub fn microbatch_loss(params: &ParameterSet, utts: &[Utterance], index: &CorpusIndex, mb: &Microbatch) -> Result<f64> {
    let emb: Vec<Vec<f64>> = mb
        .members
        .iter()
        .map(|&s| Ok(acoustic_forward(params, &utts[s])?.embedding().to_vec()))
        .collect::<Result<_>>()?;
    loss::ane_loss(&emb, &mb.labels(index), AneMode::Pivot)
}

/// Mean microbatch loss and mean gradient over a minibatch.
pub fn minibatch_loss_grad(
    params: &ParameterSet,
    utts: &[Utterance],
    index: &CorpusIndex,
    batch: &[Microbatch],
    mode: Parallelism,
) -> Result<(f64, ParameterSet)> {
    let parts = par::try_map(mode, batch, |_, mb| microbatch_loss_grad(params, utts, index, mb))?;
    let value = parts.iter().map(|p| p.0).sum::<f64>() / batch.len() as f64;
    let grads = sum_grads(parts.into_iter().map(|p| vec![p.1]).collect(), 1.0 / batch.len() as f64);
    Ok((value, grads.into_iter().next().unwrap()))
}

fn epoch_size(cfg: &TrainConfig, train_len: usize, per_batch: usize) -> usize {
    if cfg.minibatches_per_epoch > 0 {
        cfg.minibatches_per_epoch
    } else {
        train_len.div_ceil(per_batch).max(1)
    }
}

fn dev_microbatches(cfg: &TrainConfig, index: &CorpusIndex) -> Result<Vec<Microbatch>> {
    let mut r = rng::stream(cfg.seed, rng::DEV_SAMPLES, 0);
    sampler::build_minibatch(index, &cfg.sampler, cfg.dev_samples, &mut r)
}

fn dev_triplets(cfg: &TrainConfig, index: &CorpusIndex) -> Result<Vec<TripletExample>> {
    sampler::build_triplets(index, cfg.dev_samples, &mut rng::stream(cfg.seed, rng::DEV_SAMPLES, 0))
}

/// Single-view triplet loss on acoustic embeddings (anchor, positive and
/// negative all through f), averaged over the triplets.
fn singleview_loss_grad(
    params: &ParameterSet,
    utts: &[Utterance],
    triplets: &[TripletExample],
    tcfg: &TripletConfig,
    want_grad: bool,
) -> Result<(f64, Option<ParameterSet>)> {
    let mut grads = want_grad.then(|| params.zeros_like());
    let mut total = 0.0;
    for t in triplets {
        let c: Vec<_> = [t.anchor, t.positive, t.negative]
            .iter()
            .map(|&s| acoustic_forward(params, &utts[s]))
            .collect::<Result<_>>()?;
        let g = loss::triplet_hinge_grad(c[0].embedding(), c[1].embedding(), c[2].embedding(), tcfg)?;
        total += g.loss;
        if let Some(grads) = grads.as_mut() {
            if g.loss > 0.0 {
                for (cache, d) in c.iter().zip([&g.anchor, &g.positive, &g.negative]) {
                    encoder::backward_into(params, cache, d, grads)?;
                }
            }
        }
    }
    Ok((total, grads))
}

/// Cross-view triplet loss: the anchor utterance through f, the positive and
/// negative transcriptions through g.
fn multiview_loss_grad(
    f: &ParameterSet,
    g: &ParameterSet,
    utts: &[Utterance],
    triplets: &[TripletExample],
    tcfg: &TripletConfig,
    want_grad: bool,
) -> Result<(f64, Option<[ParameterSet; 2]>)> {
    let text_dim = g.config().input_dim;
    let mut grads = want_grad.then(|| [f.zeros_like(), g.zeros_like()]);
    let mut total = 0.0;
    for t in triplets {
        let a = acoustic_forward(f, &utts[t.anchor])?;
        let p = encoder::forward(g, one_hot(&utts[t.positive], text_dim))?;
        let n = encoder::forward(g, one_hot(&utts[t.negative], text_dim))?;
        let h = loss::triplet_hinge_grad(a.embedding(), p.embedding(), n.embedding(), tcfg)?;
        total += h.loss;
        if let Some([gf, gg]) = grads.as_mut() {
            if h.loss > 0.0 {
                encoder::backward_into(f, &a, &h.anchor, gf)?;
                encoder::backward_into(g, &p, &h.positive, gg)?;
                encoder::backward_into(g, &n, &h.negative, gg)?;
            }
        }
    }
    Ok((total, grads))
}

fn chunks<T: Clone>(items: &[T], parts: usize) -> Vec<Vec<T>> {
    let size = items.len().div_ceil(parts.max(1)).max(1);
    items.chunks(size).map(<[T]>::to_vec).collect()
}

/// Trains the acoustic encoder with the pivot neighbor-embedding loss or the
/// single-view triplet loss.
pub fn train_f(cfg: &TrainConfig, train: &[Utterance], dev: &[Utterance]) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.require(&[Objective::AnePivot, Objective::TripletSingleview])?;
    let input_dim = check_acoustic(train, "training")?;
    check_acoustic(dev, "dev")?;
    let train_index = CorpusIndex::from_utterances(train)?;
    let dev_index = CorpusIndex::from_utterances(dev)?;
    let init = ParameterSet::init(cfg.f_config(input_dim), rng::derive(cfg.seed, rng::INIT, 0))?;
    let mode = cfg.parallelism;

    match cfg.objective {
        Objective::AnePivot => {
            let per_batch = cfg.sampler.microbatch_size * cfg.microbatches_per_minibatch;
            let dev_batches = dev_microbatches(cfg, &dev_index)?;
            let lp = Loop {
                cfg,
                objective: cfg.objective,
                params: vec![init],
                batches_per_epoch: epoch_size(cfg, train.len(), per_batch),
            };
            lp.run(
                |p, counter| {
                    let mut r = rng::stream(cfg.seed, rng::TRAIN_SAMPLES, counter);
                    let batch =
                        sampler::build_minibatch(&train_index, &cfg.sampler, cfg.microbatches_per_minibatch, &mut r)?;
                    let (v, g) = minibatch_loss_grad(&p[0], train, &train_index, &batch, mode)?;
                    Ok((v, vec![g]))
                },
                |p| {
                    let losses =
                        par::try_map(mode, &dev_batches, |_, mb| microbatch_loss(&p[0], dev, &dev_index, mb))?;
                    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
                },
            )
        }
        _ => {
            let dev_set = chunks(&dev_triplets(cfg, &dev_index)?, 16);
            let n_dev: usize = dev_set.iter().map(Vec::len).sum();
            let lp = Loop {
                cfg,
                objective: cfg.objective,
                params: vec![init],
                batches_per_epoch: epoch_size(cfg, train.len(), 3 * cfg.triplets_per_minibatch),
            };
            let tcfg = cfg.triplet;
            lp.run(
                |p, counter| {
                    let mut r = rng::stream(cfg.seed, rng::TRAIN_SAMPLES, counter);
                    let trips = sampler::build_triplets(&train_index, cfg.triplets_per_minibatch, &mut r)?;
                    let parts = par::try_map(mode, &chunks(&trips, cfg.microbatches_per_minibatch), |_, c| {
                        singleview_loss_grad(&p[0], train, c, &tcfg, true)
                    })?;
                    let total: f64 = parts.iter().map(|x| x.0).sum();
                    let grads = sum_grads(parts.into_iter().map(|x| vec![x.1.unwrap()]).collect(), 1.0 / trips.len() as f64);
                    Ok((total / trips.len() as f64, grads))
                },
                |p| {
                    let parts =
                        par::try_map(mode, &dev_set, |_, c| singleview_loss_grad(&p[0], dev, c, &tcfg, false))?;
                    Ok(parts.iter().map(|x| x.0).sum::<f64>() / n_dev as f64)
                },
            )
        }
    }
}

/// Trains the text encoder to reproduce a frozen acoustic encoder's
/// embeddings of the same utterances.
pub fn train_g_distill(
    cfg: &TrainConfig,
    f: &ParameterSet,
    text_dim: usize,
    train: &[Utterance],
    dev: &[Utterance],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.require(&[Objective::DistillMse, Objective::DistillCosine])?;
    check_acoustic(train, "training")?;
    check_acoustic(dev, "dev")?;
    if f.config().embed_dim != cfg.embed_dim {
        return Err(Error::DimensionMismatch { expected: cfg.embed_dim, got: f.config().embed_dim });
    }
    let mode = cfg.parallelism;
    let embed_all = |utts: &[Utterance]| -> Result<Vec<Vec<f64>>> {
        par::try_map(mode, utts, |i, u| {
            let x = acoustic_input(u);
            encoder::encode(f, Input::Dense { data: &x, dim: u.x.dim() }).map_err(|e| Error::at(i, e))
        })
    };
    let train_f_cache = if cfg.recompute_f { None } else { Some(embed_all(train)?) };

    let mut r = rng::stream(cfg.seed, rng::DEV_SAMPLES, 0);
    let n_dev = cfg.dev_samples.min(dev.len());
    let mut dev_pick: Vec<usize> = index::sample(&mut r, dev.len(), n_dev).into_vec();
    dev_pick.sort_unstable();
    let dev_utts: Vec<Utterance> = dev_pick.iter().map(|&i| dev[i].clone()).collect();
    let dev_targets = embed_all(&dev_utts)?;

    let init = ParameterSet::init(cfg.g_config(text_dim), rng::derive(cfg.seed, rng::INIT, 1))?;
    let objective = cfg.objective;
    // Distillation loss over a batch of (g input, f target) pairs; the
    // gradient is split into per-chunk parameter sums.
    let batch_loss = move |g: &ParameterSet, utts: &[&Utterance], targets: &[Vec<f64>], want_grad: bool| {
        let caches: Vec<_> =
            par::try_map(mode, utts, |_, u| encoder::forward(g, one_hot(u, text_dim)))?;
        let emb: Vec<Vec<f64>> = caches.iter().map(|c| c.embedding().to_vec()).collect();
        let (value, d) = match objective {
            Objective::DistillMse => loss::mse_distill_grad(&emb, targets)?,
            _ => loss::cosine_distill_grad(&emb, targets)?,
        };
        if !want_grad {
            return Ok::<_, Error>((value, None));
        }
        let pieces: Vec<(usize, usize)> = {
            let size = caches.len().div_ceil(8).max(1);
            (0..caches.len()).step_by(size).map(|s| (s, (s + size).min(caches.len()))).collect()
        };
        let parts = par::try_map(mode, &pieces, |_, &(s, e)| {
            let mut acc = g.zeros_like();
            for k in s..e {
                encoder::backward_into(g, &caches[k], &d[k], &mut acc)?;
            }
            Ok::<_, Error>(vec![acc])
        })?;
        Ok((value, Some(sum_grads(parts, 1.0).pop().unwrap())))
    };

    let batch = cfg.distill_batch.min(train.len());
    let lp = Loop { cfg, objective, params: vec![init], batches_per_epoch: epoch_size(cfg, train.len(), batch) };
    let dev_refs: Vec<&Utterance> = dev_utts.iter().collect();
    lp.run(
        |p, counter| {
            let mut r = rng::stream(cfg.seed, rng::TRAIN_SAMPLES, counter);
            let pick = index::sample(&mut r, train.len(), batch).into_vec();
            let utts: Vec<&Utterance> = pick.iter().map(|&i| &train[i]).collect();
            let targets: Vec<Vec<f64>> = match &train_f_cache {
                Some(cache) => pick.iter().map(|&i| cache[i].clone()).collect(),
                None => {
                    let owned: Vec<Utterance> = utts.iter().map(|u| (*u).clone()).collect();
                    embed_all(&owned)?
                }
            };
            let (v, g) = batch_loss(&p[0], &utts, &targets, true)?;
            Ok((v, vec![g.unwrap()]))
        },
        |p| Ok(batch_loss(&p[0], &dev_refs, &dev_targets, false)?.0),
    )
}

/// Trains f and g together with the cross-view triplet loss.
pub fn train_fg_joint(cfg: &TrainConfig, text_dim: usize, train: &[Utterance], dev: &[Utterance]) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.require(&[Objective::TripletMultiview])?;
    let input_dim = check_acoustic(train, "training")?;
    check_acoustic(dev, "dev")?;
    let train_index = CorpusIndex::from_utterances(train)?;
    let dev_index = CorpusIndex::from_utterances(dev)?;
    let f = ParameterSet::init(cfg.f_config(input_dim), rng::derive(cfg.seed, rng::INIT, 0))?;
    let g = ParameterSet::init(cfg.g_config(text_dim), rng::derive(cfg.seed, rng::INIT, 1))?;
    let mode = cfg.parallelism;
    let tcfg = cfg.triplet;
    let dev_set = chunks(&dev_triplets(cfg, &dev_index)?, 16);
    let n_dev: usize = dev_set.iter().map(Vec::len).sum();
    let lp = Loop {
        cfg,
        objective: cfg.objective,
        params: vec![f, g],
        batches_per_epoch: epoch_size(cfg, train.len(), cfg.triplets_per_minibatch),
    };
    lp.run(
        |p, counter| {
            let mut r = rng::stream(cfg.seed, rng::TRAIN_SAMPLES, counter);
            let trips = sampler::build_triplets(&train_index, cfg.triplets_per_minibatch, &mut r)?;
            let parts = par::try_map(mode, &chunks(&trips, cfg.microbatches_per_minibatch), |_, c| {
                multiview_loss_grad(&p[0], &p[1], train, c, &tcfg, true)
            })?;
            let total: f64 = parts.iter().map(|x| x.0).sum();
            let grads = sum_grads(parts.into_iter().map(|x| x.1.unwrap().into()).collect(), 1.0 / trips.len() as f64);
            Ok((total / trips.len() as f64, grads))
        },
        |p| {
            let parts = par::try_map(mode, &dev_set, |_, c| multiview_loss_grad(&p[0], &p[1], dev, c, &tcfg, false))?;
            Ok(parts.iter().map(|x| x.0).sum::<f64>() / n_dev as f64)
        },
    )
}
