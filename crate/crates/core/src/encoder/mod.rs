//! Bidirectional LSTM sequence encoder with exact reverse-mode gradients.
//!
//! One instance embeds posteriorgrams (the acoustic encoder), another embeds
//! one-hot transcriptions (the text encoder). The embedding is a linear
//! projection of the last forward state and the last backward state of the
//! top layer.
//!
//! Cell equations, per direction and layer, with gates stored in the order
//! below inside every `4 * hidden` block:
//!
//! | block | gate        | activation | equation                                  |
//! |-------|-------------|------------|-------------------------------------------|
//! | 0     | input `i`   | sigmoid    | `i = σ(x·W_ih[:, 0] + h·W_hh[:, 0] + b_0)` |
//! | 1     | forget `f`  | sigmoid    | `f = σ(x·W_ih[:, 1] + h·W_hh[:, 1] + b_1)` |
//! | 2     | cell `g`    | tanh       | `g = tanh(x·W_ih[:, 2] + h·W_hh[:, 2] + b_2)` |
//! | 3     | output `o`  | sigmoid    | `o = σ(x·W_ih[:, 3] + h·W_hh[:, 3] + b_3)` |
//!
//! `c_t = f ⊙ c_{t-1} + i ⊙ g`, `h_t = o ⊙ tanh(c_t)`. Weights are stored
//! input-major: `w_ih` is `[input, 4·hidden]`, `w_hh` is `[hidden, 4·hidden]`,
//! so a frame contributes `Σ_k x_k · w_ih[k, :]`. There is a single bias per
//! direction; its forget block is initialized to 1.

mod checkpoint;
mod lstm;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use lstm::ForwardCache;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lstm" => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    /// States per direction per layer.
    pub hidden: usize,
    pub embed_dim: usize,
    pub cell: CellKind,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, layers: usize, hidden: usize, embed_dim: usize) -> Self {
        EncoderConfig { input_dim, layers, hidden, embed_dim, cell: CellKind::Lstm }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument(format!("encoder dims must be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.hidden
        }
    }

    /// Metadata string stored in checkpoints.
    pub fn describe(&self) -> String {
        format!(
            "cell={} input_dim={} layers={} hidden={} embed_dim={}",
            self.cell.name(),
            self.input_dim,
            self.layers,
            self.hidden,
            self.embed_dim
        )
    }

    pub fn parse_description(s: &str) -> Result<Self> {
        let mut cfg = EncoderConfig::new(0, 0, 0, 0);
        for tok in s.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Malformed { what: "checkpoint metadata", line: 0, reason: tok.into() })?;
            let num = || {
                v.parse::<usize>()
                    .map_err(|e| Error::Malformed { what: "checkpoint metadata", line: 0, reason: format!("{k}: {e}") })
            };
            match k {
                "cell" => {
                    cfg.cell = CellKind::parse(v).ok_or_else(|| Error::Malformed {
                        what: "checkpoint metadata",
                        line: 0,
                        reason: format!("cell {v}"),
                    })?
                }
                "input_dim" => cfg.input_dim = num()?,
                "layers" => cfg.layers = num()?,
                "hidden" => cfg.hidden = num()?,
                "embed_dim" => cfg.embed_dim = num()?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expected `(name, shape)` of every tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let h4 = 4 * self.hidden;
        let mut out = Vec::new();
        for l in 0..self.layers {
            for dir in ["fwd", "bwd"] {
                out.push((format!("l{l}.{dir}.w_ih"), vec![self.layer_input(l), h4]));
                out.push((format!("l{l}.{dir}.w_hh"), vec![self.hidden, h4]));
                out.push((format!("l{l}.{dir}.bias"), vec![h4]));
            }
        }
        out.push(("proj.weight".into(), vec![self.embed_dim, 2 * self.hidden]));
        out.push(("proj.bias".into(), vec![self.embed_dim]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Encoder weights, or a gradient with the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    config: EncoderConfig,
    tensors: Vec<Tensor>,
}

pub(crate) const W_IH: usize = 0;
pub(crate) const W_HH: usize = 1;
pub(crate) const BIAS: usize = 2;

impl ParameterSet {
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                Tensor { name, shape, data: vec![0.0; n] }
            })
            .collect();
        Ok(ParameterSet { config, tensors })
    }

    /// Uniform in ±1/√fan_in per weight tensor, zero biases except the
    /// forget block, which starts at 1.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let h = config.hidden;
        for (idx, t) in p.tensors.iter_mut().enumerate() {
            let mut r = rng::stream(seed, rng::INIT, idx as u64);
            if t.name.ends_with(".bias") && t.name.starts_with('l') {
                t.data[h..2 * h].fill(1.0);
            } else if t.name == "proj.bias" {
            } else {
                let fan_in = if t.name == "proj.weight" { t.shape[1] } else { t.shape[0] };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in t.data.iter_mut() {
                    *v = r.random_range(-bound..bound);
                }
            }
        }
        Ok(p)
    }

    pub(crate) fn from_parts(config: EncoderConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(Error::CountMismatch { left: layout.len(), right: tensors.len() });
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::InvalidArgument(format!("tensor {} does not match {name} {shape:?}", t.name)));
            }
        }
        Ok(ParameterSet { config, tensors })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub(crate) fn cell(&self, layer: usize, backward_dir: bool, part: usize) -> &[f64] {
        &self.tensors[(layer * 2 + usize::from(backward_dir)) * 3 + part].data
    }

    pub(crate) fn cell_mut(&mut self, layer: usize, backward_dir: bool, part: usize) -> &mut [f64] {
        &mut self.tensors[(layer * 2 + usize::from(backward_dir)) * 3 + part].data
    }

    pub(crate) fn proj_weight(&self) -> &[f64] {
        &self.tensors[self.config.layers * 6].data
    }

    pub(crate) fn proj_bias(&self) -> &[f64] {
        &self.tensors[self.config.layers * 6 + 1].data
    }

    pub(crate) fn proj_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.tensors[self.config.layers * 6..].split_at_mut(1);
        (&mut w[0].data, &mut b[0].data)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors.iter_mut().for_each(|t| t.data.fill(0.0));
        z
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v *= s));
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// One input sequence.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    /// Row-major `len x dim` frames.
    Dense { data: &'a [f64], dim: usize },
    /// One-hot frames given by their hot index.
    OneHot { ids: &'a [u16], dim: usize },
}

impl Input<'_> {
    pub fn len(&self) -> usize {
        match *self {
            Input::Dense { data, dim } => data.len().checked_div(dim).unwrap_or(0),
            Input::OneHot { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match *self {
            Input::Dense { dim, .. } | Input::OneHot { dim, .. } => dim,
        }
    }

    fn validate(&self, expected_dim: usize) -> Result<()> {
        if self.dim() != expected_dim {
            return Err(Error::DimensionMismatch { expected: expected_dim, got: self.dim() });
        }
        match *self {
            Input::Dense { data, dim } => {
                if data.is_empty() {
                    return Err(Error::EmptySequence);
                }
                if data.len() % dim != 0 {
                    return Err(Error::DimensionMismatch { expected: dim, got: data.len() % dim });
                }
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("input frames".into()));
                }
            }
            Input::OneHot { ids, dim } => {
                if ids.is_empty() {
                    return Err(Error::EmptySequence);
                }
                if let Some(&bad) = ids.iter().find(|&&i| i as usize >= dim) {
                    return Err(Error::InvalidArgument(format!("one-hot index {bad} >= {dim}")));
                }
            }
        }
        Ok(())
    }
}

/// Forward pass keeping everything `backward` needs.
pub fn forward(params: &ParameterSet, x: Input<'_>) -> Result<ForwardCache> {
    x.validate(params.config.input_dim)?;
    Ok(lstm::forward(params, x))
}

pub fn encode(params: &ParameterSet, x: Input<'_>) -> Result<Vec<f64>> {
    Ok(forward(params, x)?.embedding().to_vec())
}

/// Parameter gradient of `d_embedding · encode(x)`, added into `grads`.
pub fn backward_into(params: &ParameterSet, cache: &ForwardCache, d_embedding: &[f64], grads: &mut ParameterSet) -> Result<()> {
    check_backward(params, cache, d_embedding, grads)?;
    lstm::backward(params, cache, d_embedding, grads, false);
    Ok(())
}

fn check_backward(params: &ParameterSet, cache: &ForwardCache, d_embedding: &[f64], grads: &ParameterSet) -> Result<()> {
    if !cache.is_filled() {
        return Err(Error::NoForwardCache);
    }
    if cache.config() != params.config || grads.config != params.config {
        return Err(Error::InvalidArgument("forward cache belongs to a different encoder".into()));
    }
    if d_embedding.len() != params.config.embed_dim {
        return Err(Error::DimensionMismatch { expected: params.config.embed_dim, got: d_embedding.len() });
    }
    Ok(())
}

/// Parameter gradients plus, for dense inputs, the input gradient.
pub fn backward(params: &ParameterSet, cache: &ForwardCache, d_embedding: &[f64]) -> Result<(ParameterSet, Option<Vec<f64>>)> {
    let mut grads = params.zeros_like();
    check_backward(params, cache, d_embedding, &grads)?;
    let dx = lstm::backward(params, cache, d_embedding, &mut grads, true);
    Ok((grads, dx))
}

/// Encodes many sequences; errors name the offending index.
pub fn encode_batch(params: &ParameterSet, xs: &[Input<'_>], mode: Parallelism) -> Result<Vec<Vec<f64>>> {
    par::try_map(mode, xs, |i, x| encode(params, *x).map_err(|e| Error::at(i, e)))
}
