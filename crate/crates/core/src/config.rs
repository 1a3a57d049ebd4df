//! `key = value` settings files.
//!
//! One file configures every stage: the synthetic world, utterance
//! synthesis, corpus sizes and training. `#` starts a comment, blank lines
//! are ignored, unknown and repeated keys are errors. Command-line overrides
//! use the same syntax and are applied after the file.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{CountSpec, SynthParams, Weights, WorldConfig};
use crate::error::{Error, Result};
use crate::loss::Similarity;
use crate::trainer::{Objective, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub world: WorldConfig,
    pub synth: SynthParams,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    pub count_weights: Weights,
    pub min_count: usize,
    pub min_count_fraction: f64,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            world: WorldConfig::default(),
            synth: SynthParams::default(),
            train_utterances: 20_000,
            dev_utterances: 600,
            test_utterances: 1200,
            count_weights: Weights::Uniform,
            min_count: 2,
            min_count_fraction: 1.0,
            train: TrainConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidValue { key: key.into(), reason: format!("cannot parse {v:?}") })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::InvalidValue { key: key.into(), reason: format!("expected true or false, got {v:?}") }),
    }
}

fn format_weights(w: &Weights) -> String {
    match w {
        Weights::Uniform => "uniform".into(),
        Weights::Zipf(s) => format!("zipf:{s}"),
    }
}

fn parse_weights(key: &str, v: &str) -> Result<Weights> {
    if v == "uniform" {
        return Ok(Weights::Uniform);
    }
    if let Some(s) = v.strip_prefix("zipf:") {
        let s: f64 = parse_num(key, s)?;
        if s.is_finite() && s >= 0.0 {
            return Ok(Weights::Zipf(s));
        }
    }
    Err(Error::InvalidValue { key: key.into(), reason: format!("expected uniform or zipf:<exponent>, got {v:?}") })
}

impl Settings {
    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let w = &self.world;
        let s = &self.synth;
        let t = &self.train;
        vec![
            ("phones", w.phones.to_string()),
            ("silence", w.silence.to_string()),
            ("confusable_pairs", w.confusable_pairs.to_string()),
            ("confusion_strength", w.confusion_strength.to_string()),
            ("self_mass", w.self_mass.to_string()),
            ("lexicon_size", w.lexicon_size.to_string()),
            ("pron_len_min", w.pron_len.0.to_string()),
            ("pron_len_max", w.pron_len.1.to_string()),
            ("minimal_pair_fraction", w.minimal_pair_fraction.to_string()),
            ("alt_pron_fraction", w.alt_pron_fraction.to_string()),
            ("duration_min", s.duration_range.0.to_string()),
            ("duration_max", s.duration_range.1.to_string()),
            ("noise_temperature", s.noise_temperature.to_string()),
            ("silence_frames_min", s.silence_frames.0.to_string()),
            ("silence_frames_max", s.silence_frames.1.to_string()),
            ("silence_mass", s.silence_mass.to_string()),
            ("train_utterances", self.train_utterances.to_string()),
            ("dev_utterances", self.dev_utterances.to_string()),
            ("test_utterances", self.test_utterances.to_string()),
            ("count_weights", format_weights(&self.count_weights)),
            ("min_count", self.min_count.to_string()),
            ("min_count_fraction", self.min_count_fraction.to_string()),
            ("objective", t.objective.to_string()),
            ("embed_dim", t.embed_dim.to_string()),
            ("f_layers", t.f_shape.layers.to_string()),
            ("f_hidden", t.f_shape.hidden.to_string()),
            ("g_layers", t.g_shape.layers.to_string()),
            ("g_hidden", t.g_shape.hidden.to_string()),
            ("microbatch_size", t.sampler.microbatch_size.to_string()),
            ("microbatches_per_minibatch", t.microbatches_per_minibatch.to_string()),
            ("forced_positives", t.sampler.forced_positives.to_string()),
            ("restrict_negatives", t.sampler.restrict_negatives.to_string()),
            ("triplets_per_minibatch", t.triplets_per_minibatch.to_string()),
            ("distill_batch", t.distill_batch.to_string()),
            ("minibatches_per_epoch", t.minibatches_per_epoch.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("learning_rate", t.adam.lr.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("epsilon", t.adam.eps.to_string()),
            ("clip_norm", t.clip_norm.to_string()),
            ("margin", t.triplet.margin.to_string()),
            ("similarity", t.triplet.similarity.name().to_string()),
            ("dev_samples", t.dev_samples.to_string()),
            ("recompute_f", t.recompute_f.to_string()),
        ]
    }

    pub fn is_key(key: &str) -> bool {
        Settings::default().entries().iter().any(|(k, _)| *k == key)
    }

    /// Sets one key; `line` is only used in error messages (0 for overrides).
    pub fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let w = &mut self.world;
        let s = &mut self.synth;
        let t = &mut self.train;
        match key {
            "phones" => w.phones = parse_num(key, v)?,
            "silence" => w.silence = parse_bool(key, v)?,
            "confusable_pairs" => w.confusable_pairs = parse_num(key, v)?,
            "confusion_strength" => w.confusion_strength = parse_num(key, v)?,
            "self_mass" => w.self_mass = parse_num(key, v)?,
            "lexicon_size" => w.lexicon_size = parse_num(key, v)?,
            "pron_len_min" => w.pron_len.0 = parse_num(key, v)?,
            "pron_len_max" => w.pron_len.1 = parse_num(key, v)?,
            "minimal_pair_fraction" => w.minimal_pair_fraction = parse_num(key, v)?,
            "alt_pron_fraction" => w.alt_pron_fraction = parse_num(key, v)?,
            "duration_min" => s.duration_range.0 = parse_num(key, v)?,
            "duration_max" => s.duration_range.1 = parse_num(key, v)?,
            "noise_temperature" => s.noise_temperature = parse_num(key, v)?,
            "silence_frames_min" => s.silence_frames.0 = parse_num(key, v)?,
            "silence_frames_max" => s.silence_frames.1 = parse_num(key, v)?,
            "silence_mass" => s.silence_mass = parse_num(key, v)?,
            "train_utterances" => self.train_utterances = parse_num(key, v)?,
            "dev_utterances" => self.dev_utterances = parse_num(key, v)?,
            "test_utterances" => self.test_utterances = parse_num(key, v)?,
            "count_weights" => self.count_weights = parse_weights(key, v)?,
            "min_count" => self.min_count = parse_num(key, v)?,
            "min_count_fraction" => self.min_count_fraction = parse_num(key, v)?,
            "objective" => {
                t.objective = Objective::parse(v).ok_or_else(|| Error::InvalidValue {
                    key: key.into(),
                    reason: format!("unknown objective {v:?}"),
                })?
            }
            "embed_dim" => t.embed_dim = parse_num(key, v)?,
            "f_layers" => t.f_shape.layers = parse_num(key, v)?,
            "f_hidden" => t.f_shape.hidden = parse_num(key, v)?,
            "g_layers" => t.g_shape.layers = parse_num(key, v)?,
            "g_hidden" => t.g_shape.hidden = parse_num(key, v)?,
            "microbatch_size" => t.sampler.microbatch_size = parse_num(key, v)?,
            "microbatches_per_minibatch" => t.microbatches_per_minibatch = parse_num(key, v)?,
            "forced_positives" => t.sampler.forced_positives = parse_num(key, v)?,
            "restrict_negatives" => t.sampler.restrict_negatives = parse_bool(key, v)?,
            "triplets_per_minibatch" => t.triplets_per_minibatch = parse_num(key, v)?,
            "distill_batch" => t.distill_batch = parse_num(key, v)?,
            "minibatches_per_epoch" => t.minibatches_per_epoch = parse_num(key, v)?,
            "max_epochs" => t.max_epochs = parse_num(key, v)?,
            "patience" => t.patience = parse_num(key, v)?,
            "learning_rate" => t.adam.lr = parse_num(key, v)?,
            "beta1" => t.adam.beta1 = parse_num(key, v)?,
            "beta2" => t.adam.beta2 = parse_num(key, v)?,
            "epsilon" => t.adam.eps = parse_num(key, v)?,
            "clip_norm" => t.clip_norm = parse_num(key, v)?,
            "margin" => t.triplet.margin = parse_num(key, v)?,
            "similarity" => {
                t.triplet.similarity = Similarity::parse(v).ok_or_else(|| Error::InvalidValue {
                    key: key.into(),
                    reason: format!("unknown similarity {v:?}"),
                })?
            }
            "dev_samples" => t.dev_samples = parse_num(key, v)?,
            "recompute_f" => t.recompute_f = parse_bool(key, v)?,
            _ => return Err(Error::UnknownKey { key: key.into(), line }),
        }
        Ok(())
    }

    /// Cross-key checks beyond what a single value can violate.
    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        if w.pron_len.0 == 0 || w.pron_len.0 > w.pron_len.1 {
            return Err(Error::InvalidValue { key: "pron_len_min".into(), reason: "need 1 ≤ min ≤ max".into() });
        }
        if self.train_utterances == 0 || self.dev_utterances == 0 || self.test_utterances == 0 {
            return Err(Error::InvalidValue { key: "train_utterances".into(), reason: "split sizes must be positive".into() });
        }
        if !(0.0..=1.0).contains(&self.min_count_fraction) {
            return Err(Error::InvalidValue { key: "min_count_fraction".into(), reason: "must be in [0, 1]".into() });
        }
        self.synth.validate()?;
        self.train.validate()
    }

    /// Utterance counts for a split of `total` utterances.
    pub fn count_spec(&self, total: usize) -> CountSpec {
        CountSpec::Multinomial {
            total,
            weights: self.count_weights.clone(),
            min_count: self.min_count,
            min_count_fraction: self.min_count_fraction,
        }
    }

    /// Normalized `key = value` rendering of every setting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Splits `key = value`, rejecting anything else.
fn split_assignment(raw: &str, line: usize) -> Result<(&str, &str)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| Error::ConfigSyntax { line, reason: format!("expected `key = value`, got {raw:?}") })?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || k.contains(char::is_whitespace) {
        return Err(Error::ConfigSyntax { line, reason: format!("bad key {k:?}") });
    }
    if v.is_empty() {
        return Err(Error::ConfigSyntax { line, reason: format!("missing value for {k:?}") });
    }
    Ok((k, v))
}

/// Parses settings text on top of the defaults, then applies `overrides`
/// (`key=value` strings) which may repeat keys from the file.
pub fn parse_settings(text: &str, overrides: &[String]) -> Result<Settings> {
    parse_settings_over(Settings::default(), text, overrides)
}

/// Like [`parse_settings`] but starting from `base` instead of the defaults.
pub fn parse_settings_over(base: Settings, text: &str, overrides: &[String]) -> Result<Settings> {
    let mut settings = base;
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split_once('#').map_or(raw, |(b, _)| b).trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(body, line)?;
        if !Settings::is_key(k) {
            return Err(Error::UnknownKey { key: k.into(), line });
        }
        if seen.iter().any(|s| s == k) {
            return Err(Error::DuplicateKey { key: k.into(), line });
        }
        seen.push(k.to_string());
        settings.set(k, v, line).map_err(|e| match e {
            Error::InvalidValue { key, reason } => Error::InvalidValue { key, reason: format!("{reason} (line {line})") },
            other => other,
        })?;
    }
    for o in overrides {
        let (k, v) = split_assignment(o, 0)?;
        settings.set(k, v, 0)?;
    }
    settings.validate()?;
    Ok(settings)
}

pub fn read_settings(base: Settings, path: Option<&Path>, overrides: &[String]) -> Result<Settings> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_settings_over(base, &text, overrides)
}
