use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{ConfusionKernel, Lexicon, PhoneInventory, Posteriorgram, Utterance};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Inclusive frames-per-phone range.
    pub duration_range: (usize, usize),
    /// Scale of the elementwise |N(0,1)| noise added before renormalizing.
    pub noise_temperature: f64,
    /// Inclusive range of leading and of trailing silence frames. Ignored
    /// when the inventory has no silence dimension.
    pub silence_frames: (usize, usize),
    /// Silence-column mass on padding frames.
    pub silence_mass: f64,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            duration_range: (1, 4),
            noise_temperature: 0.1,
            silence_frames: (1, 3),
            silence_mass: 0.8,
            rng_seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duration_range;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidArgument(format!("duration range [{lo}, {hi}]")));
        }
        let (slo, shi) = self.silence_frames;
        if slo > shi {
            return Err(Error::InvalidArgument(format!("silence frame range [{slo}, {shi}]")));
        }
        if !(self.noise_temperature >= 0.0 && self.noise_temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise temperature {}", self.noise_temperature)));
        }
        if !(0.0..=1.0).contains(&self.silence_mass) {
            return Err(Error::InvalidArgument(format!("silence mass {}", self.silence_mass)));
        }
        Ok(())
    }
}

fn push_frame(out: &mut Vec<f32>, base: &[f64], temperature: f64, rng: &mut rng::Rng) {
    let mut row: Vec<f64> = base.to_vec();
    if temperature > 0.0 {
        for v in row.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += temperature * g.abs();
        }
    }
    let sum: f64 = row.iter().sum();
    out.extend(row.iter().map(|v| (v / sum) as f32));
}

/// Synthesizes a posteriorgram for one pronunciation.
///
/// Each phone lasts a uniform number of frames; each frame is its kernel row
/// plus scaled half-normal noise, renormalized. With a silence dimension the
/// utterance is padded on both sides with silence-dominated frames.
pub fn synth_posteriorgram(
    pron: &[u16],
    kernel: &ConfusionKernel,
    inventory: PhoneInventory,
    params: &SynthParams,
    rng: &mut rng::Rng,
) -> Result<Posteriorgram> {
    if pron.is_empty() {
        return Err(Error::EmptyTranscription);
    }
    params.validate()?;
    if kernel.dim() != inventory.text_dim() {
        return Err(Error::DimensionMismatch { expected: inventory.text_dim(), got: kernel.dim() });
    }
    let dim = inventory.acoustic_dim();
    let (lo, hi) = params.duration_range;
    let mut data = Vec::new();
    let mut frames = 0;

    let silence_base = inventory.silence_index().map(|s| {
        let mut b = vec![(1.0 - params.silence_mass) / inventory.text_dim() as f64; dim];
        b[s] = params.silence_mass;
        b
    });
    let pad = |data: &mut Vec<f32>, frames: &mut usize, rng: &mut rng::Rng| {
        if let Some(base) = &silence_base {
            let n = rng.random_range(params.silence_frames.0..=params.silence_frames.1);
            for _ in 0..n {
                push_frame(data, base, params.noise_temperature, rng);
            }
            *frames += n;
        }
    };

    pad(&mut data, &mut frames, rng);
    let mut base = vec![0.0; dim];
    for &p in pron {
        let p = p as usize;
        if p >= kernel.dim() {
            return Err(Error::InvalidArgument(format!("phone {p} >= {}", kernel.dim())));
        }
        base[..kernel.dim()].copy_from_slice(kernel.row(p));
        let len = rng.random_range(lo..=hi);
        for _ in 0..len {
            push_frame(&mut data, &base, params.noise_temperature, rng);
        }
        frames += len;
    }
    pad(&mut data, &mut frames, rng);
    Posteriorgram::new(frames, dim, data)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Uniform,
    /// Weight of the k-th pronunciation (1-based) proportional to k^-s.
    Zipf(f64),
}

/// How many utterances to draw per lexicon entry.
#[derive(Debug, Clone, PartialEq)]
pub enum CountSpec {
    /// Exactly this many per entry.
    PerPron(usize),
    /// `min_count` utterances for a seeded `min_count_fraction` of entries,
    /// then the rest of `total` drawn multinomially with `weights`.
    Multinomial { total: usize, weights: Weights, min_count: usize, min_count_fraction: f64 },
}

impl CountSpec {
    pub fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            CountSpec::PerPron(_) | CountSpec::Multinomial { weights: Weights::Uniform, .. } => vec![1.0; n],
            CountSpec::Multinomial { weights: Weights::Zipf(s), .. } => {
                (1..=n).map(|k| (k as f64).powf(-s)).collect()
            }
        }
    }

    pub fn counts(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match *self {
            CountSpec::PerPron(c) => Ok(vec![c; n]),
            CountSpec::Multinomial { total, min_count, min_count_fraction, .. } => {
                if !(0.0..=1.0).contains(&min_count_fraction) {
                    return Err(Error::InvalidArgument(format!("min_count_fraction {min_count_fraction}")));
                }
                let mut rng = rng::stream(seed, rng::COUNTS, 0);
                let mut counts = vec![0usize; n];
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let guaranteed = ((min_count_fraction * n as f64).ceil() as usize).min(n);
                for &i in &order[..guaranteed] {
                    counts[i] = min_count;
                }
                let rest = total.saturating_sub(guaranteed * min_count);
                if rest > 0 && n > 0 {
                    let dist = WeightedIndex::new(self.weights(n))
                        .map_err(|e| Error::InvalidArgument(format!("weights: {e}")))?;
                    for _ in 0..rest {
                        counts[dist.sample(&mut rng)] += 1;
                    }
                }
                Ok(counts)
            }
        }
    }
}

/// Draws a corpus from a lexicon. The result is a pure function of the
/// arguments: utterance `i` uses its own random stream, so the parallel and
/// sequential paths agree.
pub fn sample_corpus(
    lexicon: &Lexicon,
    kernel: &ConfusionKernel,
    inventory: PhoneInventory,
    counts: &CountSpec,
    params: &SynthParams,
    id_prefix: &str,
    mode: Parallelism,
) -> Result<Vec<Utterance>> {
    if lexicon.is_empty() {
        return Err(Error::InvalidArgument("empty lexicon".into()));
    }
    params.validate()?;
    let per_entry = counts.counts(lexicon.len(), params.rng_seed)?;
    let mut plan: Vec<usize> = per_entry.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
    plan.shuffle(&mut rng::stream(params.rng_seed, rng::COUNTS, 1));

    par::map_range(mode, plan.len(), |i| {
        let entry = &lexicon.entries()[plan[i]];
        let mut rng = rng::stream(params.rng_seed, rng::UTTERANCE, i as u64);
        let x = synth_posteriorgram(&entry.pron, kernel, inventory, params, &mut rng)?;
        Ok(Utterance { id: format!("{id_prefix}{i:06}"), x, y: entry.pron.clone() })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LexiconEntry;

    fn quiet(lo: usize, hi: usize) -> SynthParams {
        SynthParams {
            duration_range: (lo, hi),
            noise_temperature: 0.0,
            silence_frames: (0, 0),
            ..SynthParams::default()
        }
    }

    #[test]
    fn noiseless_identity_is_one_hot() {
        let inv = PhoneInventory::new(4, false).unwrap();
        let k = ConfusionKernel::identity(4);
        let x = synth_posteriorgram(&[2], &k, inv, &quiet(3, 3), &mut rng::stream(0, 0, 0)).unwrap();
        assert_eq!(x.frames(), 3);
        for t in 0..3 {
            assert_eq!(x.row(t), &[0.0, 0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn duration_bounds() {
        let inv = PhoneInventory::new(6, false).unwrap();
        let k = ConfusionKernel::identity(6);
        for s in 0..50 {
            let x = synth_posteriorgram(&[0, 1, 2, 3, 4], &k, inv, &quiet(4, 10), &mut rng::stream(s, 0, 0)).unwrap();
            assert!((20..=50).contains(&x.frames()));
        }
    }

    #[test]
    fn kernel_row_passes_through_with_silence_column() {
        let inv = PhoneInventory::new(3, true).unwrap();
        let k = ConfusionKernel::build(3, &[(0, 1, 0.3)], 0.7).unwrap();
        let x = synth_posteriorgram(&[0], &k, inv, &quiet(1, 1), &mut rng::stream(0, 0, 0)).unwrap();
        assert_eq!(x.frames(), 1);
        let want = [0.7f32, 0.3, 0.0, 0.0];
        for (a, b) in x.row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn empty_pron_rejected() {
        let inv = PhoneInventory::new(3, false).unwrap();
        let err = synth_posteriorgram(&[], &ConfusionKernel::identity(3), inv, &quiet(1, 1), &mut rng::stream(0, 0, 0));
        assert!(matches!(err, Err(Error::EmptyTranscription)));
    }

    #[test]
    fn noisy_rows_stay_stochastic_and_padded() {
        let inv = PhoneInventory::new(10, true).unwrap();
        let k = ConfusionKernel::build(10, &[(1, 2, 0.3)], 0.6).unwrap();
        let p = SynthParams { noise_temperature: 0.3, ..SynthParams::default() };
        for s in 0..20 {
            let x = synth_posteriorgram(&[1, 2, 3], &k, inv, &p, &mut rng::stream(s, 0, 0)).unwrap();
            x.check_rows(1e-6).unwrap();
            assert!(x.frames() >= 3 + 2);
            let sil = inv.silence_index().unwrap();
            let first = x.row(0);
            assert!((0..10).all(|j| first[sil] > first[j]));
        }
    }

    #[test]
    fn noiseless_argmax_recovers_pron() {
        let inv = PhoneInventory::new(8, false).unwrap();
        let k = ConfusionKernel::identity(8);
        let pron = [3u16, 1, 7, 1];
        let x = synth_posteriorgram(&pron, &k, inv, &quiet(1, 3), &mut rng::stream(1, 0, 0)).unwrap();
        let got: Vec<u16> = x.collapsed_argmax().into_iter().map(|p| p as u16).collect();
        assert_eq!(got, pron);
    }

    #[test]
    fn per_pron_counts_and_identical_labels() {
        let lex = Lexicon::new(vec![LexiconEntry { label: "a".into(), pron: vec![0, 1] }], 3).unwrap();
        let inv = PhoneInventory::new(3, false).unwrap();
        let utts = sample_corpus(
            &lex,
            &ConfusionKernel::identity(3),
            inv,
            &CountSpec::PerPron(3),
            &SynthParams::default(),
            "u",
            Parallelism::Parallel,
        )
        .unwrap();
        assert_eq!(utts.len(), 3);
        assert!(utts.iter().all(|u| u.y == vec![0, 1]));
    }

    #[test]
    fn guaranteed_fraction_gets_min_count() {
        let spec = CountSpec::Multinomial { total: 50, weights: Weights::Uniform, min_count: 2, min_count_fraction: 0.5 };
        let c = spec.counts(40, 9).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 50);
        assert!(c.iter().filter(|&&n| n >= 2).count() >= 20);
    }
}
