//! Synthetic phonetic world: inventory, confusion structure, lexicon and
//! posteriorgram utterances, plus the on-disk corpus formats.

mod io;
mod kernel;
mod synth;
mod world;

pub use io::{
    decode_posteriorgram, encode_posteriorgram, format_lexicon, format_manifest, parse_lexicon, parse_manifest,
    read_corpus, read_lexicon_file, read_manifest, read_posteriorgram, write_corpus, write_lexicon_file,
    write_manifest, write_posteriorgram, Corpus, ManifestRecord, MANIFEST_FILE, POSTERIORGRAM_MAGIC,
};
pub use kernel::ConfusionKernel;
pub use synth::{sample_corpus, synth_posteriorgram, CountSpec, SynthParams, Weights};
pub use world::{World, WorldConfig};

use crate::error::{Error, Result};

/// Sequence of text subword indices.
pub type Transcription = Vec<u16>;

pub fn format_transcription(pron: &[u16]) -> String {
    pron.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_transcription(s: &str) -> std::result::Result<Transcription, String> {
    s.split_whitespace()
        .map(|t| t.parse::<u16>().map_err(|e| format!("bad phone index {t:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhoneInventory {
    /// Number of text subwords.
    pub size: usize,
    /// Adds a trailing silence dimension on the acoustic side.
    pub includes_silence: bool,
}

impl PhoneInventory {
    pub fn new(size: usize, includes_silence: bool) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!("inventory size {size} < 2")));
        }
        Ok(PhoneInventory { size, includes_silence })
    }

    pub fn text_dim(&self) -> usize {
        self.size
    }

    pub fn acoustic_dim(&self) -> usize {
        self.size + usize::from(self.includes_silence)
    }

    pub fn silence_index(&self) -> Option<usize> {
        self.includes_silence.then_some(self.size)
    }
}

/// Row-major `frames x dim` matrix of per-frame subword posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Posteriorgram {
    pub fn new(frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames.checked_mul(dim) != Some(data.len()) {
            return Err(Error::DimensionMismatch { expected: frames.saturating_mul(dim), got: data.len() });
        }
        Ok(Posteriorgram { frames, dim, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Framewise argmax with consecutive repeats collapsed.
    pub fn collapsed_argmax(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for t in 0..self.frames {
            let row = self.row(t);
            let best = (0..self.dim).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            if out.last() != Some(&best) {
                out.push(best);
            }
        }
        out
    }

    /// Checks the stochastic-row invariant at the given tolerance.
    pub fn check_rows(&self, tol: f64) -> Result<()> {
        for t in 0..self.frames {
            let row = self.row(t);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(format!("frame {t} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!("frame {t} sums to {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub x: Posteriorgram,
    pub y: Transcription,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub label: String,
    pub pron: Transcription,
}

/// Word labels with one or more pronunciations each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>, text_dim: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.pron.is_empty() {
                return Err(Error::at(i, Error::EmptyTranscription));
            }
            if let Some(&p) = e.pron.iter().find(|&&p| p as usize >= text_dim) {
                return Err(Error::at(i, Error::InvalidArgument(format!("phone {p} >= {text_dim}"))));
            }
            if !seen.insert((e.label.as_str(), e.pron.as_slice())) {
                return Err(Error::at(
                    i,
                    Error::InvalidArgument(format!("duplicate entry {} / {}", e.label, format_transcription(&e.pron))),
                ));
            }
        }
        Ok(Lexicon { entries })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Label of the first entry carrying this pronunciation.
    pub fn label_of(&self, pron: &[u16]) -> Option<&str> {
        self.entries.iter().find(|e| e.pron == pron).map(|e| e.label.as_str())
    }

    pub fn max_phone(&self) -> Option<u16> {
        self.entries.iter().flat_map(|e| e.pron.iter().copied()).max()
    }
}
