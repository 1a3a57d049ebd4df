//! Pivot microbatches and triplet examples.
//!
//! Samples are referred to by their position in the corpus the index was
//! built from. A microbatch lists its pivot first, then the forced positives,
//! then the remaining companions.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng as _;

use crate::corpus::{ManifestRecord, Transcription, Utterance};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Utterances grouped by exact transcription equality.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    ids: Vec<String>,
    class_of: Vec<usize>,
    keys: Vec<Transcription>,
    members: Vec<Vec<usize>>,
    multi: Vec<usize>,
}

impl CorpusIndex {
    pub fn build<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [u16])>,
    {
        let mut idx = CorpusIndex::default();
        let mut by_key: HashMap<&[u16], usize> = HashMap::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (pos, (id, y)) in items.into_iter().enumerate() {
            if seen.insert(id, ()).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
            let class = *by_key.entry(y).or_insert_with(|| {
                idx.keys.push(y.to_vec());
                idx.members.push(Vec::new());
                idx.keys.len() - 1
            });
            idx.members[class].push(pos);
            idx.class_of.push(class);
            idx.ids.push(id.to_string());
        }
        idx.multi = (0..idx.members.len()).filter(|&c| idx.members[c].len() >= 2).collect();
        Ok(idx)
    }

    pub fn from_utterances(utts: &[Utterance]) -> Result<Self> {
        Self::build(utts.iter().map(|u| (u.id.as_str(), u.y.as_slice())))
    }

    pub fn from_manifest(records: &[ManifestRecord]) -> Result<Self> {
        Self::build(records.iter().map(|r| (r.id.as_str(), r.pron.as_slice())))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    pub fn id(&self, sample: usize) -> &str {
        &self.ids[sample]
    }

    pub fn class_of(&self, sample: usize) -> usize {
        self.class_of[sample]
    }

    pub fn class_key(&self, class: usize) -> &[u16] {
        &self.keys[class]
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    /// Classes with at least two utterances, in first-seen order.
    pub fn multi_member_classes(&self) -> &[usize] {
        &self.multi
    }

    fn pick_pivot_class(&self, rng: &mut Rng) -> Result<usize> {
        if self.multi.is_empty() {
            return Err(Error::NoMultiMemberClass);
        }
        Ok(self.multi[rng.random_range(0..self.multi.len())])
    }

    /// Draws `count` distinct samples outside `class` and outside `taken`,
    /// by rejection.
    fn draw_outside(&self, class: Option<usize>, taken: &mut Vec<usize>, count: usize, rng: &mut Rng) -> Result<()> {
        let excluded_class = class.map_or(0, |c| self.members[c].len());
        let already_outside = taken.iter().filter(|&&s| Some(self.class_of[s]) != class).count();
        if self.len() - excluded_class - already_outside < count {
            return Err(Error::NotEnoughNegatives);
        }
        let start = taken.len();
        while taken.len() < start + count {
            let s = rng.random_range(0..self.len());
            if Some(self.class_of[s]) != class && !taken.contains(&s) {
                taken.push(s);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Microbatch size N, pivot included.
    pub microbatch_size: usize,
    /// Companions forced to share the pivot's class.
    pub forced_positives: usize,
    /// Draw the other companions only from classes other than the pivot's.
    pub restrict_negatives: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { microbatch_size: 16, forced_positives: 1, restrict_negatives: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.microbatch_size < 2 {
            return Err(Error::InvalidArgument(format!("microbatch size {} < 2", self.microbatch_size)));
        }
        if self.forced_positives == 0 || self.forced_positives >= self.microbatch_size {
            return Err(Error::InvalidArgument(format!(
                "forced positives {} must be in 1..{}",
                self.forced_positives, self.microbatch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Microbatch {
    /// Sample positions; element 0 is the pivot.
    pub members: Vec<usize>,
}

impl Microbatch {
    pub fn pivot(&self) -> usize {
        self.members[0]
    }

    pub fn companions(&self) -> &[usize] {
        &self.members[1..]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Class ids of the members, usable as loss labels.
    pub fn labels(&self, index: &CorpusIndex) -> Vec<usize> {
        self.members.iter().map(|&s| index.class_of(s)).collect()
    }
}

pub fn build_microbatch(index: &CorpusIndex, cfg: &SamplerConfig, rng: &mut Rng) -> Result<Microbatch> {
    cfg.validate()?;
    if cfg.microbatch_size > index.len() {
        return Err(Error::InvalidArgument(format!(
            "microbatch size {} exceeds corpus size {}",
            cfg.microbatch_size,
            index.len()
        )));
    }
    let class = index.pick_pivot_class(rng)?;
    let pool = index.members(class);
    let forced = cfg.forced_positives.min(pool.len() - 1);
    // pivot plus forced positives, distinct within the class
    let mut members: Vec<usize> = index::sample(rng, pool.len(), forced + 1).into_iter().map(|k| pool[k]).collect();
    let rest = cfg.microbatch_size - members.len();
    if cfg.restrict_negatives {
        index.draw_outside(Some(class), &mut members, rest, rng)?;
    } else {
        index.draw_outside(None, &mut members, rest, rng)?;
    }
    Ok(Microbatch { members })
}

/// Independent microbatch draws.
pub fn build_minibatch(index: &CorpusIndex, cfg: &SamplerConfig, count: usize, rng: &mut Rng) -> Result<Vec<Microbatch>> {
    (0..count).map(|_| build_microbatch(index, cfg, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripletExample {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

pub fn build_triplets(index: &CorpusIndex, count: usize, rng: &mut Rng) -> Result<Vec<TripletExample>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let class = index.pick_pivot_class(rng)?;
        let pool = index.members(class);
        let pair = index::sample(rng, pool.len(), 2);
        let mut taken = Vec::with_capacity(1);
        index.draw_outside(Some(class), &mut taken, 1, rng)?;
        out.push(TripletExample { anchor: pool[pair.index(0)], positive: pool[pair.index(1)], negative: taken[0] });
    }
    Ok(out)
}
