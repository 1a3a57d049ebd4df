use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{ConfusionKernel, Lexicon, LexiconEntry, PhoneInventory, Transcription};
use crate::error::{Error, Result};
use crate::rng;

/// Knobs for the synthetic phonetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub phones: usize,
    pub silence: bool,
    /// Number of disjoint confusable phone pairs.
    pub confusable_pairs: usize,
    pub confusion_strength: f64,
    pub self_mass: f64,
    pub lexicon_size: usize,
    /// Inclusive phones-per-pronunciation range.
    pub pron_len: (usize, usize),
    /// Share of entries built as a confusable one-phone substitution of an
    /// earlier entry (a new word).
    pub minimal_pair_fraction: f64,
    /// Share of entries that are an alternative pronunciation of an earlier
    /// label.
    pub alt_pron_fraction: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            phones: 50,
            silence: true,
            confusable_pairs: 15,
            confusion_strength: 0.3,
            self_mass: 0.6,
            lexicon_size: 300,
            pron_len: (3, 8),
            minimal_pair_fraction: 0.3,
            alt_pron_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub inventory: PhoneInventory,
    pub kernel: ConfusionKernel,
    pub pairs: Vec<(usize, usize)>,
    pub lexicon: Lexicon,
}

impl World {
    pub fn generate(cfg: &WorldConfig) -> Result<World> {
        let inventory = PhoneInventory::new(cfg.phones, cfg.silence)?;
        if 2 * cfg.confusable_pairs > cfg.phones {
            return Err(Error::InvalidArgument(format!(
                "{} disjoint pairs need {} phones",
                cfg.confusable_pairs,
                2 * cfg.confusable_pairs
            )));
        }
        let (lo, hi) = cfg.pron_len;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidArgument(format!("pron_len [{lo}, {hi}]")));
        }
        let mut krng = rng::stream(cfg.seed, rng::KERNEL, 0);
        let mut phones: Vec<usize> = (0..cfg.phones).collect();
        phones.shuffle(&mut krng);
        let pairs: Vec<(usize, usize)> = phones.chunks(2).take(cfg.confusable_pairs).map(|c| (c[0], c[1])).collect();
        let decl: Vec<(usize, usize, f64)> = pairs.iter().map(|&(a, b)| (a, b, cfg.confusion_strength)).collect();
        let kernel = ConfusionKernel::build(cfg.phones, &decl, cfg.self_mass)?;

        let mut partner = vec![None; cfg.phones];
        for &(a, b) in &pairs {
            partner[a] = Some(b);
            partner[b] = Some(a);
        }

        let mut lrng = rng::stream(cfg.seed, rng::LEXICON, 0);
        let mut entries: Vec<LexiconEntry> = Vec::with_capacity(cfg.lexicon_size);
        let mut used: HashSet<Transcription> = HashSet::new();
        let mut next_label = 0usize;
        let mut attempts = 0usize;
        while entries.len() < cfg.lexicon_size {
            attempts += 1;
            if attempts > cfg.lexicon_size * 1000 {
                return Err(Error::InvalidArgument("could not fill lexicon with distinct pronunciations".into()));
            }
            let roll: f64 = lrng.random();
            let (label, pron) = if !entries.is_empty() && roll < cfg.minimal_pair_fraction {
                let base = &entries[lrng.random_range(0..entries.len())].pron;
                let slots: Vec<usize> = (0..base.len()).filter(|&i| partner[base[i] as usize].is_some()).collect();
                if slots.is_empty() {
                    continue;
                }
                let at = slots[lrng.random_range(0..slots.len())];
                let mut pron = base.clone();
                pron[at] = partner[base[at] as usize].unwrap() as u16;
                (None, pron)
            } else if !entries.is_empty() && roll < cfg.minimal_pair_fraction + cfg.alt_pron_fraction {
                let base = entries[lrng.random_range(0..entries.len())].clone();
                let mut pron = base.pron.clone();
                let at = lrng.random_range(0..pron.len());
                pron[at] = lrng.random_range(0..cfg.phones) as u16;
                (Some(base.label), pron)
            } else {
                let len = lrng.random_range(lo..=hi);
                (None, (0..len).map(|_| lrng.random_range(0..cfg.phones) as u16).collect())
            };
            if !used.insert(pron.clone()) {
                continue;
            }
            let label = label.unwrap_or_else(|| {
                next_label += 1;
                format!("w{:04}", next_label - 1)
            });
            entries.push(LexiconEntry { label, pron });
        }
        let lexicon = Lexicon::new(entries, cfg.phones)?;
        Ok(World { inventory, kernel, pairs, lexicon })
    }

    /// Confusable partner of a phone, if it has one.
    pub fn partner(&self, phone: usize) -> Option<usize> {
        self.pairs.iter().find_map(|&(a, b)| {
            if a == phone {
                Some(b)
            } else if b == phone {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Random pronunciation not present in the lexicon.
    pub fn novel_pron(&self, len: (usize, usize), rng: &mut rng::Rng) -> Transcription {
        loop {
            let n = rng.random_range(len.0..=len.1);
            let pron: Transcription = (0..n).map(|_| rng.random_range(0..self.inventory.size) as u16).collect();
            if self.lexicon.label_of(&pron).is_none() {
                return pron;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = WorldConfig { lexicon_size: 120, ..WorldConfig::default() };
        let a = World::generate(&cfg).unwrap();
        let b = World::generate(&cfg).unwrap();
        assert_eq!(a.lexicon, b.lexicon);
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.lexicon.len(), 120);
        assert_eq!(a.pairs.len(), 15);
    }

    #[test]
    fn contains_minimal_pairs_and_alt_prons() {
        let w = World::generate(&WorldConfig::default()).unwrap();
        let entries = w.lexicon.entries();
        let labels: HashSet<&str> = entries.iter().map(|e| e.label.as_str()).collect();
        assert!(labels.len() < entries.len(), "expected some multi-pronunciation labels");
        let minimal = entries.iter().filter(|e| {
            entries.iter().any(|o| {
                o.pron.len() == e.pron.len() && {
                    let diff: Vec<usize> = (0..e.pron.len()).filter(|&i| e.pron[i] != o.pron[i]).collect();
                    diff.len() == 1 && w.partner(e.pron[diff[0]] as usize) == Some(o.pron[diff[0]] as usize)
                }
            })
        });
        assert!(minimal.count() > 30);
    }

    #[test]
    fn too_many_pairs_rejected() {
        let cfg = WorldConfig { phones: 10, confusable_pairs: 6, ..WorldConfig::default() };
        assert!(World::generate(&cfg).is_err());
    }
}
