//! Measurement protocols: tandem recognition accuracy against a phonebook,
//! same/different word discrimination AP (acoustic and cross-view), matching
//! of corrupted transcriptions, and distance tables between text embeddings.

use std::collections::HashSet;

use rand::Rng as _;

use crate::corpus::{format_transcription, ConfusionKernel, LexiconEntry, Transcription, Utterance};
use crate::encoder::{self, Input, ParameterSet};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::rng::Rng;
use crate::search::{EmbeddingIndex, Metric};

/// Acoustic embeddings of utterances.
pub fn embed_acoustic(f: &ParameterSet, utts: &[Utterance], mode: Parallelism) -> Result<Vec<Vec<f64>>> {
    par::try_map(mode, utts, |i, u| {
        let x = u.x.to_f64();
        encoder::encode(f, Input::Dense { data: &x, dim: u.x.dim() }).map_err(|e| Error::at(i, e))
    })
}

/// Text embeddings of transcriptions.
pub fn embed_text(g: &ParameterSet, prons: &[Transcription], mode: Parallelism) -> Result<Vec<Vec<f64>>> {
    let dim = g.config().input_dim;
    par::try_map(mode, prons, |i, p| encoder::encode(g, Input::OneHot { ids: p, dim }).map_err(|e| Error::at(i, e)))
}

/// Embeds every phonebook pronunciation through `g`; each entry keeps its
/// label and carries its pronunciation as the pronunciation id.
pub fn phonebook_index(g: &ParameterSet, phonebook: &[LexiconEntry], mode: Parallelism) -> Result<EmbeddingIndex> {
    let prons: Vec<Transcription> = phonebook.iter().map(|e| e.pron.clone()).collect();
    let emb = embed_text(g, &prons, mode)?;
    let mut index = EmbeddingIndex::new(g.config().embed_dim)?;
    for (e, v) in phonebook.iter().zip(&emb) {
        index.add(&e.label, &format_transcription(&e.pron), v)?;
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Classifies query embeddings against `index`; a query is correct when the
/// winning entry carries its reference label.
pub fn classify(index: &EmbeddingIndex, queries: &[Vec<f64>], references: &[String], metric: Metric) -> Result<Accuracy> {
    if queries.len() != references.len() {
        return Err(Error::CountMismatch { left: queries.len(), right: references.len() });
    }
    let labels: HashSet<&str> = (0..index.len()).map(|i| index.label(i)).collect();
    if let Some(r) = references.iter().find(|r| !labels.contains(r.as_str())) {
        return Err(Error::LabelNotInPhonebook(r.clone()));
    }
    let hits = index.batch_nearest(queries, metric)?;
    let correct = hits.iter().zip(references).filter(|(m, r)| index.label(m.entry) == r.as_str()).count();
    Ok(Accuracy { correct, total: queries.len() })
}

/// Tandem recognition: utterances through `f`, phonebook through `g`,
/// nearest-neighbor decision.
pub fn eval_recognition(
    f: &ParameterSet,
    g: &ParameterSet,
    tests: &[Utterance],
    references: &[String],
    phonebook: &[LexiconEntry],
    metric: Metric,
    mode: Parallelism,
) -> Result<Accuracy> {
    if f.config().embed_dim != g.config().embed_dim {
        return Err(Error::DimensionMismatch { expected: f.config().embed_dim, got: g.config().embed_dim });
    }
    let index = phonebook_index(g, phonebook, mode)?;
    let queries = embed_acoustic(f, tests, mode)?;
    classify(&index, &queries, references, metric)
}

/// Recognition against the phonebook padded with the first `size` entries of
/// `pad_pool`, for each requested size.
#[allow(clippy::too_many_arguments)]
pub fn eval_padded_recognition(
    f: &ParameterSet,
    g: &ParameterSet,
    tests: &[Utterance],
    references: &[String],
    phonebook: &[LexiconEntry],
    pad_pool: &[LexiconEntry],
    sizes: &[usize],
    metric: Metric,
    mode: Parallelism,
) -> Result<Vec<(usize, Accuracy)>> {
    if let Some(&s) = sizes.iter().find(|&&s| s > pad_pool.len()) {
        return Err(Error::InvalidArgument(format!("pad size {s} exceeds pool of {}", pad_pool.len())));
    }
    let queries = embed_acoustic(f, tests, mode)?;
    let base = phonebook_index(g, phonebook, mode)?;
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let pad_emb = embed_text(g, &pad_pool[..largest].iter().map(|e| e.pron.clone()).collect::<Vec<_>>(), mode)?;
    sizes
        .iter()
        .map(|&size| {
            let mut index = base.clone();
            for (e, v) in pad_pool[..size].iter().zip(&pad_emb) {
                index.add(&e.label, &format_transcription(&e.pron), v)?;
            }
            Ok((size, classify(&index, &queries, references, metric)?))
        })
        .collect()
}

/// Area under the precision-recall curve of pairs ranked by ascending
/// distance; equal distances keep input order.
pub fn average_precision(scored: &[(f64, bool)]) -> Result<f64> {
    let positives = scored.iter().filter(|s| s.1).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    if let Some(s) = scored.iter().find(|s| s.0.is_nan()) {
        return Err(Error::NonFinite(format!("pair distance {}", s.0)));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if scored[i].1 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

pub fn pair_distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    match metric {
        Metric::L2 => Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
        Metric::Cosine => {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
        }
    }
}

/// `(i, j, same)` for every unordered pair `i < j`.
pub fn all_pairs<T: PartialEq>(labels: &[T]) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::with_capacity(labels.len() * labels.len().saturating_sub(1) / 2);
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            out.push((i, j, labels[i] == labels[j]));
        }
    }
    out
}

/// AP of same/different decisions on pairs of embeddings `(a[i], b[j])`.
pub fn pairs_ap(a: &[Vec<f64>], b: &[Vec<f64>], pairs: &[(usize, usize, bool)], metric: Metric) -> Result<f64> {
    let scored: Vec<(f64, bool)> =
        pairs.iter().map(|&(i, j, same)| Ok((pair_distance(&a[i], &b[j], metric)?, same))).collect::<Result<_>>()?;
    average_precision(&scored)
}

/// Acoustic word discrimination over all utterance pairs.
pub fn eval_discrimination_ap(f: &ParameterSet, utts: &[Utterance], metric: Metric, mode: Parallelism) -> Result<f64> {
    let emb = embed_acoustic(f, utts, mode)?;
    let labels: Vec<&Transcription> = utts.iter().map(|u| &u.y).collect();
    pairs_ap(&emb, &emb, &all_pairs(&labels), metric)
}

/// Cross-view discrimination: every utterance (through `f`) against every
/// distinct transcription in the set (through `g`).
pub fn eval_cross_view_ap(
    f: &ParameterSet,
    g: &ParameterSet,
    utts: &[Utterance],
    metric: Metric,
    mode: Parallelism,
) -> Result<f64> {
    let mut prons: Vec<Transcription> = Vec::new();
    for u in utts {
        if !prons.contains(&u.y) {
            prons.push(u.y.clone());
        }
    }
    let fa = embed_acoustic(f, utts, mode)?;
    let gb = embed_text(g, &prons, mode)?;
    let mut pairs = Vec::with_capacity(utts.len() * prons.len());
    for (i, u) in utts.iter().enumerate() {
        for (j, p) in prons.iter().enumerate() {
            pairs.push((i, j, u.y == *p));
        }
    }
    pairs_ap(&fa, &gb, &pairs, metric)
}

/// Applies, independently at each position with probability `edit_rate`, one
/// of substitution, insertion or deletion (equally likely). Substitutes are
/// drawn from the off-diagonal of the phone's kernel row, so confusable
/// partners dominate; inserted phones are uniform. Never returns an empty
/// transcription.
pub fn corrupt_pron(pron: &[u16], edit_rate: f64, kernel: &ConfusionKernel, rng: &mut Rng) -> Result<Transcription> {
    if !(0.0..=1.0).contains(&edit_rate) {
        return Err(Error::InvalidArgument(format!("edit rate {edit_rate} outside [0, 1]")));
    }
    let dim = kernel.dim();
    let mut out = Vec::with_capacity(pron.len() + 2);
    for &p in pron {
        if edit_rate == 0.0 || rng.random::<f64>() >= edit_rate {
            out.push(p);
            continue;
        }
        match rng.random_range(0..3) {
            0 => {
                let row = kernel.row(p as usize);
                let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != p as usize).map(|(_, v)| v).sum();
                let mut u = rng.random::<f64>() * off;
                let mut pick = (p as usize + 1) % dim;
                for (j, &v) in row.iter().enumerate() {
                    if j == p as usize || v == 0.0 {
                        continue;
                    }
                    pick = j;
                    if u < v {
                        break;
                    }
                    u -= v;
                }
                out.push(pick as u16);
            }
            1 => {
                out.push(p);
                out.push(rng.random_range(0..dim) as u16);
            }
            _ => {}
        }
    }
    if out.is_empty() {
        out.push(pron[0]);
    }
    Ok(out)
}

/// Matches corrupted reference transcriptions (through `g`) against the
/// phonebook.
#[allow(clippy::too_many_arguments)]
pub fn eval_noisy_text_match(
    g: &ParameterSet,
    phonebook: &[LexiconEntry],
    references: &[LexiconEntry],
    edit_rate: f64,
    kernel: &ConfusionKernel,
    rng: &mut Rng,
    metric: Metric,
    mode: Parallelism,
) -> Result<Accuracy> {
    let noisy: Vec<Transcription> =
        references.iter().map(|r| corrupt_pron(&r.pron, edit_rate, kernel, rng)).collect::<Result<_>>()?;
    let index = phonebook_index(g, phonebook, mode)?;
    let queries = embed_text(g, &noisy, mode)?;
    let labels: Vec<String> = references.iter().map(|r| r.label.clone()).collect();
    classify(&index, &queries, &labels, metric)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub a: Transcription,
    pub b: Transcription,
    pub distance: f64,
    pub squared: f64,
}

/// Euclidean (and squared) distances between text embeddings of each pair.
pub fn distance_table(g: &ParameterSet, pairs: &[(Transcription, Transcription)], mode: Parallelism) -> Result<Vec<DistanceRow>> {
    let flat: Vec<Transcription> = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    let emb = embed_text(g, &flat, mode)?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let squared = pair_distance(&emb[2 * k], &emb[2 * k + 1], Metric::L2).expect("same encoder");
            DistanceRow { a: a.clone(), b: b.clone(), distance: squared.sqrt(), squared }
        })
        .collect())
}

pub fn format_distance_table(rows: &[DistanceRow]) -> String {
    let mut out = String::from("a\tb\tdistance\tsquared\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\n",
            format_transcription(&r.a),
            format_transcription(&r.b),
            r.distance,
            r.squared
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusabilityTriple {
    pub word: Transcription,
    /// `word` with one phone replaced by its confusable partner.
    pub confusable: Transcription,
    /// `word` with the same phone replaced by a phone it is not paired with.
    pub distinct: Transcription,
}

/// Samples triples from `words`, each substituting one position whose phone
/// has a confusable partner in `kernel`.
pub fn confusability_triples(
    words: &[Transcription],
    kernel: &ConfusionKernel,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<ConfusabilityTriple>> {
    let eligible: Vec<(usize, usize)> = words
        .iter()
        .enumerate()
        .flat_map(|(w, p)| p.iter().enumerate().filter(|(_, &ph)| !kernel.partners(ph as usize).is_empty()).map(move |(m, _)| (w, m)))
        .collect();
    if eligible.is_empty() && count > 0 {
        return Err(Error::InvalidArgument("no word contains a phone with a confusable partner".into()));
    }
    let dim = kernel.dim();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (w, m) = eligible[rng.random_range(0..eligible.len())];
        let word = words[w].clone();
        let phone = word[m] as usize;
        let partners = kernel.partners(phone);
        let near = partners[rng.random_range(0..partners.len())];
        let far = loop {
            let j = rng.random_range(0..dim);
            if j != phone && !partners.contains(&j) {
                break j;
            }
        };
        let mut confusable = word.clone();
        confusable[m] = near as u16;
        let mut distinct = word.clone();
        distinct[m] = far as u16;
        out.push(ConfusabilityTriple { word, confusable, distinct });
    }
    Ok(out)
}

/// Fraction of triples with `‖g(w) − g(confusable)‖ < ‖g(w) − g(distinct)‖`.
pub fn confusability_ordering(g: &ParameterSet, triples: &[ConfusabilityTriple], mode: Parallelism) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("no triples".into()));
    }
    let flat: Vec<Transcription> =
        triples.iter().flat_map(|t| [t.word.clone(), t.confusable.clone(), t.distinct.clone()]).collect();
    let emb = embed_text(g, &flat, mode)?;
    let ok = (0..triples.len())
        .filter(|&k| {
            let near = pair_distance(&emb[3 * k], &emb[3 * k + 1], Metric::L2).unwrap();
            let far = pair_distance(&emb[3 * k], &emb[3 * k + 2], Metric::L2).unwrap();
            near < far
        })
        .count();
    Ok(ok as f64 / triples.len() as f64)
}

/// `metric,config,value` lines with a header.
pub fn format_results(rows: &[(String, String, f64)]) -> String {
    let mut out = String::from("metric,config,value\n");
    for (m, c, v) in rows {
        out.push_str(&format!("{m},{c},{v}\n"));
    }
    out
}
