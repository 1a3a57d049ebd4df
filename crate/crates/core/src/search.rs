//! Exact nearest-neighbor classification over an updatable vocabulary of
//! embeddings.
//!
//! Vectors are stored as f32 in one contiguous row-major matrix; distances
//! are accumulated in f64. Ties go to the entry inserted first, and scans
//! split the entry range into contiguous partitions whose minima are reduced
//! with the same `(distance, position)` order, so results never depend on how
//! many workers ran.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};

pub const INDEX_MAGIC: &str = "ANEG";
const VERSION: u8 = 1;
/// Entries per cache block in batched scans.
const BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Squared Euclidean distance.
    #[default]
    L2,
    /// `1 − cos`; zero-norm entries sit at distance 1 from every query.
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(Metric::L2),
            "cosine" => Some(Metric::Cosine),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Position of the entry in insertion order.
    pub entry: usize,
    pub distance: f64,
}

impl Match {
    fn key_cmp(&self, other: &Match) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.entry.cmp(&other.entry))
    }
}

// Max-heap ordering on (distance, entry) so the worst kept match is on top.
#[derive(Debug, Clone, Copy)]
struct Worst(Match);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    labels: Vec<String>,
    pron_ids: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

fn entry_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

#[inline]
fn sq_l2(q: &[f64], e: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = q.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            let d = q[c * 4 + k] - f64::from(e[c * 4 + k]);
            acc[k] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..q.len() {
        let d = q[k] - f64::from(e[k]);
        s += d * d;
    }
    s
}

#[inline]
fn dot(q: &[f64], e: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = q.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += q[c * 4 + k] * f64::from(e[c * 4 + k]);
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..q.len() {
        s += q[k] * f64::from(e[k]);
    }
    s
}

/// A query validated and prepared for one metric.
struct Prepared<'a> {
    q: &'a [f64],
    norm: f64,
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("index dimension must be positive".into()));
        }
        Ok(EmbeddingIndex { dim, labels: Vec::new(), pron_ids: Vec::new(), data: Vec::new(), norms: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, entry: usize) -> &str {
        &self.labels[entry]
    }

    /// Empty when the entry has no pronunciation id.
    pub fn pron_id(&self, entry: usize) -> &str {
        &self.pron_ids[entry]
    }

    pub fn vector(&self, entry: usize) -> &[f32] {
        &self.data[entry * self.dim..(entry + 1) * self.dim]
    }

    /// Appends an entry; the vector is stored at f32 precision.
    pub fn add(&mut self, label: &str, pron_id: &str, vector: &[f64]) -> Result<()> {
        let v: Vec<f32> = vector.iter().map(|&x| x as f32).collect();
        self.add_f32(label, pron_id, &v)
    }

    pub fn add_f32(&mut self, label: &str, pron_id: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector for {label}")));
        }
        self.labels.push(label.to_string());
        self.pron_ids.push(pron_id.to_string());
        self.data.extend_from_slice(vector);
        self.norms.push(entry_norm(vector));
        Ok(())
    }

    /// Removes every entry carrying `label`, keeping the others in order.
    /// Returns how many were removed.
    pub fn remove(&mut self, label: &str) -> Result<usize> {
        let keep: Vec<bool> = self.labels.iter().map(|l| l != label).collect();
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        let dim = self.dim;
        let mut row = 0;
        self.data.retain(|_| {
            let k = keep[row / dim];
            row += 1;
            k
        });
        let mut it = keep.iter();
        self.labels.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.pron_ids.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.norms.retain(|_| *it.next().unwrap());
        Ok(removed)
    }

    fn prepare<'a>(&self, q: &'a [f64], metric: Metric) -> Result<Prepared<'a>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: q.len() });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query".into()));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if metric == Metric::Cosine && norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Prepared { q, norm })
    }

    #[inline]
    fn distance(&self, p: &Prepared<'_>, entry: usize, metric: Metric) -> f64 {
        let e = self.vector(entry);
        match metric {
            Metric::L2 => sq_l2(p.q, e),
            Metric::Cosine => {
                let n = self.norms[entry];
                if n == 0.0 {
                    1.0
                } else {
                    1.0 - dot(p.q, e) / (p.norm * n)
                }
            }
        }
    }

    /// Distance from `query` to one entry under `metric`.
    pub fn distance_to(&self, query: &[f64], entry: usize, metric: Metric) -> Result<f64> {
        let p = self.prepare(query, metric)?;
        Ok(self.distance(&p, entry, metric))
    }

    fn partitions(&self, parts: usize) -> Vec<(usize, usize)> {
        let parts = parts.clamp(1, self.len().max(1));
        let size = self.len().div_ceil(parts);
        (0..self.len()).step_by(size.max(1)).map(|s| (s, (s + size).min(self.len()))).collect()
    }

    pub fn nearest(&self, query: &[f64], metric: Metric) -> Result<Match> {
        Ok(self.top_k(query, 1, metric)?[0])
    }

    /// The `k` closest entries, ascending by distance with ties by insertion
    /// order. Returns all entries when `k` exceeds the index size.
    pub fn top_k(&self, query: &[f64], k: usize, metric: Metric) -> Result<Vec<Match>> {
        self.top_k_with(query, k, metric, par::current_workers(), Parallelism::Parallel)
    }

    /// [`top_k`](Self::top_k) with an explicit partition count and
    /// execution mode.
    pub fn top_k_with(&self, query: &[f64], k: usize, metric: Metric, parts: usize, mode: Parallelism) -> Result<Vec<Match>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let p = self.prepare(query, metric)?;
        let ranges = self.partitions(parts);
        let partial = par::map(mode, &ranges, |&(s, e)| {
            let mut heap = BinaryHeap::with_capacity(k + 1);
            for i in s..e {
                let m = Match { entry: i, distance: self.distance(&p, i, metric) };
                if heap.len() < k {
                    heap.push(Worst(m));
                } else if m.key_cmp(&heap.peek().unwrap().0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(m));
                }
            }
            heap.into_vec()
        });
        let mut all: Vec<Match> = partial.into_iter().flatten().map(|w| w.0).collect();
        all.sort_by(Match::key_cmp);
        all.truncate(k);
        Ok(all)
    }

    /// Nearest entry for every query.
    pub fn batch_nearest(&self, queries: &[Vec<f64>], metric: Metric) -> Result<Vec<Match>> {
        self.batch_nearest_with(queries, metric, par::current_workers(), Parallelism::Parallel)
    }

    /// Batched scan: entries are split into `parts` contiguous partitions,
    /// each streamed once in cache-sized blocks against all queries, and the
    /// per-partition minima reduced in `(distance, position)` order.
    pub fn batch_nearest_with(
        &self,
        queries: &[Vec<f64>],
        metric: Metric,
        parts: usize,
        mode: Parallelism,
    ) -> Result<Vec<Match>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let prepared: Vec<Prepared<'_>> = queries.iter().map(|q| self.prepare(q, metric)).collect::<Result<_>>()?;
        let ranges = self.partitions(parts);
        let partial = par::map(mode, &ranges, |&(s, e)| {
            let mut best = vec![Match { entry: usize::MAX, distance: f64::INFINITY }; prepared.len()];
            let mut block = s;
            while block < e {
                let end = (block + BLOCK).min(e);
                for (b, p) in best.iter_mut().zip(&prepared) {
                    for i in block..end {
                        let d = self.distance(p, i, metric);
                        // entries arrive in ascending order, so strict < keeps the earliest tie
                        if d < b.distance {
                            *b = Match { entry: i, distance: d };
                        }
                    }
                }
                block = end;
            }
            best
        });
        let mut out = partial[0].clone();
        for part in &partial[1..] {
            for (o, m) in out.iter_mut().zip(part) {
                if m.key_cmp(o) == Ordering::Less {
                    *o = *m;
                }
            }
        }
        Ok(out)
    }
}

pub fn encode_index(index: &EmbeddingIndex) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + index.len() * (4 * index.dim + 16));
    out.extend_from_slice(INDEX_MAGIC.as_bytes());
    out.push(VERSION);
    out.extend_from_slice(&binio::to_u32(index.len(), "entry count")?.to_le_bytes());
    out.extend_from_slice(&binio::to_u32(index.dim, "dimension")?.to_le_bytes());
    for i in 0..index.len() {
        binio::put_str_u16(&mut out, &index.labels[i])?;
        binio::put_str_u16(&mut out, &index.pron_ids[i])?;
        for v in index.vector(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_index(buf: &[u8]) -> Result<EmbeddingIndex> {
    let mut r = Reader::new(buf);
    r.expect_magic(INDEX_MAGIC)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut index = EmbeddingIndex::new(dim)?;
    let mut v = vec![0f32; dim];
    for _ in 0..count {
        let label = r.str_u16()?;
        let pron = r.str_u16()?;
        r.ensure(dim, 4)?;
        for x in v.iter_mut() {
            *x = r.f32()?;
        }
        index.add_f32(&label, &pron, &v)?;
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed { what: "embedding index", line: 0, reason: "trailing bytes".into() });
    }
    Ok(index)
}

pub fn write_index(path: &Path, index: &EmbeddingIndex) -> Result<()> {
    std::fs::write(path, encode_index(index)?).map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path) -> Result<EmbeddingIndex> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&buf)
}
