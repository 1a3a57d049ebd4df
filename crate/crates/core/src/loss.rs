//! Training objectives and their closed-form gradients.
//!
//! Embeddings are passed as one `Vec<f64>` per sample and labels as
//! transcription-class indices: two samples are neighbors in the input space
//! exactly when their labels are equal.
//!
//! The neighbor-embedding loss compares the label-induced distribution
//! `p_ij = 1/c_i` (over the `c_i` other samples sharing `i`'s label) with the
//! softmax of negative squared distances `q_ij` through a KL divergence. Its
//! gradient is `∂L/∂f_i = Σ_j w_ij (f_i − f_j)` with pair weights
//! `w_ij = 2 (p_ij − q_ij + p_ji − q_ji)` over the rows that carry a
//! distribution, which is what [`ane_pair_weights`] returns.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AneMode {
    /// Only the pivot row (sample 0) contributes.
    Pivot,
    /// Every row with at least one positive contributes.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// `exp(−‖a−b‖²)`, bounded in (0, 1].
    ExpNegL2,
    /// `−‖a−b‖²`.
    NegL2,
    /// `aᵀb / (‖a‖‖b‖)`.
    Cosine,
}

impl Similarity {
    pub fn name(self) -> &'static str {
        match self {
            Similarity::ExpNegL2 => "exp-neg-l2",
            Similarity::NegL2 => "neg-l2",
            Similarity::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exp-neg-l2" => Some(Similarity::ExpNegL2),
            "neg-l2" => Some(Similarity::NegL2),
            "cosine" => Some(Similarity::Cosine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletConfig {
    pub margin: f64,
    pub similarity: Similarity,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig { margin: 0.15, similarity: Similarity::ExpNegL2 }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_batch(emb: &[Vec<f64>], labels: Option<&[usize]>) -> Result<usize> {
    if emb.len() < 2 {
        return Err(Error::InvalidArgument(format!("batch of {} < 2 samples", emb.len())));
    }
    if let Some(labels) = labels {
        if labels.len() != emb.len() {
            return Err(Error::CountMismatch { left: emb.len(), right: labels.len() });
        }
    }
    let dim = emb[0].len();
    for e in emb {
        if e.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.len() });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embeddings".into()));
        }
    }
    Ok(dim)
}

fn positives(labels: &[usize], i: usize) -> usize {
    labels.iter().enumerate().filter(|&(j, &l)| j != i && l == labels[i]).count()
}

/// Label-induced neighbor distribution of `pivot`: `1/c` on each of the `c`
/// other samples with the same label, 0 elsewhere (including the pivot).
pub fn input_neighbor_probs(labels: &[usize], pivot: usize) -> Result<Vec<f64>> {
    if pivot >= labels.len() {
        return Err(Error::InvalidArgument(format!("pivot {pivot} out of range")));
    }
    let c = positives(labels, pivot);
    if c == 0 {
        return Err(Error::DefunctMicrobatch);
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(j, &l)| if j != pivot && l == labels[pivot] { 1.0 / c as f64 } else { 0.0 })
        .collect())
}

/// Row `i` of the embedding-space neighbor distribution, with `q_ii = 0`.
pub fn induced_probs_row(emb: &[Vec<f64>], i: usize) -> Result<Vec<f64>> {
    check_batch(emb, None)?;
    Ok(induced_row(emb, i).0)
}

/// Full matrix of induced probabilities.
pub fn induced_probs(emb: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_batch(emb, None)?;
    Ok((0..emb.len()).map(|i| induced_row(emb, i).0).collect())
}

/// Returns `(q_i·, log Σ_{k≠i} exp(−d_ik), d_i·)`, stabilized by shifting
/// the logits by their maximum.
fn induced_row(emb: &[Vec<f64>], i: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let n = emb.len();
    let d: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { sq_dist(&emb[i], &emb[j]) }).collect();
    let max_logit = (0..n).filter(|&j| j != i).map(|j| -d[j]).fold(f64::NEG_INFINITY, f64::max);
    let mut q = vec![0.0; n];
    let mut z = 0.0;
    for j in (0..n).filter(|&j| j != i) {
        q[j] = (-d[j] - max_logit).exp();
        z += q[j];
    }
    q.iter_mut().for_each(|v| *v /= z);
    (q, max_logit + z.ln(), d)
}

fn rows_for(labels: &[usize], mode: AneMode) -> Result<Vec<usize>> {
    let rows: Vec<usize> = match mode {
        AneMode::Pivot => vec![0],
        AneMode::Full => (0..labels.len()).collect(),
    };
    let used: Vec<usize> = rows.into_iter().filter(|&i| positives(labels, i) > 0).collect();
    if used.is_empty() {
        return Err(Error::DefunctMicrobatch);
    }
    Ok(used)
}

/// KL divergence between label-induced and embedding-induced neighbor
/// distributions, summed over the rows selected by `mode`. Terms with
/// `p_ij = 0` contribute nothing.
pub fn ane_loss(emb: &[Vec<f64>], labels: &[usize], mode: AneMode) -> Result<f64> {
    Ok(ane_loss_and_grad(emb, labels, mode)?.0)
}

pub fn ane_loss_grad(emb: &[Vec<f64>], labels: &[usize], mode: AneMode) -> Result<Vec<Vec<f64>>> {
    Ok(ane_loss_and_grad(emb, labels, mode)?.1)
}

fn weighted_pull(emb: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = emb.len();
    let dim = emb[0].len();
    (0..n)
        .map(|i| {
            let mut g = vec![0.0; dim];
            for j in 0..n {
                if j != i && w[i][j] != 0.0 {
                    for k in 0..dim {
                        g[k] += w[i][j] * (emb[i][k] - emb[j][k]);
                    }
                }
            }
            g
        })
        .collect()
}

/// Loss and per-embedding gradients in one pass.
pub fn ane_loss_and_grad(emb: &[Vec<f64>], labels: &[usize], mode: AneMode) -> Result<(f64, Vec<Vec<f64>>)> {
    check_batch(emb, Some(labels))?;
    let rows = rows_for(labels, mode)?;
    let n = emb.len();
    let mut loss = 0.0;
    // a[i][j] = p_ij − q_ij on used rows
    let mut a = vec![vec![0.0; n]; n];
    for &i in &rows {
        let p = input_neighbor_probs(labels, i)?;
        let (q, lse, d) = induced_row(emb, i);
        for j in 0..n {
            if p[j] > 0.0 {
                loss += p[j] * (p[j].ln() + d[j] + lse);
            }
            a[i][j] = p[j] - q[j];
        }
    }
    let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 2.0 * (a[i][j] + a[j][i])).collect()).collect();
    Ok((loss.max(0.0), weighted_pull(emb, &w)))
}

/// Full-mode pair weights `w_ij` with `∂L/∂f_i = Σ_j w_ij (f_i − f_j)`.
///
/// When every sample has a positive, a same-label pair gets
/// `2 (1/c_i − q_ij + 1/c_j − q_ji)` and a different-label pair
/// `−2 (q_ij + q_ji)`.
pub fn ane_pair_weights(emb: &[Vec<f64>], labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_batch(emb, Some(labels))?;
    let rows = rows_for(labels, AneMode::Full)?;
    let n = emb.len();
    let mut a = vec![vec![0.0; n]; n];
    for &i in &rows {
        let p = input_neighbor_probs(labels, i)?;
        let q = induced_row(emb, i).0;
        for j in 0..n {
            a[i][j] = p[j] - q[j];
        }
    }
    Ok((0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 2.0 * (a[i][j] + a[j][i]) }).collect()).collect())
}

/// Gradient of the KL loss without the softmax normalizers:
/// `4 Σ_j (f_i − f_j) p_ij` with binary `p_ij` (1 for a same-label pair).
/// Kept for comparison only; training never uses it.
pub fn ane_grad_unnormalized(emb: &[Vec<f64>], labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_batch(emb, Some(labels))?;
    let n = emb.len();
    let w: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i != j && labels[i] == labels[j] { 4.0 } else { 0.0 }).collect())
        .collect();
    Ok(weighted_pull(emb, &w))
}

pub fn similarity(a: &[f64], b: &[f64], kind: Similarity) -> Result<f64> {
    Ok(similarity_grad(a, b, kind)?.0)
}

/// Similarity value with its gradients w.r.t. `a` and `b`.
pub fn similarity_grad(a: &[f64], b: &[f64], kind: Similarity) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    match kind {
        Similarity::ExpNegL2 => {
            let s = (-sq_dist(a, b)).exp();
            let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| -2.0 * (x - y) * s).collect();
            let gb = ga.iter().map(|v| -v).collect();
            Ok((s, ga, gb))
        }
        Similarity::NegL2 => {
            let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| -2.0 * (x - y)).collect();
            let gb = ga.iter().map(|v| -v).collect();
            Ok((-sq_dist(a, b), ga, gb))
        }
        Similarity::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let s = dot(a, b) / (na * nb);
            let ga = a.iter().zip(b).map(|(x, y)| y / (na * nb) - s * x / (na * na)).collect();
            let gb = a.iter().zip(b).map(|(x, y)| x / (na * nb) - s * y / (nb * nb)).collect();
            Ok((s, ga, gb))
        }
    }
}

/// `max{0, α − Sim(anchor, pos) + Sim(anchor, neg)}`.
pub fn triplet_hinge_loss(anchor: &[f64], pos: &[f64], neg: &[f64], cfg: &TripletConfig) -> Result<f64> {
    Ok(triplet_hinge_grad(anchor, pos, neg, cfg)?.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Hinge loss with gradients; inactive triplets (argument ≤ 0) get zero
/// gradients.
pub fn triplet_hinge_grad(anchor: &[f64], pos: &[f64], neg: &[f64], cfg: &TripletConfig) -> Result<TripletGrad> {
    let (sp, ga_p, gp) = similarity_grad(anchor, pos, cfg.similarity)?;
    let (sn, ga_n, gn) = similarity_grad(anchor, neg, cfg.similarity)?;
    let arg = cfg.margin - sp + sn;
    if arg <= 0.0 {
        let z = vec![0.0; anchor.len()];
        return Ok(TripletGrad { loss: 0.0, anchor: z.clone(), positive: z.clone(), negative: z });
    }
    Ok(TripletGrad {
        loss: arg,
        anchor: ga_p.iter().zip(&ga_n).map(|(p, n)| n - p).collect(),
        positive: gp.iter().map(|v| -v).collect(),
        negative: gn,
    })
}

fn sign(labels: &[usize], i: usize, j: usize) -> f64 {
    if labels[i] == labels[j] {
        -1.0
    } else {
        1.0
    }
}

/// `Σ_{i≠j} s_ij Sim(f_i, f_j)` with `s_ij = −1` for same-label pairs and
/// `+1` otherwise.
pub fn batch_triplet_loss(emb: &[Vec<f64>], labels: &[usize], kind: Similarity) -> Result<f64> {
    check_batch(emb, Some(labels))?;
    let n = emb.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            total += sign(labels, i, j) * similarity(&emb[i], &emb[j], kind)?;
        }
    }
    Ok(total)
}

/// Pair weights of the bounded-L2 batch triplet gradient:
/// `4 q'_ij` for same-label pairs and `−4 q'_ij` otherwise, with
/// `q'_ij = exp(−‖f_i − f_j‖²)`.
pub fn batch_triplet_pair_weights(emb: &[Vec<f64>], labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_batch(emb, Some(labels))?;
    let n = emb.len();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { -4.0 * sign(labels, i, j) * (-sq_dist(&emb[i], &emb[j])).exp() })
                .collect()
        })
        .collect())
}

/// Closed-form gradient of [`batch_triplet_loss`] for each similarity.
pub fn batch_triplet_grad(emb: &[Vec<f64>], labels: &[usize], kind: Similarity) -> Result<Vec<Vec<f64>>> {
    check_batch(emb, Some(labels))?;
    let n = emb.len();
    match kind {
        Similarity::ExpNegL2 => Ok(weighted_pull(emb, &batch_triplet_pair_weights(emb, labels)?)),
        Similarity::NegL2 => {
            let w: Vec<Vec<f64>> =
                (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { -4.0 * sign(labels, i, j) }).collect()).collect();
            Ok(weighted_pull(emb, &w))
        }
        Similarity::Cosine => {
            let norms: Vec<f64> = emb.iter().map(|e| norm(e)).collect();
            if norms.contains(&0.0) {
                return Err(Error::ZeroNorm);
            }
            let dim = emb[0].len();
            Ok((0..n)
                .map(|i| {
                    let mut g = vec![0.0; dim];
                    for j in (0..n).filter(|&j| j != i) {
                        let q = dot(&emb[i], &emb[j]) / (norms[i] * norms[j]);
                        let s = sign(labels, i, j);
                        for k in 0..dim {
                            g[k] -= 2.0
                                * s
                                * (emb[i][k] * q / (norms[i] * norms[i]) - emb[j][k] / (norms[i] * norms[j]));
                        }
                    }
                    g
                })
                .collect())
        }
    }
}

fn check_pairs(g: &[Vec<f64>], f: &[Vec<f64>]) -> Result<()> {
    if g.len() != f.len() {
        return Err(Error::CountMismatch { left: g.len(), right: f.len() });
    }
    if g.is_empty() {
        return Err(Error::InvalidArgument("empty distillation batch".into()));
    }
    for (a, b) in g.iter().zip(f) {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), got: a.len() });
        }
    }
    Ok(())
}

/// Mean over pairs of `‖g_n − f_n‖²`.
pub fn mse_distill_loss(g: &[Vec<f64>], f: &[Vec<f64>]) -> Result<f64> {
    Ok(mse_distill_grad(g, f)?.0)
}

/// Loss and gradient w.r.t. each `g_n`.
pub fn mse_distill_grad(g: &[Vec<f64>], f: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_pairs(g, f)?;
    let n = g.len() as f64;
    let loss = g.iter().zip(f).map(|(a, b)| sq_dist(a, b)).sum::<f64>() / n;
    let grads = g.iter().zip(f).map(|(a, b)| a.iter().zip(b).map(|(x, y)| 2.0 * (x - y) / n).collect()).collect();
    Ok((loss, grads))
}

/// `(1/2N) Σ (1 − cos(g_n, f_n))`.
pub fn cosine_distill_loss(g: &[Vec<f64>], f: &[Vec<f64>]) -> Result<f64> {
    Ok(cosine_distill_grad(g, f)?.0)
}

pub fn cosine_distill_grad(g: &[Vec<f64>], f: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_pairs(g, f)?;
    let n = g.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(g.len());
    for (a, b) in g.iter().zip(f) {
        let (s, ga, _) = similarity_grad(a, b, Similarity::Cosine)?;
        loss += (1.0 - s) / (2.0 * n);
        grads.push(ga.iter().map(|v| -v / (2.0 * n)).collect());
    }
    Ok((loss, grads))
}
