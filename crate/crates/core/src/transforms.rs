//! Score-to-probability transformations.
//!
//! Everything here maps a [`ScoreVector`] (raw logits) to a [`Distribution`],
//! or truncates one distribution into another:
//!
//! | transform          | sparsity                        |
//! |--------------------|---------------------------------|
//! | softmax (+ temp.)  | dense                           |
//! | sparsemax          | exact zeros, data dependent     |
//! | α-entmax           | softmax at α=1, sparsemax at α=2 |
//! | top-k / nucleus    | truncation of an existing dist. |
//!
//! A [`Distribution`] stores only its support, so "exactly zero probability"
//! means "absent from the support".

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Probabilities below this after entmax thresholding are treated as exact zeros.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

/// Raw model scores (logits) over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest score; ties go to the lower id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A categorical distribution with an explicit, strictly increasing support.
///
/// Every stored probability is strictly positive and the stored
/// probabilities sum to one (within `1e-9`).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Vec<usize>,
    probs: Vec<f64>,
    vocab_size: usize,
}

impl Distribution {
    /// Validating constructor.
    pub fn new(support: Vec<usize>, probs: Vec<f64>, vocab_size: usize) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::LengthMismatch {
                left: support.len(),
                right: probs.len(),
            });
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution(
                "support ids must be unique and strictly increasing".into(),
            ));
        }
        if let Some(&id) = support.last().filter(|&&id| id >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "support probability {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            support,
            probs,
            vocab_size,
        })
    }

    /// Builds a distribution from dense non-negative weights: zero entries
    /// are dropped and the rest renormalized.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        Self::from_sparse_weights(
            weights
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, w)| *w > 0.0),
            weights.len(),
        )
    }

    pub fn one_hot(id: usize, vocab_size: usize) -> Result<Self> {
        if id >= vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        Ok(Self {
            support: vec![id],
            probs: vec![1.0],
            vocab_size,
        })
    }

    pub fn uniform(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::EmptyInput("vocabulary"));
        }
        let p = 1.0 / vocab_size as f64;
        Ok(Self {
            support: (0..vocab_size).collect(),
            probs: vec![p; vocab_size],
            vocab_size,
        })
    }

    /// `entries` must be in increasing id order with positive weights.
    fn from_sparse_weights(
        entries: impl Iterator<Item = (usize, f64)>,
        vocab_size: usize,
    ) -> Result<Self> {
        let (support, mut probs): (Vec<usize>, Vec<f64>) = entries.unzip();
        let total: f64 = probs.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(support, probs, vocab_size)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// `(id, probability)` pairs over the support, in id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability of `id`; zero when off-support (or out of range).
    pub fn prob(&self, id: usize) -> f64 {
        match self.support.binary_search(&id) {
            Ok(pos) => self.probs[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.vocab_size];
        for (id, p) in self.iter() {
            dense[id] = p;
        }
        dense
    }

    /// Support positions sorted by descending probability, ties to the lower id.
    fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.support.len()).collect();
        // Stable sort on ascending ids keeps lower ids first among ties.
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(Ordering::Equal)
        });
        order
    }

    fn restrict(&self, mut keep: Vec<usize>) -> Result<Self> {
        keep.sort_unstable();
        Self::from_sparse_weights(
            keep.into_iter()
                .map(|pos| (self.support[pos], self.probs[pos])),
            self.vocab_size,
        )
    }
}

/// Parameters of the α-entmax bisection solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntmaxParams {
    alpha: f64,
    tol: f64,
    max_iters: usize,
}

impl EntmaxParams {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_ITERS: usize = 100;

    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_solver(alpha, Self::DEFAULT_TOL, Self::DEFAULT_MAX_ITERS)
    }

    pub fn with_solver(alpha: f64, tol: f64, max_iters: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::param("alpha", format!("must be >= 1, got {alpha}")));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::param("tol", format!("must be > 0, got {tol}")));
        }
        if max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        Ok(Self {
            alpha,
            tol,
            max_iters,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }
}

/// Softmax at temperature `temperature`, computed after subtracting the max.
///
/// Entries that underflow to exactly zero are left out of the support.
pub fn softmax(z: &ScoreVector, temperature: f64) -> Result<Distribution> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::param(
            "temperature",
            format!("must be > 0, got {temperature}"),
        ));
    }
    let max = z.max();
    let weights: Vec<f64> = z
        .values()
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .collect();
    Distribution::from_weights(&weights)
}

/// Greedy decoding as a distribution: one-hot at the argmax.
pub fn argmax(z: &ScoreVector) -> Distribution {
    Distribution {
        support: vec![z.argmax()],
        probs: vec![1.0],
        vocab_size: z.len(),
    }
}

/// Tsallis α-entropy in nats (Shannon at α=1, Gini at α=2).
pub fn tsallis_entropy(p: &Distribution, alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::param("alpha", format!("must be >= 1, got {alpha}")));
    }
    Ok(tsallis_of_probs(p.probs(), alpha))
}

/// Same as [`tsallis_entropy`] on a raw probability slice; zero entries
/// contribute nothing.
pub(crate) fn tsallis_of_probs(probs: &[f64], alpha: f64) -> f64 {
    if alpha == 1.0 {
        -probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    } else if alpha == f64::INFINITY {
        0.0
    } else {
        let s: f64 = probs.iter().map(|&p| p - p.powf(alpha)).sum();
        s / (alpha * (alpha - 1.0))
    }
}

/// Euclidean projection of `z` onto the probability simplex (sort and threshold).
pub fn sparsemax(z: &ScoreVector) -> Result<Distribution> {
    let values = z.values();
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));

    let mut cumsum = 0.0;
    let mut support_len = 0;
    let mut support_sum = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (k as f64 + 1.0) * v > cumsum {
            support_len = k + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / support_len as f64;
    Distribution::from_sparse_weights(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, v - tau))
            .filter(|(_, w)| *w > 0.0),
        values.len(),
    )
}

/// α-entmax by bisection on the threshold.
///
/// With scaled scores `s = (α-1)·z`, the solution is
/// `p_i = [s_i - τ]₊^{1/(α-1)}` with τ chosen so the mass is one. The
/// bracket `[max(s) - 1, max(s)]` always contains that τ.
pub fn entmax(z: &ScoreVector, params: &EntmaxParams) -> Result<Distribution> {
    let alpha = params.alpha();
    if alpha == 1.0 {
        return softmax(z, 1.0);
    }
    let scale = alpha - 1.0;
    let exponent = 1.0 / scale;
    let scaled: Vec<f64> = z.values().iter().map(|&v| v * scale).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let power = |d: f64| -> f64 {
        if exponent == 1.0 {
            d
        } else if exponent == 2.0 {
            d * d
        } else {
            d.powf(exponent)
        }
    };
    let mass = |tau: f64| -> f64 {
        scaled
            .iter()
            .map(|&s| if s > tau { power(s - tau) } else { 0.0 })
            .sum()
    };

    let mut lo = max - 1.0;
    let mut hi = max;
    let mut tau = lo;
    let mut residual = mass(lo) - 1.0;
    let mut iterations = 0;
    while residual.abs() > params.tol() {
        if iterations == params.max_iters() {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;
        tau = 0.5 * (lo + hi);
        residual = mass(tau) - 1.0;
        if residual > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
    }

    let unnormalized: Vec<f64> = scaled
        .iter()
        .map(|&s| if s > tau { power(s - tau) } else { 0.0 })
        .collect();
    let total: f64 = unnormalized.iter().sum();
    Distribution::from_sparse_weights(
        unnormalized
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, w / total))
            .filter(|(_, p)| *p >= PRUNE_THRESHOLD),
        scaled.len(),
    )
}

/// Keeps the `k` most probable tokens (ties to the lower id) and renormalizes.
pub fn topk_truncate(p: &Distribution, k: usize) -> Result<Distribution> {
    if k == 0 || k > p.vocab_size() {
        return Err(Error::param(
            "k",
            format!("must be in [1, {}], got {k}", p.vocab_size()),
        ));
    }
    if k >= p.support_size() {
        return Ok(p.clone());
    }
    let mut ranked = p.ranked();
    ranked.truncate(k);
    p.restrict(ranked)
}

/// Keeps the smallest most-probable prefix whose mass reaches `top_p`
/// (the crossing token included) and renormalizes.
pub fn nucleus_truncate(p: &Distribution, top_p: f64) -> Result<Distribution> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(Error::param(
            "top_p",
            format!("must be in (0, 1], got {top_p}"),
        ));
    }
    let ranked = p.ranked();
    let mut cumulative = 0.0;
    let mut keep = ranked.len();
    for (n, &pos) in ranked.iter().enumerate() {
        cumulative += p.probs[pos];
        if cumulative >= top_p {
            keep = n + 1;
            break;
        }
    }
    if keep == ranked.len() {
        return Ok(p.clone());
    }
    let mut ranked = ranked;
    ranked.truncate(keep);
    p.restrict(ranked)
}
