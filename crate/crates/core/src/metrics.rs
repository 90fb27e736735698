//! Evaluation metrics for sparse and truncated language models.
//!
//! Perplexity is infinite as soon as one gold token falls off the support,
//! so next to it this module provides three bounded or smoothed alternatives:
//!
//! - ε-perplexity: perplexity after additive smoothing, with ε tuned by a
//!   one-dimensional projected-gradient solve ([`optimal_epsilon`]);
//! - sparsemax score: `p(gold) + H₂(p)`, always in `[0, 1]`;
//! - Jensen-Shannon divergence to the one-hot gold, in `[0, ln 2]`.
//!
//! Both ε-perplexity and JS depend on a distribution only through the gold
//! probability; the sparsemax score also looks at the rest of the mass.
//!
//! Repetition (`rep`/`wrep`), distinct-n and support-size statistics round
//! out the report. All logarithms are natural.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokens::TokenSequence;
use crate::transforms::{tsallis_of_probs, Distribution};

pub const DEFAULT_WINDOWS: [usize; 4] = [16, 32, 128, 512];
pub const DEFAULT_DISTINCT_NS: [usize; 4] = [1, 2, 3, 4];

/// Model distribution at one position together with the gold token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEvalRecord {
    gold: usize,
    dist: Distribution,
}

impl TokenEvalRecord {
    pub fn new(gold: usize, dist: Distribution) -> Result<Self> {
        if gold >= dist.vocab_size() {
            return Err(Error::TokenOutOfRange {
                id: gold,
                vocab_size: dist.vocab_size(),
            });
        }
        Ok(Self { gold, dist })
    }

    pub fn gold(&self) -> usize {
        self.gold
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn gold_prob(&self) -> f64 {
        self.dist.prob(self.gold)
    }

    pub fn vocab_size(&self) -> usize {
        self.dist.vocab_size()
    }
}

fn non_empty(records: &[TokenEvalRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::EmptyInput("evaluation records"))
    } else {
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// `exp` of the mean negative log gold probability; `+inf` if any gold
/// token has zero probability.
pub fn perplexity(records: &[TokenEvalRecord]) -> Result<f64> {
    non_empty(records)?;
    if records.iter().any(|r| r.gold_prob() == 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(mean(records.iter().map(|r| -r.gold_prob().ln())).exp())
}

/// Perplexity of the additively smoothed distribution `(p + ε) / (1 + ε|V|)`.
pub fn epsilon_perplexity(records: &[TokenEvalRecord], epsilon: f64) -> Result<f64> {
    non_empty(records)?;
    if !(epsilon >= 0.0) {
        return Err(Error::param(
            "epsilon",
            format!("must be >= 0, got {epsilon}"),
        ));
    }
    if epsilon == 0.0 {
        return perplexity(records);
    }
    if epsilon.is_infinite() {
        // Limit of full smoothing: the uniform distribution.
        return Ok(mean(records.iter().map(|r| (r.vocab_size() as f64).ln())).exp());
    }
    Ok(mean(records.iter().map(|r| {
        let v = r.vocab_size() as f64;
        -((r.gold_prob() + epsilon) / (1.0 + epsilon * v)).ln()
    }))
    .exp())
}

/// Result of tuning ε for ε-perplexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonFit {
    /// Optimal ε; `+inf` when the optimum sits at `λ = 1`.
    pub eps_star: f64,
    pub lambda_star: f64,
    /// Mean smoothed negative log-likelihood at `λ*`; `exp` of it is the
    /// tuned ε-perplexity.
    pub objective: f64,
    pub iterations: usize,
}

impl EpsilonFit {
    pub fn eps_ppl(&self) -> f64 {
        self.objective.exp()
    }
}

/// `F(λ) = -mean log(a_t λ + b_t)` with `a_t = 1/|V| - p_t`, `b_t = p_t`.
///
/// With `λ = ε|V| / (1 + ε|V|)` this is the log of ε-perplexity. It is
/// convex in λ.
#[derive(Debug, Clone)]
pub struct SmoothingObjective {
    a: Vec<f64>,
    b: Vec<f64>,
    vocab_size: usize,
}

impl SmoothingObjective {
    pub fn new(gold_probs: &[f64], vocab_size: usize) -> Result<Self> {
        if gold_probs.is_empty() {
            return Err(Error::EmptyInput("gold probabilities"));
        }
        if vocab_size == 0 {
            return Err(Error::EmptyInput("vocabulary"));
        }
        if let Some(p) = gold_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param("gold_prob", format!("{p} outside [0, 1]")));
        }
        let inv_v = 1.0 / vocab_size as f64;
        Ok(Self {
            a: gold_probs.iter().map(|&p| inv_v - p).collect(),
            b: gold_probs.to_vec(),
            vocab_size,
        })
    }

    pub fn from_records(records: &[TokenEvalRecord]) -> Result<Self> {
        non_empty(records)?;
        let v = records[0].vocab_size();
        if let Some(r) = records.iter().find(|r| r.vocab_size() != v) {
            return Err(Error::VocabMismatch {
                expected: v,
                found: r.vocab_size(),
            });
        }
        let probs: Vec<f64> = records.iter().map(TokenEvalRecord::gold_prob).collect();
        Self::new(&probs, v)
    }

    pub fn value(&self, lambda: f64) -> f64 {
        let n = self.a.len() as f64;
        -self
            .a
            .iter()
            .zip(&self.b)
            .map(|(&a, &b)| (a * lambda + b).ln())
            .sum::<f64>()
            / n
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        let n = self.a.len() as f64;
        -self
            .a
            .iter()
            .zip(&self.b)
            .map(|(&a, &b)| a / (a * lambda + b))
            .sum::<f64>()
            / n
    }

    pub fn epsilon_for(&self, lambda: f64) -> f64 {
        if lambda >= 1.0 {
            f64::INFINITY
        } else {
            lambda / (self.vocab_size as f64 * (1.0 - lambda))
        }
    }
}

/// Projected-gradient settings for [`optimal_epsilon`].
pub const EPS_SOLVER_STEP: f64 = 0.1;
pub const EPS_SOLVER_MAX_ITERS: usize = 10_000;
pub const EPS_SOLVER_TOL: f64 = 1e-10;

/// ε minimizing ε-perplexity over the records.
///
/// Runs `λ ← clip(λ - η F'(λ), 0, 1)` from `λ = 0.5`. The step starts at
/// `η = 0.1` and is halved whenever the projected step fails a sufficient
/// decrease test (F' blows up near `λ = 0` when some gold probability is zero).
/// The boundaries are settled first from the sign of F' there, which is
/// exact for a convex F.
pub fn optimal_epsilon(records: &[TokenEvalRecord]) -> Result<EpsilonFit> {
    let objective = SmoothingObjective::from_records(records)?;
    Ok(minimize_smoothing(&objective))
}

pub fn minimize_smoothing(f: &SmoothingObjective) -> EpsilonFit {
    let finish = |lambda: f64, iterations: usize| EpsilonFit {
        eps_star: f.epsilon_for(lambda),
        lambda_star: lambda,
        objective: f.value(lambda),
        iterations,
    };

    if f.derivative(1.0) <= 0.0 {
        return finish(1.0, 0);
    }
    if f.b.iter().all(|&b| b > 0.0) && f.derivative(0.0) >= 0.0 {
        return finish(0.0, 0);
    }

    let mut lambda: f64 = 0.5;
    let mut value = f.value(lambda);
    let mut eta = EPS_SOLVER_STEP;
    let mut iterations = 0;
    while iterations < EPS_SOLVER_MAX_ITERS {
        iterations += 1;
        let grad = f.derivative(lambda);
        let (next, next_value) = loop {
            let candidate = (lambda - eta * grad).clamp(0.0, 1.0);
            let step = candidate - lambda;
            let candidate_value = f.value(candidate);
            if candidate_value <= value + grad * step + step * step / (2.0 * eta) {
                break (candidate, candidate_value);
            }
            eta *= 0.5;
            if eta < 1e-300 {
                break (lambda, value);
            }
        };
        let moved = (next - lambda).abs();
        lambda = next;
        value = next_value;
        if moved < EPS_SOLVER_TOL {
            break;
        }
    }
    finish(lambda, iterations)
}

/// Sparsemax score of one position: `p(gold) + H₂(p)`.
pub fn token_sparsemax_score(record: &TokenEvalRecord) -> f64 {
    record.gold_prob() + tsallis_of_probs(record.dist().probs(), 2.0)
}

/// Mean sparsemax score over positions.
pub fn sparsemax_score(records: &[TokenEvalRecord]) -> Result<f64> {
    non_empty(records)?;
    Ok(mean(records.iter().map(token_sparsemax_score)))
}

/// `1 - ½‖p - e_gold‖²`, the Patrick-Fischer form of the per-token sparsemax score.
pub fn patrick_fischer_check(dist: &Distribution, gold: usize) -> f64 {
    let mut sq = 0.0;
    let mut gold_seen = false;
    for (id, p) in dist.iter() {
        if id == gold {
            gold_seen = true;
            sq += (p - 1.0) * (p - 1.0);
        } else {
            sq += p * p;
        }
    }
    if !gold_seen {
        sq += 1.0;
    }
    1.0 - 0.5 * sq
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Bernoulli entropy in nats.
fn binary_entropy(p: f64) -> f64 {
    -plogp(p) - plogp(1.0 - p)
}

/// JS divergence between a distribution and the one-hot gold, from the
/// gold probability alone: `H_b((1+p)/2) - ½ H_b(p)`.
pub fn js_to_onehot(p_gold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_gold) {
        return Err(Error::param("p_gold", format!("{p_gold} outside [0, 1]")));
    }
    let js = binary_entropy(0.5 * (1.0 + p_gold)) - 0.5 * binary_entropy(p_gold);
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Mean JS divergence to the gold one-hot over positions.
pub fn js_score(records: &[TokenEvalRecord]) -> Result<f64> {
    non_empty(records)?;
    let mut total = 0.0;
    for r in records {
        total += js_to_onehot(r.gold_prob().min(1.0))?;
    }
    Ok(total / records.len() as f64)
}

/// Generalized JS: `(1/K) Σ_k KL(p^k ‖ m)` with `m` the mean distribution.
pub fn generalized_js(dists: &[Distribution]) -> Result<f64> {
    if dists.len() < 2 {
        return Err(Error::param("dists", "need at least two distributions"));
    }
    let v = dists[0].vocab_size();
    if let Some(d) = dists.iter().find(|d| d.vocab_size() != v) {
        return Err(Error::VocabMismatch {
            expected: v,
            found: d.vocab_size(),
        });
    }
    let k = dists.len() as f64;
    let mut mixture: BTreeMap<usize, f64> = BTreeMap::new();
    for d in dists {
        for (id, p) in d.iter() {
            *mixture.entry(id).or_insert(0.0) += p / k;
        }
    }
    let total: f64 = dists
        .iter()
        .map(|d| {
            d.iter()
                .map(|(id, p)| p * (p / mixture[&id]).ln())
                .sum::<f64>()
        })
        .sum();
    Ok((total / k).max(0.0))
}

/// `rep` and `wrep` keyed by window length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Repetition {
    pub rep: BTreeMap<usize, f64>,
    pub wrep: BTreeMap<usize, f64>,
}

/// Fraction of positions whose predicted token occurs among the previous
/// `l` gold tokens (`rep`), and the same count restricted to positions
/// whose own gold token does not occur there (`wrep`). Early positions use
/// whatever shorter window is available.
pub fn repetition_metrics(
    gold: &TokenSequence,
    predicted: &TokenSequence,
    windows: &[usize],
) -> Result<Repetition> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: predicted.len(),
        });
    }
    if let Some(&l) = windows.iter().find(|&&l| l == 0) {
        return Err(Error::param(
            "windows",
            format!("window length must be positive, got {l}"),
        ));
    }
    let gold = gold.ids();
    let predicted = predicted.ids();
    let n = gold.len();
    let mut out = Repetition::default();
    for &l in windows {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let (mut rep, mut wrep) = (0usize, 0usize);
        for t in 0..n {
            if t >= 1 {
                *counts.entry(gold[t - 1]).or_insert(0) += 1;
            }
            if t > l {
                let leaving = gold[t - l - 1];
                let c = counts.get_mut(&leaving).expect("window count");
                *c -= 1;
                if *c == 0 {
                    counts.remove(&leaving);
                }
            }
            if counts.contains_key(&predicted[t]) {
                rep += 1;
                if !counts.contains_key(&gold[t]) {
                    wrep += 1;
                }
            }
        }
        let denom = n.max(1) as f64;
        out.rep.insert(l, rep as f64 / denom);
        out.wrep.insert(l, wrep as f64 / denom);
    }
    Ok(out)
}

/// Distinct n-grams divided by the total number of tokens.
pub fn distinct_n(tokens: &TokenSequence, n: usize) -> f64 {
    let ids = tokens.ids();
    if n == 0 || ids.len() < n {
        return 0.0;
    }
    let unique: HashSet<&[usize]> = ids.windows(n).collect();
    unique.len() as f64 / ids.len() as f64
}

/// Descriptive statistics of per-position support sizes (population SD).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportStats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: usize,
    pub max: usize,
}

pub fn support_statistics(records: &[TokenEvalRecord]) -> Result<SupportStats> {
    let sizes: Vec<usize> = records.iter().map(|r| r.dist().support_size()).collect();
    support_statistics_of(&sizes)
}

pub fn support_statistics_of(sizes: &[usize]) -> Result<SupportStats> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("support sizes"));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mean = mean(sorted.iter().map(|&s| s as f64));
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    };
    let var = sorted
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(SupportStats {
        mean,
        median,
        sd: var.sqrt(),
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// One row of the metric comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub p: f64,
    pub epsilon: f64,
    /// Single-token ε-perplexity; `+inf` when `p + ε = 0`.
    pub eps_ppl: f64,
    pub sp: f64,
    pub js: f64,
}

/// Evenly spaced grid of `points` values covering `[0, 1]`.
pub fn unit_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..points)
            .map(|i| i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Metrics of `p = (t, (1-t)/(|V|-1), ..., (1-t)/(|V|-1))` with gold on the
/// first entry, for each gold probability `t` in `grid` and each ε.
pub fn metric_curves(grid: &[f64], epsilons: &[f64], vocab_size: usize) -> Result<Vec<CurveRow>> {
    if vocab_size < 2 {
        return Err(Error::param("vocab_size", "must be at least 2"));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::param("grid", format!("{p} outside [0, 1]")));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::param(
            "epsilon",
            format!("must be finite and >= 0, got {e}"),
        ));
    }
    let v = vocab_size as f64;
    let mut rows = Vec::with_capacity(grid.len() * epsilons.len());
    for &p in grid {
        let rest = 1.0 - p;
        let sp = p + 0.5 * (1.0 - p * p - rest * rest / (v - 1.0));
        let js = js_to_onehot(p)?;
        for &epsilon in epsilons {
            let smoothed = p + epsilon;
            let eps_ppl = if smoothed == 0.0 {
                f64::INFINITY
            } else {
                (1.0 + epsilon * v) / smoothed
            };
            rows.push(CurveRow {
                p,
                epsilon,
                eps_ppl,
                sp,
                js,
            });
        }
    }
    Ok(rows)
}

/// Corpus-level metrics for one evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tokens: usize,
    pub sp: f64,
    pub js: f64,
    #[serde(with = "float_or_inf")]
    pub ppl: f64,
    pub eps_ppl: f64,
    #[serde(with = "float_or_inf")]
    pub eps_star: f64,
    pub lambda_star: f64,
    pub rep: BTreeMap<usize, f64>,
    pub wrep: BTreeMap<usize, f64>,
    pub distinct: BTreeMap<usize, f64>,
    pub support_stats: SupportStats,
}

/// Computes every report field. `predicted` is the decoded token at each
/// position (it feeds `rep`, `wrep` and distinct-n).
pub fn evaluate(
    records: &[TokenEvalRecord],
    predicted: &TokenSequence,
    windows: &[usize],
    distinct_ns: &[usize],
) -> Result<MetricsReport> {
    non_empty(records)?;
    let vocab_size = records[0].vocab_size();
    let gold = TokenSequence::new(records.iter().map(|r| r.gold()).collect(), vocab_size)?;
    let fit = optimal_epsilon(records)?;
    let repetition = repetition_metrics(&gold, predicted, windows)?;
    Ok(MetricsReport {
        tokens: records.len(),
        sp: sparsemax_score(records)?,
        js: js_score(records)?,
        ppl: perplexity(records)?,
        eps_ppl: fit.eps_ppl(),
        eps_star: fit.eps_star,
        lambda_star: fit.lambda_star,
        rep: repetition.rep,
        wrep: repetition.wrep,
        distinct: distinct_ns
            .iter()
            .map(|&n| (n, distinct_n(predicted, n)))
            .collect(),
        support_stats: support_statistics(records)?,
    })
}

/// Serializes `+inf` as the string `"inf"`; finite values as numbers.
pub mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom(format!("cannot serialize {v}")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!(
                "expected number or \"inf\", got {s:?}"
            ))),
        }
    }
}
