//! Decoding strategies and autoregressive generation.

use std::fmt;
use std::str::FromStr;

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::tokens::TokenSequence;
use crate::transforms::{
    argmax, entmax, nucleus_truncate, softmax, topk_truncate, Distribution, EntmaxParams,
    ScoreVector,
};

/// Seedable, portable random stream (xoshiro256++ seeded through splitmix64).
#[derive(Debug, Clone)]
pub struct SampleRng(Xoshiro256PlusPlus);

impl SampleRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` by rejection, so there is no modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher-Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// A decoding strategy and its scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Greedy,
    Softmax,
    Temperature(f64),
    TopK(usize),
    Nucleus(f64),
    Entmax(f64),
}

impl Strategy {
    pub const NAMES: [&'static str; 6] = [
        "greedy",
        "softmax",
        "temperature",
        "topk",
        "nucleus",
        "entmax",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Softmax => "softmax",
            Strategy::Temperature(_) => "temperature",
            Strategy::TopK(_) => "topk",
            Strategy::Nucleus(_) => "nucleus",
            Strategy::Entmax(_) => "entmax",
        }
    }

    /// Scalar parameter, if the strategy has one.
    pub fn param(&self) -> Option<f64> {
        match *self {
            Strategy::Greedy | Strategy::Softmax => None,
            Strategy::Temperature(t) => Some(t),
            Strategy::TopK(k) => Some(k as f64),
            Strategy::Nucleus(p) => Some(p),
            Strategy::Entmax(a) => Some(a),
        }
    }

    /// Builds a strategy from its name and a scalar parameter.
    pub fn from_parts(name: &str, param: Option<f64>) -> Result<Self> {
        let need = |what: &'static str| {
            param.ok_or_else(|| Error::param(what, format!("strategy `{name}` needs a value")))
        };
        let strategy = match name {
            "greedy" => Strategy::Greedy,
            "softmax" => Strategy::Softmax,
            "temperature" => Strategy::Temperature(need("temperature")?),
            "topk" => {
                let k = need("k")?;
                if k.fract() != 0.0 || k < 1.0 {
                    return Err(Error::param(
                        "k",
                        format!("must be a positive integer, got {k}"),
                    ));
                }
                Strategy::TopK(k as usize)
            }
            "nucleus" => Strategy::Nucleus(need("top_p")?),
            "entmax" => Strategy::Entmax(need("alpha")?),
            other => {
                return Err(Error::param(
                    "strategy",
                    format!(
                        "unknown strategy `{other}`, expected one of {:?}",
                        Self::NAMES
                    ),
                ))
            }
        };
        strategy.validate()?;
        Ok(strategy)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Greedy | Strategy::Softmax => Ok(()),
            Strategy::Temperature(t) if t.is_finite() && t > 0.0 => Ok(()),
            Strategy::Temperature(t) => {
                Err(Error::param("temperature", format!("must be > 0, got {t}")))
            }
            Strategy::TopK(0) => Err(Error::param("k", "must be >= 1")),
            Strategy::TopK(_) => Ok(()),
            Strategy::Nucleus(p) if p > 0.0 && p <= 1.0 => Ok(()),
            Strategy::Nucleus(p) => {
                Err(Error::param("top_p", format!("must be in (0, 1], got {p}")))
            }
            Strategy::Entmax(a) if a.is_finite() && a >= 1.0 => Ok(()),
            Strategy::Entmax(a) => Err(Error::param("alpha", format!("must be >= 1, got {a}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}={}", self.name(), p),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Parses `name` or `name=value`, e.g. `entmax=1.5`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            None => Strategy::from_parts(s, None),
            Some((name, value)) => {
                let v = value
                    .parse::<f64>()
                    .map_err(|e| Error::param("strategy", format!("bad value `{value}`: {e}")))?;
                Strategy::from_parts(name, Some(v))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub strategy: Strategy,
    pub max_len: usize,
    pub seed: u64,
}

impl DecoderConfig {
    pub fn new(strategy: Strategy, max_len: usize, seed: u64) -> Result<Self> {
        strategy.validate()?;
        if max_len == 0 {
            return Err(Error::param("max_len", "must be positive"));
        }
        Ok(Self {
            strategy,
            max_len,
            seed,
        })
    }
}

/// The post-transform distribution a strategy samples from.
///
/// Top-k and nucleus truncate `softmax(z)` at temperature one.
pub fn next_token_distribution(z: &ScoreVector, strategy: &Strategy) -> Result<Distribution> {
    strategy.validate()?;
    match *strategy {
        Strategy::Greedy => Ok(argmax(z)),
        Strategy::Softmax => softmax(z, 1.0),
        Strategy::Temperature(t) => softmax(z, t),
        Strategy::TopK(k) => topk_truncate(&softmax(z, 1.0)?, k),
        Strategy::Nucleus(p) => nucleus_truncate(&softmax(z, 1.0)?, p),
        Strategy::Entmax(a) => entmax(z, &EntmaxParams::new(a)?),
    }
}

/// Inverse-CDF draw over the support, in id order.
pub fn sample(p: &Distribution, rng: &mut SampleRng) -> usize {
    let u = rng.uniform();
    let mut cumulative = 0.0;
    for (id, prob) in p.iter() {
        cumulative += prob;
        if u < cumulative {
            return id;
        }
    }
    // Rounding can leave the total a hair under one.
    *p.support()
        .last()
        .expect("distribution support is never empty")
}

/// A next-token scorer with a fixed context window.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    fn context_window(&self) -> usize;

    /// Token that ends generation, if any.
    fn eos_id(&self) -> Option<usize>;

    /// Scores for the token following `context` (at most `context_window` ids).
    fn scores(&self, context: &[usize]) -> Result<ScoreVector>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSequence {
    pub tokens: TokenSequence,
    /// Support size of the distribution each token was drawn from.
    pub support_sizes: Vec<usize>,
}

/// Autoregressive decoding from `context`.
///
/// Stops after `max_len` tokens or right after emitting the model's EOS
/// token (which is kept in the output). Contexts longer than the model window
/// are cut from the left.
pub fn generate<M: LanguageModel + ?Sized>(
    model: &M,
    context: &TokenSequence,
    config: &DecoderConfig,
) -> Result<GeneratedSequence> {
    if context.vocab_size() != model.vocab_size() {
        return Err(Error::VocabMismatch {
            expected: model.vocab_size(),
            found: context.vocab_size(),
        });
    }
    config.strategy.validate()?;
    let window = model.context_window();
    let mut rng = SampleRng::seed_from_u64(config.seed);
    let mut history = context.ids().to_vec();
    let mut tokens = TokenSequence::empty(model.vocab_size());
    let mut support_sizes = Vec::with_capacity(config.max_len);

    while tokens.len() < config.max_len {
        let start = history.len().saturating_sub(window);
        let z = model.scores(&history[start..])?;
        if z.len() != model.vocab_size() {
            return Err(Error::VocabMismatch {
                expected: model.vocab_size(),
                found: z.len(),
            });
        }
        let dist = next_token_distribution(&z, &config.strategy)?;
        let next = sample(&dist, &mut rng);
        support_sizes.push(dist.support_size());
        tokens.push(next)?;
        history.push(next);
        if Some(next) == model.eos_id() {
            break;
        }
    }
    Ok(GeneratedSequence {
        tokens,
        support_sizes,
    })
}
