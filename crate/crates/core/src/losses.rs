//! The α-entmax loss family.
//!
//! `ℓ_α(z, x) = (p - e_x)ᵀz + H_α(p)` with `p = entmax_α(z)`. Its gradient
//! with respect to the scores is `p - e_x`. At α=1 this is the negative
//! log-likelihood of softmax, at α=2 the sparsemax loss. For α>1 the loss is
//! exactly zero once the gold score beats every other score by `1/(α-1)`.

use crate::error::{Error, Result};
use crate::transforms::{entmax, tsallis_of_probs, Distribution, EntmaxParams, ScoreVector};

/// The gold token as a one-hot target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotTarget {
    token_id: usize,
}

impl OneHotTarget {
    pub fn new(token_id: usize, vocab_size: usize) -> Result<Self> {
        if token_id >= vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token_id,
                vocab_size,
            });
        }
        Ok(Self { token_id })
    }

    pub fn token_id(&self) -> usize {
        self.token_id
    }
}

/// Loss value together with its gradient with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
    /// The entmax distribution the loss was evaluated at.
    pub dist: Distribution,
}

/// Anything that maps (scores, gold) to a loss and a score gradient.
///
/// The trainer is generic over this so alternate objectives can be plugged in.
pub trait ScoreLoss {
    fn evaluate(&self, z: &ScoreVector, gold: usize) -> Result<(f64, Vec<f64>)>;
}

/// The α-entmax loss as a [`ScoreLoss`].
#[derive(Debug, Clone, Copy)]
pub struct EntmaxLoss {
    pub params: EntmaxParams,
}

impl EntmaxLoss {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            params: EntmaxParams::new(alpha)?,
        })
    }
}

impl ScoreLoss for EntmaxLoss {
    fn evaluate(&self, z: &ScoreVector, gold: usize) -> Result<(f64, Vec<f64>)> {
        let target = OneHotTarget::new(gold, z.len())?;
        let loss = entmax_loss_with(z, target, &self.params)?;
        Ok((loss.value, loss.grad))
    }
}

pub fn entmax_loss(z: &ScoreVector, x: OneHotTarget, alpha: f64) -> Result<LossValue> {
    entmax_loss_with(z, x, &EntmaxParams::new(alpha)?)
}

pub fn entmax_loss_with(
    z: &ScoreVector,
    x: OneHotTarget,
    params: &EntmaxParams,
) -> Result<LossValue> {
    let gold = x.token_id();
    if gold >= z.len() {
        return Err(Error::TokenOutOfRange {
            id: gold,
            vocab_size: z.len(),
        });
    }
    let dist = entmax(z, params)?;
    let scores = z.values();

    let mut grad = vec![0.0; z.len()];
    let mut inner = 0.0;
    for (id, p) in dist.iter() {
        grad[id] = p;
        inner += p * scores[id];
    }
    grad[gold] -= 1.0;
    let value = inner - scores[gold] + tsallis_of_probs(dist.probs(), params.alpha());
    Ok(LossValue { value, grad, dist })
}

/// Sum of per-position entmax losses.
pub fn corpus_loss(
    model_scores: &[ScoreVector],
    targets: &[OneHotTarget],
    alpha: f64,
) -> Result<f64> {
    if model_scores.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: model_scores.len(),
            right: targets.len(),
        });
    }
    let params = EntmaxParams::new(alpha)?;
    let mut total = 0.0;
    for (z, &x) in model_scores.iter().zip(targets) {
        total += entmax_loss_with(z, x, &params)?.value;
    }
    Ok(total)
}
