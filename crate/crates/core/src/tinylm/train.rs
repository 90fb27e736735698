use crate::error::{Error, Result};
use crate::losses::{EntmaxLoss, ScoreLoss};
use crate::sampling::SampleRng;
use crate::tokens::TokenSequence;

use super::model::{ModelDims, ModelParams};
use super::vocab::{Vocab, START_ID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Selects the entmax loss; 1 is negative log-likelihood.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::param(
                "alpha",
                format!("must be >= 1, got {}", self.alpha),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param(
                "learning_rate",
                format!("must be >= 0, got {}", self.learning_rate),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean per-example loss of each epoch, measured while training.
    pub epoch_losses: Vec<f64>,
    /// Mean loss of each mini-batch, before its update.
    pub step_losses: Vec<f64>,
}

/// `(context, gold)` for every corpus position. Contexts are the previous
/// `window` tokens, left-padded with the start token.
pub fn training_examples(corpus: &[usize], window: usize) -> Vec<(Vec<usize>, usize)> {
    (0..corpus.len())
        .map(|t| {
            let from = t.saturating_sub(window);
            let mut ctx = vec![START_ID; window - (t - from)];
            ctx.extend_from_slice(&corpus[from..t]);
            (ctx, corpus[t])
        })
        .collect()
}

/// Trains a freshly initialized model with the α-entmax loss.
pub fn train(
    corpus: &TokenSequence,
    vocab: Vocab,
    dims: ModelDims,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    train_with_loss(corpus, vocab, dims, config, &EntmaxLoss::new(config.alpha)?)
}

/// Same as [`train`] with an arbitrary score-level loss.
pub fn train_with_loss<L: ScoreLoss>(
    corpus: &TokenSequence,
    vocab: Vocab,
    dims: ModelDims,
    config: &TrainConfig,
    loss: &L,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = SampleRng::seed_from_u64(config.seed);
    let params = ModelParams::init(vocab, dims, &mut rng)?;
    run(params, corpus, config, loss, &mut rng)
}

/// Continues training from existing parameters.
pub fn train_from<L: ScoreLoss>(
    params: ModelParams,
    corpus: &TokenSequence,
    config: &TrainConfig,
    loss: &L,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = SampleRng::seed_from_u64(config.seed);
    run(params, corpus, config, loss, &mut rng)
}

fn run<L: ScoreLoss>(
    mut params: ModelParams,
    corpus: &TokenSequence,
    config: &TrainConfig,
    loss: &L,
    rng: &mut SampleRng,
) -> Result<TrainOutcome> {
    let window = params.dims().context_window;
    if corpus.vocab_size() != params.vocab().len() {
        return Err(Error::VocabMismatch {
            expected: params.vocab().len(),
            found: corpus.vocab_size(),
        });
    }
    if corpus.len() <= window {
        return Err(Error::CorpusTooShort {
            len: corpus.len(),
            window,
        });
    }

    let examples = training_examples(corpus.ids(), window);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; params.num_params()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::new();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_total = 0.0;
            for &i in chunk {
                let (ctx, gold) = &examples[i];
                let acts = params.forward_cached(ctx)?;
                let (value, d_scores) = loss.evaluate(&acts.scores, *gold)?;
                batch_total += value;
                params.backward(&acts, &d_scores, &mut grad);
            }
            if !batch_total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            let n = chunk.len() as f64;
            step_losses.push(batch_total / n);
            epoch_total += batch_total;

            let scale = config.learning_rate / n;
            if scale != 0.0 {
                params
                    .weights_mut()
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(w, g)| *w -= scale * g);
            }
        }
        epoch_losses.push(epoch_total / examples.len() as f64);
    }

    Ok(TrainOutcome {
        params,
        epoch_losses,
        step_losses,
    })
}
