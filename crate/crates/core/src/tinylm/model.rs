use crate::error::{Error, Result};
use crate::sampling::{LanguageModel, SampleRng};
use crate::transforms::ScoreVector;

use super::vocab::{Vocab, START_ID, STOP_ID};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub context_window: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("context_window", self.context_window),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Offsets of the parameter blocks inside the flat weight buffer, in
/// declared order: embedding (V×d), hidden weights (C·d×h), hidden bias (h),
/// output weights (h×V), output bias (V).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub vocab: usize,
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    pub hidden_w: usize,
    pub hidden_b: usize,
    pub output_w: usize,
    pub output_b: usize,
    pub total: usize,
}

impl Layout {
    fn new(vocab: usize, dims: &ModelDims) -> Self {
        let input = dims.context_window * dims.embed_dim;
        let hidden_w = vocab * dims.embed_dim;
        let hidden_b = hidden_w + input * dims.hidden_dim;
        let output_w = hidden_b + dims.hidden_dim;
        let output_b = output_w + dims.hidden_dim * vocab;
        Self {
            vocab,
            context: dims.context_window,
            embed: dims.embed_dim,
            hidden: dims.hidden_dim,
            hidden_w,
            hidden_b,
            output_w,
            output_b,
            total: output_b + vocab,
        }
    }

    fn input(&self) -> usize {
        self.context * self.embed
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    pub context: Vec<usize>,
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    vocab: Vocab,
    dims: ModelDims,
    layout: Layout,
    weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(vocab: Vocab, dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(vocab.len(), &dims);
        Ok(Self {
            vocab,
            dims,
            layout,
            weights: vec![0.0; layout.total],
        })
    }

    /// Uniform initialization in `[-0.05, 0.05]`, drawn in buffer order.
    pub fn init(vocab: Vocab, dims: ModelDims, rng: &mut SampleRng) -> Result<Self> {
        let mut params = Self::zeros(vocab, dims)?;
        for w in &mut params.weights {
            *w = rng.uniform_in(-INIT_SCALE, INIT_SCALE);
        }
        Ok(params)
    }

    pub fn from_parts(vocab: Vocab, dims: ModelDims, weights: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(vocab, dims)?;
        if weights.len() != params.weights.len() {
            return Err(Error::LengthMismatch {
                left: params.weights.len(),
                right: weights.len(),
            });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        params.weights = weights;
        Ok(params)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    /// Left-pads with the start token (or keeps the last `C` ids).
    pub fn pad_context(&self, context: &[usize]) -> Result<Vec<usize>> {
        let c = self.dims.context_window;
        if let Some(&id) = context.iter().find(|&&id| id >= self.layout.vocab) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.layout.vocab,
            });
        }
        let tail = &context[context.len().saturating_sub(c)..];
        let mut padded = vec![START_ID; c - tail.len()];
        padded.extend_from_slice(tail);
        Ok(padded)
    }

    pub fn forward(&self, context: &[usize]) -> Result<ScoreVector> {
        Ok(self.forward_cached(context)?.scores)
    }

    pub(crate) fn forward_cached(&self, context: &[usize]) -> Result<Activations> {
        let l = &self.layout;
        let w = &self.weights;
        let context = self.pad_context(context)?;

        let mut input = Vec::with_capacity(l.input());
        for &id in &context {
            input.extend_from_slice(&w[id * l.embed..(id + 1) * l.embed]);
        }

        let mut hidden = w[l.hidden_b..l.hidden_b + l.hidden].to_vec();
        for (i, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &w[l.hidden_w + i * l.hidden..l.hidden_w + (i + 1) * l.hidden];
            for (h, &wi) in hidden.iter_mut().zip(row) {
                *h += x * wi;
            }
        }
        hidden.iter_mut().for_each(|h| *h = h.tanh());

        let mut scores = w[l.output_b..l.output_b + l.vocab].to_vec();
        for (u, &h) in hidden.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let row = &w[l.output_w + u * l.vocab..l.output_w + (u + 1) * l.vocab];
            for (z, &wu) in scores.iter_mut().zip(row) {
                *z += h * wu;
            }
        }

        Ok(Activations {
            context,
            input,
            hidden,
            scores: ScoreVector::new(scores)?,
        })
    }

    /// Accumulates into `grad` the parameter gradient given `d_scores`, the
    /// gradient of the loss with respect to the scores.
    pub(crate) fn backward(&self, acts: &Activations, d_scores: &[f64], grad: &mut [f64]) {
        let l = &self.layout;
        let w = &self.weights;
        let active: Vec<(usize, f64)> = d_scores
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, g)| *g != 0.0)
            .collect();
        if active.is_empty() {
            return;
        }

        for &(v, g) in &active {
            grad[l.output_b + v] += g;
        }
        let mut d_pre = vec![0.0; l.hidden];
        for (u, (&h, dp)) in acts.hidden.iter().zip(d_pre.iter_mut()).enumerate() {
            let base = l.output_w + u * l.vocab;
            let mut dh = 0.0;
            for &(v, g) in &active {
                grad[base + v] += h * g;
                dh += w[base + v] * g;
            }
            *dp = dh * (1.0 - h * h);
        }

        grad[l.hidden_b..l.hidden_b + l.hidden]
            .iter_mut()
            .zip(&d_pre)
            .for_each(|(g, d)| *g += d);
        let mut d_input = vec![0.0; l.input()];
        for (i, (&x, dx)) in acts.input.iter().zip(d_input.iter_mut()).enumerate() {
            let base = l.hidden_w + i * l.hidden;
            let mut acc = 0.0;
            for (u, &d) in d_pre.iter().enumerate() {
                grad[base + u] += x * d;
                acc += w[base + u] * d;
            }
            *dx = acc;
        }

        for (j, &id) in acts.context.iter().enumerate() {
            let src = &d_input[j * l.embed..(j + 1) * l.embed];
            grad[id * l.embed..(id + 1) * l.embed]
                .iter_mut()
                .zip(src)
                .for_each(|(g, d)| *g += d);
        }
    }

    /// Indices of parameters that can influence the scores for `context`.
    pub(crate) fn active_params(&self, context: &[usize]) -> Vec<usize> {
        let l = &self.layout;
        let mut idx: Vec<usize> = Vec::new();
        let mut rows: Vec<usize> = context.to_vec();
        rows.sort_unstable();
        rows.dedup();
        for id in rows {
            idx.extend(id * l.embed..(id + 1) * l.embed);
        }
        idx.extend(l.hidden_w..l.total);
        idx
    }
}

impl LanguageModel for ModelParams {
    fn vocab_size(&self) -> usize {
        self.layout.vocab
    }

    fn context_window(&self) -> usize {
        self.dims.context_window
    }

    fn eos_id(&self) -> Option<usize> {
        Some(STOP_ID)
    }

    fn scores(&self, context: &[usize]) -> Result<ScoreVector> {
        self.forward(context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::TokenizerMode;
    use crate::transforms::softmax;

    fn vocab() -> Vocab {
        Vocab::build("a b c d\n", TokenizerMode::Whitespace)
    }

    const DIMS: ModelDims = ModelDims {
        context_window: 3,
        embed_dim: 4,
        hidden_dim: 5,
    };

    #[test]
    fn zero_weights_give_uniform() {
        let m = ModelParams::zeros(vocab(), DIMS).unwrap();
        let z = m.forward(&[3, 4]).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let p = softmax(&z, 1.0).unwrap();
        assert_eq!(p.support_size(), 7);
        assert!(p.probs().iter().all(|&q| (q - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = ModelParams::init(vocab(), DIMS, &mut SampleRng::seed_from_u64(5)).unwrap();
        let b = ModelParams::init(vocab(), DIMS, &mut SampleRng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.forward(&[5, 6]).unwrap(), b.forward(&[5, 6]).unwrap());
        assert!(a.weights().iter().all(|w| w.abs() <= INIT_SCALE));
        assert_eq!(a.forward(&[1]).unwrap().len(), 7);
    }

    #[test]
    fn context_padding_and_truncation() {
        let m = ModelParams::zeros(vocab(), DIMS).unwrap();
        assert_eq!(m.pad_context(&[4]).unwrap(), vec![START_ID, START_ID, 4]);
        assert_eq!(m.pad_context(&[3, 4, 5, 6]).unwrap(), vec![4, 5, 6]);
        assert!(matches!(
            m.forward(&[9]),
            Err(Error::TokenOutOfRange {
                id: 9,
                vocab_size: 7
            })
        ));
    }

    #[test]
    fn layout_covers_buffer() {
        let m = ModelParams::zeros(vocab(), DIMS).unwrap();
        let l = &m.layout;
        assert_eq!(l.hidden_w, 7 * 4);
        assert_eq!(l.total, 7 * 4 + 12 * 5 + 5 + 5 * 7 + 7);
        assert_eq!(m.num_params(), l.total);
        assert!(ModelParams::from_parts(vocab(), DIMS, vec![0.0; 3]).is_err());
    }
}
