//! Sparse text generation toolkit.
//!
//! - [`transforms`]: softmax, sparsemax, α-entmax, top-k and nucleus truncation
//! - [`losses`]: the α-entmax loss with its gradient
//! - [`sampling`]: decoding strategies, seeded sampling, autoregressive generation
//! - [`metrics`]: perplexity, ε-perplexity, sparsemax score, JS divergence,
//!   repetition, distinct-n and support statistics
//! - [`tinylm`]: a small feedforward language model trainable with any entmax loss
//! - [`cli`]: the `sparsetext` command line and its file formats

pub mod cli;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod sampling;
pub mod tinylm;
pub mod tokens;
pub mod transforms;

pub use error::{Error, Result};
pub use tokens::TokenSequence;
pub use transforms::{Distribution, EntmaxParams, ScoreVector};
