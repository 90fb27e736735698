//! A small feedforward (Bengio-style) autoregressive language model.
//!
//! The last `C` token ids are embedded, concatenated, passed through one
//! `tanh` hidden layer and projected to a score vector over the vocabulary.
//! It is trained with any member of the entmax loss family by plain
//! mini-batch gradient descent and hand-written backpropagation.

mod gradcheck;
mod model;
mod train;
mod vocab;

pub use gradcheck::{
    finite_diff_check, relative_error, GradCheck, FD_PROBES, FD_STEP, REL_ERROR_FLOOR,
};
pub use model::{ModelDims, ModelParams};
pub use train::{train, train_from, train_with_loss, training_examples, TrainConfig, TrainOutcome};
pub use vocab::{TokenizerMode, Vocab, START_ID, STOP_ID, UNK_ID};
