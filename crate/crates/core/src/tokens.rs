//! Token streams tied to a vocabulary size.

use crate::error::{Error, Result};

/// A vocabulary-indexed token stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<usize>,
    vocab_size: usize,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if let Some(&id) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        Ok(Self { ids, vocab_size })
    }

    pub fn empty(vocab_size: usize) -> Self {
        Self {
            ids: Vec::new(),
            vocab_size,
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: usize) -> Result<()> {
        if id >= self.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.vocab_size,
            });
        }
        self.ids.push(id);
        Ok(())
    }

    /// Splits at `at`, returning `(head, tail)`.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let (a, b) = self.ids.split_at(at.min(self.ids.len()));
        (
            Self {
                ids: a.to_vec(),
                vocab_size: self.vocab_size,
            },
            Self {
                ids: b.to_vec(),
                vocab_size: self.vocab_size,
            },
        )
    }
}
