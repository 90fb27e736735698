use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tokens::TokenSequence;

pub const START_ID: usize = 0;
pub const STOP_ID: usize = 1;
pub const UNK_ID: usize = 2;

const SPECIALS: [&str; 3] = ["<s>", "</s>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerMode {
    Whitespace,
    Char,
}

impl TokenizerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Char => "char",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            TokenizerMode::Whitespace => 0,
            TokenizerMode::Char => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TokenizerMode::Whitespace),
            1 => Some(TokenizerMode::Char),
            _ => None,
        }
    }

    fn pieces<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            TokenizerMode::Whitespace => line.split_whitespace().collect(),
            TokenizerMode::Char => line
                .char_indices()
                .map(|(i, c)| &line[i..i + c.len_utf8()])
                .collect(),
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizerMode::Whitespace),
            "char" => Ok(TokenizerMode::Char),
            other => Err(Error::param(
                "tokenizer",
                format!("expected `whitespace` or `char`, got `{other}`"),
            )),
        }
    }
}

/// Token table. Ids 0..3 are reserved for start, stop and unknown; the rest
/// are the corpus tokens in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    mode: TokenizerMode,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Collects every token of `text`. Each non-empty line is one sentence.
    pub fn build(text: &str, mode: TokenizerMode) -> Self {
        let found: BTreeSet<&str> = text.lines().flat_map(|l| mode.pieces(l)).collect();
        let tokens = SPECIALS
            .iter()
            .copied()
            .chain(found.into_iter().filter(|t| !SPECIALS.contains(t)))
            .map(str::to_owned)
            .collect();
        Self::from_tokens(mode, tokens).expect("specials are in place")
    }

    pub fn from_tokens(mode: TokenizerMode, tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..3] != SPECIALS {
            return Err(Error::InvalidDistribution(
                "vocabulary must start with the reserved <s>, </s>, <unk> tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::param("vocab", format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            mode,
            tokens,
            index,
        })
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Encodes a corpus: every non-empty line followed by the stop token.
    pub fn encode_corpus(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::new();
        for line in text.lines() {
            let pieces = self.mode.pieces(line);
            if pieces.is_empty() {
                continue;
            }
            ids.extend(pieces.into_iter().map(|p| self.id(p)));
            ids.push(STOP_ID);
        }
        TokenSequence::new(ids, self.len()).expect("ids come from the table")
    }

    /// Encodes a prompt (no stop token appended).
    pub fn encode_prompt(&self, text: &str) -> TokenSequence {
        let ids = text
            .lines()
            .flat_map(|l| self.mode.pieces(l))
            .map(|p| self.id(p))
            .collect();
        TokenSequence::new(ids, self.len()).expect("ids come from the table")
    }

    /// Renders ids back to text; the stop token becomes a line break.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        let mut line_start = true;
        for &id in ids {
            if id == STOP_ID {
                out.push('\n');
                line_start = true;
                continue;
            }
            if self.mode == TokenizerMode::Whitespace && !line_start {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or(SPECIALS[UNK_ID]));
            line_start = false;
        }
        out
    }
}
