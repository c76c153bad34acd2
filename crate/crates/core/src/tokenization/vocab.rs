//! Token/index bijection with fixed marker slots.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tokenization::TokenSequence;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from corpus token counts, most frequent first and
    /// ties in lexicographic order, after the four reserved slots.
    pub fn from_corpus(corpus: &[TokenSequence]) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut index_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_index: HashMap<String, usize> = index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for tok in tokens {
            if !token_to_index.contains_key(&tok) {
                token_to_index.insert(tok.clone(), index_to_token.len());
                index_to_token.push(tok);
            }
        }
        Vocabulary { index_to_token, token_to_index }
    }

    /// Total entry count including the four reserved markers.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved markers are always present
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token_at(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(|s| s.as_str())
    }

    /// Tokens to indices; unknown tokens map to the unk marker.
    pub fn w2v(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index_of(t).unwrap_or(UNK))
            .collect()
    }

    /// Indices to tokens; reserved indices render as their marker strings.
    pub fn v2w(&self, ids: &[usize]) -> Result<TokenSequence> {
        ids.iter()
            .map(|&id| {
                self.index_to_token
                    .get(id)
                    .cloned()
                    .ok_or(Error::IndexOutOfBounds { axis: 0, index: id, bound: self.len() })
            })
            .collect()
    }

    /// One token per line; the line number is the index.
    pub fn to_lines(&self) -> Vec<String> {
        self.index_to_token.clone()
    }

    pub fn from_lines(lines: &[String]) -> Result<Self> {
        if lines.len() < RESERVED_TOKENS.len() {
            return Err(Error::Parse {
                line: lines.len(),
                msg: "vocabulary shorter than the reserved marker block".into(),
            });
        }
        for (i, want) in RESERVED_TOKENS.iter().enumerate() {
            if lines[i] != *want {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected reserved token {want}, got {}", lines[i]),
                });
            }
        }
        let vocab = Vocabulary::from_tokens(lines[RESERVED_TOKENS.len()..].iter().cloned());
        if vocab.len() != lines.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "duplicate token in vocabulary file".into(),
            });
        }
        Ok(vocab)
    }
}
