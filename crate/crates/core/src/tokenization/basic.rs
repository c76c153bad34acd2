//! Whitespace and punctuation splitting, and its inverse.
//!
//! A word is a maximal run of alphanumeric characters; each maximal run of
//! other non-whitespace characters is a punctuation token. Detokenization
//! joins with single spaces, puts no space before a punctuation token, and
//! glues sub-word pieces carrying the continuation marker to their successor.

use crate::tokenization::bpe::CONTINUATION_MARKER;
use crate::tokenization::TokenSequence;

/// Collapses all whitespace runs to single spaces and trims the ends.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn basic_tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_is_word = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            continue;
        }
        let is_word = ch.is_alphanumeric();
        if !current.is_empty() && is_word != current_is_word {
            tokens.push(std::mem::take(&mut current));
        }
        current.push(ch);
        current_is_word = is_word;
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// True for a sub-word piece that glues to the following token.
///
/// Only pieces produced by splitting a word can carry the marker: the
/// remainder before "@@" must be non-empty and end in a word character, which
/// excludes literal punctuation runs such as "@@" or "@@@".
pub fn is_continuation(token: &str) -> bool {
    match token.strip_suffix(CONTINUATION_MARKER) {
        Some(rest) => rest.chars().last().is_some_and(|c| c.is_alphanumeric()),
        None => false,
    }
}

pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue = true; // no leading space
    for token in tokens {
        let (piece, marks_continuation) = if is_continuation(token) {
            (&token[..token.len() - CONTINUATION_MARKER.len()], true)
        } else {
            (token.as_str(), false)
        };
        let starts_with_word = piece.chars().next().is_some_and(|c| c.is_alphanumeric());
        if !glue && starts_with_word {
            out.push(' ');
        }
        out.push_str(piece);
        glue = marks_continuation;
    }
    out
}
