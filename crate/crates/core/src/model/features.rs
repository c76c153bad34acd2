//! Sequence-level features for rule routing: a bag-of-words block over the
//! vocabulary plus a length block, consumed by cosine fire strengths.

use crate::tokenization::vocab::Vocabulary;
use crate::tokenization::TokenSequence;

/// Weight of the appended length coordinate relative to the unit-L1 bag.
pub const LENGTH_WEIGHT: f32 = 0.5;

/// Feature vector of one token sequence: vocabulary-sized bag of token
/// frequencies (L1-normalized, unknown tokens counted under the unk slot)
/// with one length coordinate appended, scaled by [`LENGTH_WEIGHT`]. An
/// empty sequence maps to the zero vector, which downstream fire strengths
/// turn into a uniform rule weighting.
pub fn sequence_feature(seq: &TokenSequence, vocab: &Vocabulary, corpus_max_len: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; vocab.len() + 1];
    if !seq.is_empty() {
        let w = 1.0 / seq.len() as f32;
        for tok in seq {
            out[vocab.index_of(tok).unwrap_or(crate::tokenization::vocab::UNK)] += w;
        }
    }
    let len_norm = if corpus_max_len > 0 {
        seq.len() as f32 / corpus_max_len as f32
    } else {
        0.0
    };
    out[vocab.len()] = LENGTH_WEIGHT * len_norm;
    out
}

/// Feature vector when the sequence is already id-encoded.
pub fn sequence_feature_ids(ids: &[usize], vocab_len: usize, corpus_max_len: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; vocab_len + 1];
    if !ids.is_empty() {
        let w = 1.0 / ids.len() as f32;
        for &id in ids {
            out[id.min(vocab_len - 1)] += w;
        }
    }
    let len_norm = if corpus_max_len > 0 {
        ids.len() as f32 / corpus_max_len as f32
    } else {
        0.0
    };
    out[vocab_len] = LENGTH_WEIGHT * len_norm;
    out
}
