//! Tokenizers, sub-word models, token features, and vocabulary.

pub mod basic;
pub mod bpe;
pub mod features;
pub mod fuzzy;
pub mod vocab;
pub mod zipf;

/// Ordered list of token strings.
pub type TokenSequence = Vec<String>;

pub use basic::{basic_tokenize, detokenize, normalize};
pub use bpe::{apply_bpe, train_bpe, SubwordModel, CONTINUATION_MARKER};
pub use features::{cosine, TokenFeature};
pub use fuzzy::{FuzzyTokenizer, FuzzyTokenizerOptions};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
pub use zipf::ZipfStats;
