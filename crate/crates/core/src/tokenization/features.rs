//! Similarity features for individual tokens.
//!
//! A token is described by its character-bigram counts (hashed into a fixed
//! number of buckets), its character length, and the log of its corpus
//! frequency. For similarity each block is L2-normalized and weighted
//! 1.0 / 0.5 / 0.5, which keeps every component nonnegative, so cosine
//! similarity between any two token features lies in [0, 1].

pub const BIGRAM_BUCKETS: usize = 64;

const BIGRAM_WEIGHT: f32 = 1.0;
const LENGTH_WEIGHT: f32 = 0.5;
const FREQ_WEIGHT: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenFeature {
    pub bigram_counts: Vec<u32>,
    pub length_chars: usize,
    pub log_freq: f32,
}

/// FNV-1a, the bucketing hash for bigrams. Fixed so features never depend on
/// process-level hash seeding.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl TokenFeature {
    pub fn new(token: &str, corpus_freq: u64) -> Self {
        let mut bigram_counts = vec![0u32; BIGRAM_BUCKETS];
        let chars: Vec<char> = token.chars().collect();
        for pair in chars.windows(2) {
            let mut buf = [0u8; 8];
            let mut key = Vec::with_capacity(8);
            key.extend_from_slice(pair[0].encode_utf8(&mut buf).as_bytes());
            key.extend_from_slice(pair[1].encode_utf8(&mut buf).as_bytes());
            bigram_counts[(fnv1a(&key) % BIGRAM_BUCKETS as u64) as usize] += 1;
        }
        TokenFeature {
            bigram_counts,
            length_chars: chars.len(),
            log_freq: (1.0 + corpus_freq as f64).ln() as f32,
        }
    }

    /// The weighted, block-normalized vector used for cosine similarity.
    pub fn vector(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(BIGRAM_BUCKETS + 2);
        let norm = (self.bigram_counts.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>()).sqrt();
        for &c in &self.bigram_counts {
            v.push(if norm > 0.0 { (c as f64 / norm) as f32 * BIGRAM_WEIGHT } else { 0.0 });
        }
        v.push(if self.length_chars > 0 { LENGTH_WEIGHT } else { 0.0 });
        v.push(if self.log_freq > 0.0 { FREQ_WEIGHT } else { 0.0 });
        v
    }
}

/// Cosine similarity, with the zero vector defined as similar to nothing.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())) as f32
}
