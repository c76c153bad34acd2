//! Corpus evaluation metrics over token sequences.
//!
//! All scores are reported on a 0..100 scale. Hypotheses and references are
//! compared as plain token sequences; callers are expected to detokenize
//! model output and re-tokenize with the basic tokenizer first, so scores do
//! not depend on sub-word granularity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tokenization::TokenSequence;

fn check_corpus(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::contract("hypothesis and reference corpora differ in size"));
    }
    if hyps.is_empty() {
        return Err(Error::contract("empty evaluation corpus"));
    }
    Ok(())
}

/// Token accuracy: per pair, matches at aligned positions 0..min(len) divided
/// by max(len), averaged over the corpus. Two empty sequences count as a
/// perfect pair.
pub fn token_accuracy(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    let mut total = 0.0f64;
    for (h, r) in hyps.iter().zip(refs) {
        let denom = h.len().max(r.len());
        if denom == 0 {
            total += 1.0;
            continue;
        }
        let matches = h.iter().zip(r.iter()).filter(|(a, b)| a == b).count();
        total += matches as f64 / denom as f64;
    }
    Ok(100.0 * total / hyps.len() as f64)
}

fn ngram_counts(seq: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if seq.len() >= n && n > 0 {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches of `hyp` against `rf`, and the hyp n-gram total.
fn clipped_matches(hyp: &[String], rf: &[String], n: usize) -> (u64, u64) {
    let hc = ngram_counts(hyp, n);
    let rc = ngram_counts(rf, n);
    let mut m = 0u64;
    for (g, &c) in &hc {
        m += c.min(rc.get(g).copied().unwrap_or(0));
    }
    let t = if hyp.len() >= n { (hyp.len() - n + 1) as u64 } else { 0 };
    (m, t)
}

/// Corpus BLEU with n-grams up to 4: geometric mean of clipped precisions
/// under a brevity penalty. Precisions for n >= 2 get add-one smoothing when
/// their clipped count is zero; a zero unigram precision scores 0. A corpus
/// of entirely empty hypotheses also scores 0 (callers may warn).
pub fn bleu(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    const MAX_N: usize = 4;
    let mut matches = [0u64; MAX_N];
    let mut totals = [0u64; MAX_N];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=MAX_N {
            let (m, t) = clipped_matches(h, r, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    if matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    for n in 1..=MAX_N {
        let (m, t) = (matches[n - 1], totals[n - 1]);
        let p = if n >= 2 && m == 0 {
            (m + 1) as f64 / (t + 1) as f64
        } else {
            m as f64 / t as f64
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / MAX_N as f64).exp())
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// ROUGE-N: mean per-pair F1 of n-gram overlap. An empty side contributes 0.
pub fn rouge_n(hyps: &[TokenSequence], refs: &[TokenSequence], n: usize) -> Result<f64> {
    check_corpus(hyps, refs)?;
    if n == 0 {
        return Err(Error::contract("rouge_n needs n >= 1"));
    }
    let mut total = 0.0f64;
    for (h, r) in hyps.iter().zip(refs) {
        let (m, _) = clipped_matches(h, r, n);
        let ht = if h.len() >= n { (h.len() - n + 1) as f64 } else { 0.0 };
        let rt = if r.len() >= n { (r.len() - n + 1) as f64 } else { 0.0 };
        if ht == 0.0 || rt == 0.0 {
            continue;
        }
        total += f1(m as f64 / ht, m as f64 / rt);
    }
    Ok(100.0 * total / hyps.len() as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: mean per-pair F1 where precision and recall come from the length
/// of the longest common subsequence.
pub fn rouge_l(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    let mut total = 0.0f64;
    for (h, r) in hyps.iter().zip(refs) {
        if h.is_empty() || r.is_empty() {
            continue;
        }
        let l = lcs_len(h, r) as f64;
        total += f1(l / h.len() as f64, l / r.len() as f64);
    }
    Ok(100.0 * total / hyps.len() as f64)
}

/// Leftmost-greedy exact alignment: hyp positions in order, each matched to
/// the leftmost unused reference position holding the same token. Returns
/// (matches, chunks), where a chunk is a maximal run of pairs contiguous in
/// both sequences.
pub fn greedy_alignment(hyp: &[String], rf: &[String]) -> (usize, usize) {
    let mut used = vec![false; rf.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in hyp.iter().enumerate() {
        for (j, rtok) in rf.iter().enumerate() {
            if !used[j] && rtok == tok {
                used[j] = true;
                pairs.push((i, j));
                break;
            }
        }
    }
    let mut chunks = 0usize;
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        if idx == 0 || pairs[idx - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)) {
            chunks += 1;
        }
    }
    (pairs.len(), chunks)
}

/// Exact-match unigram score: harmonic mean weighted toward recall,
/// F = 10PR / (R + 9P), discounted by the fragmentation penalty
/// 0.5 * (chunks / matches)^3. Zero matches score 0. Corpus mean.
pub fn meteor_lite(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    let mut total = 0.0f64;
    for (h, r) in hyps.iter().zip(refs) {
        let (m, chunks) = greedy_alignment(h, r);
        if m == 0 {
            continue;
        }
        let p = m as f64 / h.len() as f64;
        let rc = m as f64 / r.len() as f64;
        let fmean = 10.0 * p * rc / (rc + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
        total += fmean * (1.0 - penalty);
    }
    Ok(100.0 * total / hyps.len() as f64)
}

/// All metrics of one corpus comparison, 0..100 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub corpus_size: usize,
    pub acc: f64,
    pub bleu: f64,
    pub meteor: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl MetricReport {
    pub fn compute(hyps: &[TokenSequence], refs: &[TokenSequence]) -> Result<Self> {
        Ok(MetricReport {
            corpus_size: hyps.len(),
            acc: token_accuracy(hyps, refs)?,
            bleu: bleu(hyps, refs)?,
            meteor: meteor_lite(hyps, refs)?,
            rouge1: rouge_n(hyps, refs, 1)?,
            rouge2: rouge_n(hyps, refs, 2)?,
            rouge_l: rouge_l(hyps, refs)?,
        })
    }

    /// Flat key=value lines, one metric per line.
    pub fn to_lines(&self) -> Vec<String> {
        vec![
            format!("corpus_size={}", self.corpus_size),
            format!("acc={:.4}", self.acc),
            format!("bleu={:.4}", self.bleu),
            format!("meteor={:.4}", self.meteor),
            format!("rouge1={:.4}", self.rouge1),
            format!("rouge2={:.4}", self.rouge2),
            format!("rougeL={:.4}", self.rouge_l),
        ]
    }
}
