//! Byte-pair encoding over character-initialized words.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Suffix attached to every sub-word piece except the last one of a word.
pub const CONTINUATION_MARKER: &str = "@@";

/// One merge table, trained at a fixed scale (merge budget).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordModel {
    pub scale_id: usize,
    merges: Vec<(String, String)>,
}

impl SubwordModel {
    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn from_merges(scale_id: usize, merges: Vec<(String, String)>) -> Self {
        SubwordModel { scale_id, merges }
    }
}

/// Greedy most-frequent-pair training. Ties break toward the
/// lexicographically smallest pair; training stops early once no adjacent
/// pair remains, so the merge list may be shorter than the budget.
pub fn train_bpe(word_freqs: &BTreeMap<String, u64>, max_merges: usize, scale_id: usize) -> SubwordModel {
    let mut words: Vec<(Vec<String>, u64)> = word_freqs
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, &f)| (w.chars().map(String::from).collect(), f))
        .collect();

    let mut merges = Vec::new();
    for _ in 0..max_merges {
        let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, freq) in &words {
            for pair in syms.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_insert(0) += freq;
            }
        }
        // Selection by (count, pair) is a total order, so the HashMap's
        // iteration order cannot affect the result.
        let Some(best) = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|((a, b), _)| (a.to_string(), b.to_string()))
        else {
            break;
        };
        for (syms, _) in &mut words {
            merge_in_place(syms, &best.0, &best.1);
        }
        merges.push(best);
    }
    SubwordModel { scale_id, merges }
}

fn merge_in_place(syms: &mut Vec<String>, a: &str, b: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == a && syms[i + 1] == b {
            let second = syms.remove(i + 1);
            syms[i].push_str(&second);
        }
        i += 1;
    }
}

/// Splits one word into sub-word pieces; every piece except the last carries
/// the continuation marker. Characters never seen in training pass through.
pub fn apply_bpe(model: &SubwordModel, word: &str) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::contract("apply_bpe on empty word"));
    }
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    for (a, b) in &model.merges {
        merge_in_place(&mut syms, a, b);
    }
    let last = syms.len() - 1;
    for piece in &mut syms[..last] {
        piece.push_str(CONTINUATION_MARKER);
    }
    Ok(syms)
}
