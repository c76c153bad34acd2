//! Multi-scale sub-word tokenization with similarity-based routing.
//!
//! Training fits one BPE model per scale (ascending merge budgets) and elects
//! one delegate token per scale by fuzzy clustering of token features. Scales
//! are paired to clusters by mean corpus frequency: the rarest cluster gets
//! the smallest merge budget, so rare words split into more, more frequent
//! pieces while common words stay whole. Each input word is then routed to
//! the scale of its most similar delegate (maximum defuzzification) and split
//! by that scale's model; punctuation tokens pass through unsplit.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fuzzy_core::delegates::{elect_delegates, Delegate};
use crate::fuzzy_core::fire::fire_strengths;
use crate::tokenization::basic::basic_tokenize;
use crate::tokenization::bpe::{apply_bpe, train_bpe, SubwordModel};
use crate::tokenization::features::TokenFeature;
use crate::tokenization::TokenSequence;

pub const TOKENIZER_MAGIC: &str = "genfs-tok v1";
const FEATURE_WEIGHTS: [f32; 3] = [1.0, 0.5, 0.5];

#[derive(Clone, Debug)]
pub struct FuzzyTokenizerOptions {
    /// Merge budgets, strictly ascending; one scale per entry.
    pub scales: Vec<usize>,
    pub seed: u64,
    /// Expert override: delegate tokens pinned per scale, bypassing election.
    pub delegate_override: Option<Vec<String>>,
}

impl Default for FuzzyTokenizerOptions {
    fn default() -> Self {
        FuzzyTokenizerOptions { scales: vec![256, 2048, 8192], seed: 0, delegate_override: None }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzyTokenizer {
    /// models[k] belongs to rule k; budgets ascend with k.
    models: Vec<SubwordModel>,
    /// Per rule: the delegate token and its similarity feature.
    delegates: Vec<(String, Delegate)>,
    /// Corpus word frequencies, kept so unseen inputs featurize consistently.
    freqs: BTreeMap<String, u64>,
}

fn is_word(token: &str) -> bool {
    token.chars().next().is_some_and(|c| c.is_alphanumeric())
}

impl FuzzyTokenizer {
    pub fn train(corpus: &[String], opts: &FuzzyTokenizerOptions) -> Result<Self> {
        if opts.scales.is_empty() {
            return Err(Error::config("tokenizer needs at least one scale".to_string()));
        }
        if opts.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "scales must strictly ascend, got {:?}",
                opts.scales
            )));
        }
        let mut freqs: BTreeMap<String, u64> = BTreeMap::new();
        for text in corpus {
            for tok in basic_tokenize(text) {
                if is_word(&tok) {
                    *freqs.entry(tok).or_insert(0) += 1;
                }
            }
        }
        if freqs.is_empty() {
            return Err(Error::contract("no word tokens in tokenizer training corpus"));
        }
        let k = opts.scales.len();
        if freqs.len() < k {
            return Err(Error::config(format!(
                "{} distinct words cannot support {k} scales",
                freqs.len()
            )));
        }

        let models: Vec<SubwordModel> = opts
            .scales
            .iter()
            .enumerate()
            .map(|(i, &budget)| train_bpe(&freqs, budget, i))
            .collect();

        let words: Vec<&String> = freqs.keys().collect();
        let features: Vec<Vec<f32>> = words
            .iter()
            .map(|w| TokenFeature::new(w, freqs[w.as_str()]).vector())
            .collect();

        let delegates: Vec<(String, Delegate)> = match &opts.delegate_override {
            Some(tokens) => {
                if tokens.len() != k {
                    return Err(Error::config(format!(
                        "{} override delegates for {k} scales",
                        tokens.len()
                    )));
                }
                tokens
                    .iter()
                    .enumerate()
                    .map(|(rule, tok)| {
                        let source_id = words
                            .iter()
                            .position(|w| *w == tok)
                            .ok_or_else(|| {
                                Error::config(format!("override delegate {tok:?} not in corpus"))
                            })?;
                        Ok((
                            tok.clone(),
                            Delegate { rule, source_id, feature: features[source_id].clone() },
                        ))
                    })
                    .collect::<Result<_>>()?
            }
            None => {
                let (elected, state) = elect_delegates(&features, k, opts.seed)?;
                // Hard-assign each word to its strongest cluster and order
                // clusters by mean member frequency, rarest first, so that
                // cluster ranks line up with ascending merge budgets.
                let mut sums = vec![(0.0f64, 0u64); k];
                for (j, row) in state.memberships.iter().enumerate() {
                    let mut best = 0;
                    for c in 1..k {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    sums[best].0 += freqs[words[j].as_str()] as f64;
                    sums[best].1 += 1;
                }
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| {
                    let mean = |c: usize| {
                        if sums[c].1 == 0 {
                            f64::INFINITY
                        } else {
                            sums[c].0 / sums[c].1 as f64
                        }
                    };
                    mean(a).partial_cmp(&mean(b)).unwrap().then(a.cmp(&b))
                });
                order
                    .into_iter()
                    .enumerate()
                    .map(|(rule, cluster)| {
                        let d = &elected[cluster];
                        (
                            words[d.source_id].clone(),
                            Delegate { rule, source_id: d.source_id, feature: d.feature.clone() },
                        )
                    })
                    .collect()
            }
        };

        Ok(FuzzyTokenizer { models, delegates, freqs })
    }

    pub fn scale_count(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[SubwordModel] {
        &self.models
    }

    pub fn delegate_tokens(&self) -> Vec<&str> {
        self.delegates.iter().map(|(t, _)| t.as_str()).collect()
    }

    pub fn word_freq(&self, word: &str) -> u64 {
        self.freqs.get(word).copied().unwrap_or(0)
    }

    fn feature_of(&self, word: &str) -> Vec<f32> {
        TokenFeature::new(word, self.word_freq(word)).vector()
    }

    /// Scale index the word routes to: argmax similarity over delegates, ties
    /// and the all-zero case resolving to rule 0.
    pub fn route(&self, word: &str) -> Result<usize> {
        if word.is_empty() {
            return Err(Error::contract("route on empty word"));
        }
        let feature = self.feature_of(word);
        let ds: Vec<Delegate> = self.delegates.iter().map(|(_, d)| d.clone()).collect();
        Ok(fire_strengths(&feature, &ds)?.argmax())
    }

    /// Splits one word with its routed scale. Non-word tokens pass through.
    pub fn tokenize_word(&self, word: &str) -> Result<Vec<String>> {
        if word.is_empty() {
            return Err(Error::contract("tokenize_word on empty word"));
        }
        if !is_word(word) {
            return Ok(vec![word.to_string()]);
        }
        apply_bpe(&self.models[self.route(word)?], word)
    }

    pub fn tokenize_sequence(&self, text: &str) -> Result<TokenSequence> {
        let mut out = Vec::new();
        for tok in basic_tokenize(text) {
            out.extend(self.tokenize_word(&tok)?);
        }
        Ok(out)
    }

    /// Text serialization: header, per-scale merge sections, delegate tokens
    /// with the block weights, and the word-frequency table that features
    /// depend on.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        lines.push(format!("{TOKENIZER_MAGIC} K={}", self.models.len()));
        for m in &self.models {
            lines.push(format!("scale {} merges {}", m.scale_id, m.merge_count()));
            for (a, b) in m.merges() {
                lines.push(format!("{a} {b}"));
            }
        }
        lines.push(format!("delegates {}", self.delegates.len()));
        for (rule, (tok, _)) in self.delegates.iter().enumerate() {
            lines.push(format!("rule {rule} token {tok}"));
        }
        lines.push(format!(
            "weights {} {} {}",
            FEATURE_WEIGHTS[0], FEATURE_WEIGHTS[1], FEATURE_WEIGHTS[2]
        ));
        lines.push(format!("freqs {}", self.freqs.len()));
        for (w, f) in &self.freqs {
            lines.push(format!("{w} {f}"));
        }
        lines
    }

    pub fn from_lines(lines: &[String]) -> Result<Self> {
        struct Cursor<'a> {
            lines: &'a [String],
            pos: usize,
        }
        impl<'a> Cursor<'a> {
            fn next(&mut self, what: &str) -> Result<&'a String> {
                let line = self.lines.get(self.pos).ok_or_else(|| Error::Parse {
                    line: self.pos + 1,
                    msg: format!("unexpected end of file, expected {what}"),
                })?;
                self.pos += 1;
                Ok(line)
            }
        }
        let mut cur = Cursor { lines, pos: 0 };

        let header = cur.next("header")?;
        let k: usize = header
            .strip_prefix(TOKENIZER_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("K="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Version(header.clone()))?;
        if k == 0 {
            return Err(Error::Parse { line: 1, msg: "K must be positive".into() });
        }

        let mut models = Vec::with_capacity(k);
        for want in 0..k {
            let head = cur.next("scale header")?.clone();
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "scale" || parts[2] != "merges" {
                return Err(Error::Parse { line: cur.pos, msg: format!("bad scale header {head:?}") });
            }
            let id: usize = parts[1]
                .parse()
                .map_err(|_| Error::Parse { line: cur.pos, msg: "bad scale id".into() })?;
            if id != want {
                return Err(Error::Parse {
                    line: cur.pos,
                    msg: format!("scale {id} out of order, expected {want}"),
                });
            }
            let count: usize = parts[3]
                .parse()
                .map_err(|_| Error::Parse { line: cur.pos, msg: "bad merge count".into() })?;
            let mut merges = Vec::with_capacity(count);
            for _ in 0..count {
                let line = cur.next("merge pair")?;
                let mut it = line.split_whitespace();
                match (it.next(), it.next(), it.next()) {
                    (Some(a), Some(b), None) => merges.push((a.to_string(), b.to_string())),
                    _ => {
                        return Err(Error::Parse {
                            line: cur.pos,
                            msg: format!("bad merge pair {line:?}"),
                        })
                    }
                }
            }
            models.push(SubwordModel::from_merges(id, merges));
        }

        let head = cur.next("delegates header")?;
        let dcount: usize = head
            .strip_prefix("delegates ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse { line: cur.pos, msg: format!("bad delegates header {head:?}") })?;
        if dcount != k {
            return Err(Error::Parse {
                line: cur.pos,
                msg: format!("{dcount} delegates for {k} scales"),
            });
        }
        let mut delegate_tokens = Vec::with_capacity(k);
        for want in 0..k {
            let line = cur.next("delegate")?.clone();
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "rule" || parts[2] != "token" {
                return Err(Error::Parse { line: cur.pos, msg: format!("bad delegate line {line:?}") });
            }
            let rule: usize = parts[1]
                .parse()
                .map_err(|_| Error::Parse { line: cur.pos, msg: "bad rule index".into() })?;
            if rule != want {
                return Err(Error::Parse {
                    line: cur.pos,
                    msg: format!("rule {rule} out of order, expected {want}"),
                });
            }
            delegate_tokens.push(parts[3].to_string());
        }

        let weights = cur.next("weights")?;
        let expected = format!(
            "weights {} {} {}",
            FEATURE_WEIGHTS[0], FEATURE_WEIGHTS[1], FEATURE_WEIGHTS[2]
        );
        if weights != &expected {
            return Err(Error::Parse {
                line: cur.pos,
                msg: format!("unsupported feature weights {weights:?}"),
            });
        }

        let head = cur.next("freqs header")?;
        let fcount: usize = head
            .strip_prefix("freqs ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse { line: cur.pos, msg: format!("bad freqs header {head:?}") })?;
        let mut freqs = BTreeMap::new();
        for _ in 0..fcount {
            let line = cur.next("frequency entry")?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(w), Some(f), None) => {
                    let f: u64 = f
                        .parse()
                        .map_err(|_| Error::Parse { line: cur.pos, msg: "bad frequency".into() })?;
                    freqs.insert(w.to_string(), f);
                }
                _ => return Err(Error::Parse { line: cur.pos, msg: format!("bad entry {line:?}") }),
            }
        }
        if cur.pos != lines.len() {
            return Err(Error::Parse { line: cur.pos + 1, msg: "trailing content".into() });
        }

        let delegates: Vec<(String, Delegate)> = delegate_tokens
            .into_iter()
            .enumerate()
            .map(|(rule, tok)| {
                let freq = freqs.get(&tok).copied().ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: format!("delegate {tok:?} missing from frequency table"),
                })?;
                let feature = TokenFeature::new(&tok, freq).vector();
                Ok((tok, Delegate { rule, source_id: rule, feature }))
            })
            .collect::<Result<_>>()?;

        Ok(FuzzyTokenizer { models, delegates, freqs })
    }
}
