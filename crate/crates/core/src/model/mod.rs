//! The end-to-end fuzzy sequence generator. One routing rule per elected
//! delegate sequence, one transformer consequent per rule; rule outputs are
//! fused over logits by normalized fire strengths, softmax comes last.

mod features;
mod train;

pub use features::{sequence_feature, sequence_feature_ids, LENGTH_WEIGHT};
pub use train::{fit, EpochLog, FitReport, TrainConfig, Variant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fuzzy_core::{combine, fire_strengths, CombineMode, Delegate, FireStrengthVector};
use crate::numerics::{ops, Tape, Tensor};
use crate::tokenization::vocab::{BOS, EOS};
use crate::tokenization::{detokenize, FuzzyTokenizer, TokenSequence, Vocabulary};
use crate::transformer::{Initializer, ParamStore, TransformerConfig, TransformerConsequent};

/// What a rule's anchor sequence looked like, kept for explanations.
#[derive(Clone, Debug, PartialEq)]
pub struct DelegateSummary {
    /// Token count of the elected source sequence.
    pub source_len: usize,
    /// Its most frequent tokens (ties lexicographic), at most five.
    pub dominant_tokens: Vec<String>,
}

impl DelegateSummary {
    pub fn of_sequence(seq: &TokenSequence) -> Self {
        let mut counts = std::collections::BTreeMap::new();
        for t in seq {
            *counts.entry(t.as_str()).or_insert(0usize) += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        DelegateSummary {
            source_len: seq.len(),
            dominant_tokens: ranked.into_iter().take(5).map(|(t, _)| t.to_string()).collect(),
        }
    }
}

/// Everything a checkpoint stores; [`FuzzyS2SModel::from_parts`] rebuilds a
/// working model from it and validates the pieces against each other.
pub struct ModelParts {
    pub tokenizer: FuzzyTokenizer,
    pub vocab: Vocabulary,
    pub delegates: Vec<Delegate>,
    pub summaries: Vec<DelegateSummary>,
    pub arch: TransformerConfig,
    pub train_cfg: TrainConfig,
    pub variant: Variant,
    pub corpus_max_len: usize,
    pub tensors: Vec<(String, Tensor)>,
}

pub struct FuzzyS2SModel {
    pub(crate) tokenizer: FuzzyTokenizer,
    pub(crate) vocab: Vocabulary,
    pub(crate) delegates: Vec<Delegate>,
    pub(crate) summaries: Vec<DelegateSummary>,
    pub(crate) params: ParamStore,
    pub(crate) consequents: Vec<TransformerConsequent>,
    pub(crate) arch: TransformerConfig,
    pub(crate) train_cfg: TrainConfig,
    pub(crate) variant: Variant,
    pub(crate) corpus_max_len: usize,
}

pub(crate) fn rule_prefix(rule: usize) -> String {
    format!("rule{rule}")
}

/// Builds `rules` identical-architecture consequents into one fresh store.
pub(crate) fn build_consequents(
    rules: usize,
    arch: &TransformerConfig,
    seed: u64,
) -> Result<(ParamStore, Vec<TransformerConsequent>)> {
    let mut ps = ParamStore::new();
    let mut init = Initializer::new(seed);
    let mut cs = Vec::with_capacity(rules);
    for k in 0..rules {
        cs.push(TransformerConsequent::build(&mut ps, &mut init, &rule_prefix(k), arch)?);
    }
    Ok((ps, cs))
}

impl FuzzyS2SModel {
    pub fn rules(&self) -> usize {
        self.consequents.len()
    }

    pub fn tokenizer(&self) -> &FuzzyTokenizer {
        &self.tokenizer
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn delegates(&self) -> &[Delegate] {
        &self.delegates
    }

    pub fn summaries(&self) -> &[DelegateSummary] {
        &self.summaries
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn arch(&self) -> &TransformerConfig {
        &self.arch
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn corpus_max_len(&self) -> usize {
        self.corpus_max_len
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        self.tokenizer.tokenize_sequence(text)
    }

    /// Rule weights for one source, computed once per sequence; decode steps
    /// reuse them unchanged.
    pub fn fire_for_ids(&self, src_ids: &[usize]) -> Result<FireStrengthVector> {
        let feat = sequence_feature_ids(src_ids, self.vocab.len(), self.corpus_max_len);
        fire_strengths(&feat, &self.delegates)
    }

    pub fn fire_for_tokens(&self, src: &TokenSequence) -> Result<FireStrengthVector> {
        self.fire_for_ids(&self.vocab.w2v(src))
    }

    /// Per-rule logits for one (source, forced prefix) pair. Row r scores
    /// the token after the first r prefix tokens.
    fn rule_logits(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars = self.params.mount(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut outs = Vec::with_capacity(self.rules());
        for c in &self.consequents {
            let enc = c.encode(&mut tape, &vars, BOS, src_ids, 0.0, &mut rng)?;
            let logits = c.decode(&mut tape, &vars, enc, BOS, tgt_ids, 0.0, &mut rng)?;
            outs.push(tape.value(logits).clone());
        }
        Ok(outs)
    }

    /// Prediction matrix: softmax over the fire-strength-weighted sum of
    /// per-rule logits. Rows sum to 1; with one rule this is exactly that
    /// rule's own prediction.
    pub fn forward(&self, src: &TokenSequence, tgt_prefix: &TokenSequence) -> Result<Tensor> {
        let src_ids = self.vocab.w2v(src);
        let tgt_ids = self.vocab.w2v(tgt_prefix);
        let fire = self.fire_for_ids(&src_ids)?;
        let outs = self.rule_logits(&src_ids, &tgt_ids)?;
        let fused = combine(&outs, &fire, CombineMode::Aligned)?;
        ops::softmax(&fused, 1)
    }

    /// One rule's prediction matrix on its own, bypassing fusion.
    pub fn standalone_prediction(
        &self,
        rule: usize,
        src: &TokenSequence,
        tgt_prefix: &TokenSequence,
    ) -> Result<Tensor> {
        let c = self.consequents.get(rule).ok_or(Error::IndexOutOfBounds {
            axis: 0,
            index: rule,
            bound: self.consequents.len(),
        })?;
        let src_ids = self.vocab.w2v(src);
        let tgt_ids = self.vocab.w2v(tgt_prefix);
        let mut tape = Tape::new();
        let vars = self.params.mount(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = c.encode(&mut tape, &vars, BOS, &src_ids, 0.0, &mut rng)?;
        let logits = c.decode(&mut tape, &vars, enc, BOS, &tgt_ids, 0.0, &mut rng)?;
        ops::softmax(tape.value(logits), 1)
    }

    /// Greedy decode under explicit rule weights. Encoders run once; each
    /// step fuses the final logit row across rules (zero-weight rules are
    /// skipped, which is exact for finite logits) and takes the argmax,
    /// ties to the smaller id. Stops on the end marker or after `max_new`.
    fn greedy_ids(&self, src_ids: &[usize], weights: &[f64], max_new: usize) -> Result<Vec<usize>> {
        if weights.len() != self.rules() {
            return Err(Error::contract(format!(
                "{} weights for {} rules",
                weights.len(),
                self.rules()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.params.mount(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut encs = Vec::with_capacity(self.rules());
        for (c, &w) in self.consequents.iter().zip(weights) {
            encs.push(if w == 0.0 {
                None
            } else {
                Some(c.encode(&mut tape, &vars, BOS, src_ids, 0.0, &mut rng)?)
            });
        }
        let vsize = self.vocab.len();
        let mut out: Vec<usize> = Vec::new();
        for _ in 0..max_new {
            let mut fused = vec![0.0f64; vsize];
            for (k, c) in self.consequents.iter().enumerate() {
                let enc = match encs[k] {
                    Some(e) => e,
                    None => continue,
                };
                let logits = c.decode(&mut tape, &vars, enc, BOS, &out, 0.0, &mut rng)?;
                let lv = tape.value(logits);
                let rows = lv.shape()[0];
                let row = &lv.data()[(rows - 1) * vsize..];
                for (f, &v) in fused.iter_mut().zip(row) {
                    *f += weights[k] * v as f64;
                }
            }
            let mut best = 0usize;
            for (j, &v) in fused.iter().enumerate().skip(1) {
                if v > fused[best] {
                    best = j;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Greedy generation for one tokenized source. The result carries no
    /// start or end markers.
    pub fn generate(&self, src: &TokenSequence, max_new: usize) -> Result<TokenSequence> {
        let src_ids = self.vocab.w2v(src);
        let fire = self.fire_for_ids(&src_ids)?;
        let ids = self.greedy_ids(&src_ids, &fire.normalized, max_new.min(self.arch.max_len))?;
        self.vocab.v2w(&ids)
    }

    /// Tokenize, generate, detokenize.
    pub fn generate_text(&self, text: &str) -> Result<String> {
        let src = self.tokenize(text)?;
        let out = self.generate(&src, self.arch.max_len)?;
        Ok(detokenize(&out))
    }

    /// Per-rule view of one generation: strengths, anchor summaries, what
    /// each rule would emit alone, and the fused result.
    pub fn explain(&self, src: &TokenSequence, max_new: usize) -> Result<Explanation> {
        let src_ids = self.vocab.w2v(src);
        let fire = self.fire_for_ids(&src_ids)?;
        let cap = max_new.min(self.arch.max_len);
        let mut rules = Vec::with_capacity(self.rules());
        for k in 0..self.rules() {
            let mut w = vec![0.0f64; self.rules()];
            w[k] = 1.0;
            let ids = self.greedy_ids(&src_ids, &w, cap)?;
            rules.push(RuleExplanation {
                rule: k,
                raw_strength: fire.raw[k],
                normalized_strength: fire.normalized[k],
                summary: self.summaries[k].clone(),
                standalone_output: self.vocab.v2w(&ids)?,
            });
        }
        let fused_ids = self.greedy_ids(&src_ids, &fire.normalized, cap)?;
        Ok(Explanation {
            rules,
            argmax_rule: fire.argmax(),
            fused_output: self.vocab.v2w(&fused_ids)?,
        })
    }

    /// Rebuilds a model from checkpoint parts. Every architecture parameter
    /// must be covered by exactly the stored tensor set, name for name.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            tokenizer,
            vocab,
            delegates,
            summaries,
            arch,
            train_cfg,
            variant,
            corpus_max_len,
            tensors,
        } = parts;
        train_cfg.validate()?;
        let rules = delegates.len();
        if rules == 0 {
            return Err(Error::config("model needs at least one rule"));
        }
        if rules != variant.rules(train_cfg.rules) {
            return Err(Error::config(format!(
                "{} delegates but the {} variant of this config trains {} rules",
                rules,
                variant.as_str(),
                variant.rules(train_cfg.rules)
            )));
        }
        if summaries.len() != rules {
            return Err(Error::config(format!(
                "{} delegate summaries for {} rules",
                summaries.len(),
                rules
            )));
        }
        if arch.vocab_size != vocab.len() {
            return Err(Error::config(format!(
                "architecture speaks {} tokens but the vocabulary holds {}",
                arch.vocab_size,
                vocab.len()
            )));
        }
        for d in &delegates {
            if d.feature.len() != vocab.len() + 1 {
                return Err(Error::config(format!(
                    "delegate feature width {} does not fit vocabulary {} plus length",
                    d.feature.len(),
                    vocab.len()
                )));
            }
        }
        let (mut params, consequents) = build_consequents(rules, &arch, 0)?;
        if tensors.len() != params.len() {
            return Err(Error::config(format!(
                "checkpoint stores {} tensors, architecture has {}",
                tensors.len(),
                params.len()
            )));
        }
        for (name, t) in tensors {
            params.set_by_name(&name, t)?;
        }
        Ok(FuzzyS2SModel {
            tokenizer,
            vocab,
            delegates,
            summaries,
            params,
            consequents,
            arch,
            train_cfg,
            variant,
            corpus_max_len,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RuleExplanation {
    pub rule: usize,
    pub raw_strength: f64,
    pub normalized_strength: f64,
    pub summary: DelegateSummary,
    pub standalone_output: TokenSequence,
}

#[derive(Clone, Debug)]
pub struct Explanation {
    pub rules: Vec<RuleExplanation>,
    /// Rule the maximum-strength branch would pick.
    pub argmax_rule: usize,
    pub fused_output: TokenSequence,
}

impl Explanation {
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("rules {}", self.rules.len())];
        for r in &self.rules {
            lines.push(format!(
                "rule {} raw {:.6} normalized {:.6} anchor_len {} anchor_tokens {}",
                r.rule,
                r.raw_strength,
                r.normalized_strength,
                r.summary.source_len,
                r.summary.dominant_tokens.join(" ")
            ));
            lines.push(format!("rule {} output {}", r.rule, detokenize(&r.standalone_output)));
        }
        lines.push(format!("argmax_rule {}", self.argmax_rule));
        lines.push(format!("fused {}", detokenize(&self.fused_output)));
        lines
    }
}

pub(crate) fn argmax_row(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use rand::Rng;

    pub fn tiny_arch() -> TransformerConfig {
        TransformerConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout: 0.0,
            max_len: 12,
            vocab_size: 0,
        }
    }

    /// Echo corpus over a handful of words: target repeats the source.
    pub fn echo_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
        let words = ["ada", "bix", "cor", "dun", "eel", "fam"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=4);
                let text = (0..len)
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ");
                (text.clone(), text)
            })
            .collect()
    }

    pub fn micro_fit(rules: usize, epochs: usize, variant: train::Variant) -> train::FitReport {
        let cfg = train::TrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: 3e-3,
            gamma: 1e-6,
            rules,
            seed: 5,
            max_len: 12,
            val_split: 0.2,
            early_stop_val_acc: None,
        };
        train::fit(&echo_pairs(32, 7), &echo_pairs(8, 97), &cfg, &tiny_arch(), variant).unwrap()
    }
}
