//! Supervised fitting: tokenizer and vocabulary from the training split,
//! delegate election over source features, then joint gradient training of
//! every rule consequent against the fused logits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fuzzy_core::elect_delegates;
use crate::model::features::sequence_feature_ids;
use crate::model::{argmax_row, build_consequents, DelegateSummary, FuzzyS2SModel};
use crate::numerics::{l2_penalty, ops, AdamState, Tape, Var};
use crate::tokenization::vocab::{BOS, EOS, PAD};
use crate::tokenization::{FuzzyTokenizer, FuzzyTokenizerOptions, Vocabulary};
use crate::transformer::{TransformerConfig, TransformerConsequent};

/// Which pieces of the pipeline stay enabled. Ablations are cumulative:
/// dropping the generative core also drops down to one rule, giving the
/// plain single-transformer pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Single-scale subword model only; routing degenerates to one scale.
    NoTokenizer,
    /// NoTokenizer plus a single rule: the classical transformer baseline.
    NoGenfs,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTokenizer => "no-tokenizer",
            Variant::NoGenfs => "no-genfs",
        }
    }

    /// Merge budgets for the subword stage. The reduced variants keep only
    /// the largest budget, which is what a standalone subword model uses.
    pub(crate) fn scales(self) -> Vec<usize> {
        let all = FuzzyTokenizerOptions::default().scales;
        match self {
            Variant::Full => all,
            _ => vec![*all.last().expect("default scales nonempty")],
        }
    }

    /// Effective rule count given the configured one.
    pub(crate) fn rules(self, configured: usize) -> usize {
        match self {
            Variant::NoGenfs => 1,
            _ => configured,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-tokenizer" => Ok(Variant::NoTokenizer),
            "no-genfs" => Ok(Variant::NoGenfs),
            other => Err(Error::config(format!(
                "unknown variant {other:?}, expected full, no-tokenizer, or no-genfs"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Weight-decay strength of the squared-norm penalty, strictly positive.
    pub gamma: f32,
    pub rules: usize,
    pub seed: u64,
    /// Token-count cap; longer pairs are dropped with a counted warning.
    pub max_len: usize,
    /// Fraction carved off for validation by callers that split one corpus.
    pub val_split: f32,
    /// Stop once validation token accuracy reaches this fraction.
    pub early_stop_val_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            gamma: 1e-5,
            rules: 3,
            seed: 0,
            max_len: 64,
            val_split: 0.1,
            early_stop_val_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.rules == 0 || self.max_len == 0 {
            return Err(Error::config(
                "epochs, batch_size, rules, and max_len must all be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma {} must be positive and finite",
                self.gamma
            )));
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return Err(Error::config(format!(
                "val_split {} must lie strictly between 0 and 1",
                self.val_split
            )));
        }
        if let Some(t) = self.early_stop_val_acc {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::config(format!(
                    "early_stop_val_acc {t} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// One epoch of the training log. Losses are the optimized objective
/// (token cross-entropy plus the gamma penalty) for training and plain
/// cross-entropy for validation; accuracies are teacher-forced token
/// fractions in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Median batch objective, for monotonicity checks.
    pub train_loss_median: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        format!(
            "epoch={} train_loss={:.6} train_loss_median={:.6} val_loss={:.6} train_acc={:.4} val_acc={:.4}",
            self.epoch,
            self.train_loss,
            self.train_loss_median,
            self.val_loss,
            self.train_acc,
            self.val_acc
        )
    }
}

pub struct FitReport {
    pub model: FuzzyS2SModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters the model keeps (best validation accuracy,
    /// ties to the earlier epoch).
    pub best_epoch: usize,
    pub dropped_train: usize,
    pub dropped_val: usize,
}

type IdPair = (Vec<usize>, Vec<usize>);

/// Trains a model on raw (source, target) text pairs. The tokenizer, the
/// vocabulary, and the delegates are all derived from the training split
/// alone; the validation split only steers parameter selection.
pub fn fit(
    train_pairs: &[(String, String)],
    val_pairs: &[(String, String)],
    cfg: &TrainConfig,
    arch_template: &TransformerConfig,
    variant: Variant,
) -> Result<FitReport> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    if val_pairs.is_empty() {
        return Err(Error::config("validation split is empty"));
    }

    let tok_corpus: Vec<String> = train_pairs
        .iter()
        .flat_map(|(s, t)| [s.clone(), t.clone()])
        .collect();
    let tokenizer = FuzzyTokenizer::train(
        &tok_corpus,
        &FuzzyTokenizerOptions {
            scales: variant.scales(),
            seed: cfg.seed,
            delegate_override: None,
        },
    )?;

    let (train_tok, dropped_train) = tokenize_split(&tokenizer, train_pairs, cfg.max_len)?;
    let (val_tok, dropped_val) = tokenize_split(&tokenizer, val_pairs, cfg.max_len)?;
    if train_tok.is_empty() {
        return Err(Error::config(format!(
            "every training pair exceeds max_len {}",
            cfg.max_len
        )));
    }
    if val_tok.is_empty() {
        return Err(Error::config(format!(
            "every validation pair exceeds max_len {}",
            cfg.max_len
        )));
    }

    let mut vocab_corpus = Vec::with_capacity(train_tok.len() * 2);
    for (s, t) in &train_tok {
        vocab_corpus.push(s.clone());
        vocab_corpus.push(t.clone());
    }
    let vocab = Vocabulary::from_corpus(&vocab_corpus);

    let encode = |pairs: &[(Vec<String>, Vec<String>)]| -> Vec<IdPair> {
        pairs.iter().map(|(s, t)| (vocab.w2v(s), vocab.w2v(t))).collect()
    };
    let train_ids = encode(&train_tok);
    let val_ids = encode(&val_tok);

    let corpus_max_len = train_ids.iter().map(|(s, _)| s.len()).max().unwrap_or(0);

    let rules = variant.rules(cfg.rules);
    let features: Vec<Vec<f32>> = train_ids
        .iter()
        .map(|(s, _)| sequence_feature_ids(s, vocab.len(), corpus_max_len))
        .collect();
    let (delegates, _) = elect_delegates(&features, rules, cfg.seed)?;
    let summaries: Vec<DelegateSummary> = delegates
        .iter()
        .map(|d| DelegateSummary::of_sequence(&train_tok[d.source_id].0))
        .collect();

    let arch = TransformerConfig {
        vocab_size: vocab.len(),
        max_len: cfg.max_len,
        ..arch_template.clone()
    };
    let (mut params, consequents) = build_consequents(rules, &arch, cfg.seed)?;

    // Fire strengths are fixed inputs to training, never differentiated.
    let weigh = |ids: &[IdPair]| -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|(s, _)| {
                let feat = sequence_feature_ids(s, vocab.len(), corpus_max_len);
                Ok(crate::fuzzy_core::fire_strengths(&feat, &delegates)?.normalized)
            })
            .collect()
    };
    let train_fire = weigh(&train_ids)?;
    let val_fire = weigh(&val_ids)?;

    let mut adam = AdamState::new(cfg.learning_rate, 0.9, 0.999, 1e-8)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = params.clone();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_ids.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E3779B97F4A7C15));
        order.shuffle(&mut shuffle_rng);
        let mut dropout_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0xD1B54A32D192ED03));

        let mut batch_losses = Vec::new();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let vars = params.mount(&mut tape);
            let mut ce_sum: Option<Var> = None;
            for &i in batch {
                let (src, tgt) = &train_ids[i];
                let fused = fused_logits_on_tape(
                    &mut tape,
                    &vars,
                    &consequents,
                    src,
                    tgt,
                    &train_fire[i],
                    arch.dropout,
                    &mut dropout_rng,
                )?;
                let mut targets = tgt.clone();
                targets.push(EOS);
                count_matches(tape.value(fused).data(), vocab.len(), &targets, &mut correct, &mut total);
                let ce = tape.cross_entropy(fused, &targets, Some(PAD))?;
                ce_sum = Some(match ce_sum {
                    None => ce,
                    Some(acc) => tape.add(acc, ce)?,
                });
            }
            let mean_ce = tape.scale(ce_sum.expect("nonempty batch"), 1.0 / batch.len() as f32);
            let penalty = l2_penalty(&mut tape, &vars, cfg.gamma)?;
            let loss = tape.add(mean_ce, penalty)?;
            let loss_val = tape.value(loss).data()[0] as f64;
            if !loss_val.is_finite() {
                return Err(Error::State(format!(
                    "training diverged: non-finite objective at epoch {epoch}, batch {bi}"
                )));
            }
            tape.backward(loss)?;
            let grads = params.collect_grads(&tape, &vars)?;
            params.apply_step(&mut adam, &grads)?;
            batch_losses.push(loss_val);
        }

        let (val_loss, val_acc) = evaluate(&params, &consequents, &val_ids, &val_fire, vocab.len())?;
        let entry = EpochLog {
            epoch,
            train_loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
            train_loss_median: median(&batch_losses),
            val_loss,
            train_acc: correct as f64 / total.max(1) as f64,
            val_acc,
        };
        log.push(entry);

        if val_acc > best_acc {
            best_acc = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if let Some(t) = cfg.early_stop_val_acc {
            if val_acc >= t {
                break;
            }
        }
    }

    let model = FuzzyS2SModel {
        tokenizer,
        vocab,
        delegates,
        summaries,
        params: best_params,
        consequents,
        arch,
        train_cfg: cfg.clone(),
        variant,
        corpus_max_len,
    };
    Ok(FitReport { model, log, best_epoch, dropped_train, dropped_val })
}

/// Tokenizes a split, dropping pairs where either side exceeds `max_len`
/// tokens. Returns the survivors and the drop count.
fn tokenize_split(
    tokenizer: &FuzzyTokenizer,
    pairs: &[(String, String)],
    max_len: usize,
) -> Result<(Vec<(Vec<String>, Vec<String>)>, usize)> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut dropped = 0usize;
    for (s, t) in pairs {
        let st = tokenizer.tokenize_sequence(s)?;
        let tt = tokenizer.tokenize_sequence(t)?;
        if st.len() > max_len || tt.len() > max_len {
            dropped += 1;
        } else {
            out.push((st, tt));
        }
    }
    Ok((out, dropped))
}

/// Per-rule encode and decode for one pair, fused on the tape as the fire-
/// strength-weighted sum of logits. The weights enter as constants.
#[allow(clippy::too_many_arguments)]
fn fused_logits_on_tape(
    tape: &mut Tape,
    vars: &[Var],
    consequents: &[TransformerConsequent],
    src: &[usize],
    tgt: &[usize],
    weights: &[f64],
    dropout: f32,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let mut fused: Option<Var> = None;
    for (c, &w) in consequents.iter().zip(weights) {
        let enc = c.encode(tape, vars, BOS, src, dropout, rng)?;
        let logits = c.decode(tape, vars, enc, BOS, tgt, dropout, rng)?;
        let scaled = tape.scale(logits, w as f32);
        fused = Some(match fused {
            None => scaled,
            Some(acc) => tape.add(acc, scaled)?,
        });
    }
    Ok(fused.expect("at least one rule"))
}

fn count_matches(
    logits: &[f32],
    vsize: usize,
    targets: &[usize],
    correct: &mut usize,
    total: &mut usize,
) {
    for (r, &t) in targets.iter().enumerate() {
        if t == PAD {
            continue;
        }
        *total += 1;
        if argmax_row(&logits[r * vsize..(r + 1) * vsize]) == t {
            *correct += 1;
        }
    }
}

/// Validation pass: per sample, fuse rule logits in f64 off the tape (the
/// same arithmetic inference uses) and score cross-entropy plus token
/// accuracy under teacher forcing. Dropout is off.
fn evaluate(
    params: &crate::transformer::ParamStore,
    consequents: &[TransformerConsequent],
    ids: &[IdPair],
    fire: &[Vec<f64>],
    vsize: usize,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ((src, tgt), weights) in ids.iter().zip(fire) {
        let mut tape = Tape::new();
        let vars = params.mount(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = tgt.len() + 1;
        let mut fused = vec![0.0f64; rows * vsize];
        for (c, &w) in consequents.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let enc = c.encode(&mut tape, &vars, BOS, src, 0.0, &mut rng)?;
            let logits = c.decode(&mut tape, &vars, enc, BOS, tgt, 0.0, &mut rng)?;
            for (f, &v) in fused.iter_mut().zip(tape.value(logits).data()) {
                *f += w * v as f64;
            }
        }
        let fused_f32: Vec<f32> = fused.into_iter().map(|v| v as f32).collect();
        let fused_t = crate::numerics::Tensor::new(vec![rows, vsize], fused_f32)?;
        let mut targets = tgt.clone();
        targets.push(EOS);
        loss_sum += ops::cross_entropy(&fused_t, &targets, Some(PAD))? as f64;
        count_matches(fused_t.data(), vsize, &targets, &mut correct, &mut total);
    }
    Ok((
        loss_sum / ids.len() as f64,
        correct as f64 / total.max(1) as f64,
    ))
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
