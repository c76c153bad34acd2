//! One complete encoder-decoder generator: shared token embedding, stacked
//! pre-norm layers with final norms, and a vocabulary-sized output head.
//! A fuzzy model owns one of these per rule.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{ops, Tape, Tensor, Var};
use crate::transformer::blocks::{DecoderLayer, EncoderLayer, LayerNormParams};
use crate::transformer::init::{positional_encoding, Initializer};
use crate::transformer::{ParamId, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f32,
    /// Longest token sequence (before the start marker is prepended).
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            dropout: 0.1,
            max_len: 64,
            vocab_size: 0,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return Err(Error::config("transformer dimensions must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_len == 0 {
            return Err(Error::config("max_len must be positive"));
        }
        if self.vocab_size < 4 {
            return Err(Error::config(format!(
                "vocab_size {} too small for reserved ids",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TransformerConsequent {
    cfg: TransformerConfig,
    emb: ParamId,
    enc_layers: Vec<EncoderLayer>,
    enc_ln: LayerNormParams,
    dec_layers: Vec<DecoderLayer>,
    dec_ln: LayerNormParams,
    w_out: ParamId,
    b_out: ParamId,
    /// Fixed sinusoid table, (max_len + 1) rows; not a parameter.
    pe: Tensor,
}

impl TransformerConsequent {
    /// Registers all parameters under `prefix` in build order: embedding,
    /// encoder layers, encoder norm, decoder layers, decoder norm, output
    /// head. The order is stable and checkpoint-visible.
    pub fn build(
        ps: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        cfg: &TransformerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let emb = ps.add(format!("{prefix}.emb"), init.normal(cfg.vocab_size, cfg.d_model, 0.02)?)?;
        let mut enc_layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            enc_layers.push(EncoderLayer::build(
                ps,
                init,
                &format!("{prefix}.enc{l}"),
                cfg.d_model,
                cfg.n_heads,
                cfg.d_ff,
            )?);
        }
        let enc_ln = LayerNormParams::build(ps, init, &format!("{prefix}.encln"), cfg.d_model)?;
        let mut dec_layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            dec_layers.push(DecoderLayer::build(
                ps,
                init,
                &format!("{prefix}.dec{l}"),
                cfg.d_model,
                cfg.n_heads,
                cfg.d_ff,
            )?);
        }
        let dec_ln = LayerNormParams::build(ps, init, &format!("{prefix}.decln"), cfg.d_model)?;
        let w_out = ps.add(format!("{prefix}.out.w"), init.xavier(cfg.d_model, cfg.vocab_size)?)?;
        let b_out = ps.add(format!("{prefix}.out.b"), init.zeros_vec(cfg.vocab_size))?;
        let pe = positional_encoding(cfg.max_len + 1, cfg.d_model)?;
        Ok(TransformerConsequent {
            cfg: cfg.clone(),
            emb,
            enc_layers,
            enc_ln,
            dec_layers,
            dec_ln,
            w_out,
            b_out,
            pe,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    /// Embeds `ids` with a start marker prepended, scales by sqrt(width),
    /// and adds the position table. An empty `ids` embeds just the marker.
    fn embed(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        bos: usize,
        ids: &[usize],
        dropout: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if ids.len() > self.cfg.max_len {
            return Err(Error::contract("sequence exceeds configured max_len"));
        }
        let mut with_bos = Vec::with_capacity(ids.len() + 1);
        with_bos.push(bos);
        with_bos.extend_from_slice(ids);
        let x = tape.embedding(vars[self.emb.0], &with_bos)?;
        let x = tape.scale(x, (self.cfg.d_model as f32).sqrt());
        let rows = with_bos.len();
        let pe_slice = Tensor::new(
            vec![rows, self.cfg.d_model],
            self.pe.data()[..rows * self.cfg.d_model].to_vec(),
        )?;
        let pe = tape.constant(pe_slice);
        let x = tape.add(x, pe)?;
        tape.dropout(x, dropout, rng)
    }

    /// Encodes the source (with start marker) into memory rows.
    pub fn encode(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        bos: usize,
        src: &[usize],
        dropout: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let mut x = self.embed(tape, vars, bos, src, dropout, rng)?;
        for layer in &self.enc_layers {
            x = layer.forward(tape, vars, x, dropout, rng)?;
        }
        self.enc_ln.forward(tape, vars, x)
    }

    /// Decodes a target prefix against encoder memory. Returns logits with
    /// one row per prefix position (start marker included), vocab columns.
    pub fn decode(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        enc: Var,
        bos: usize,
        tgt_prefix: &[usize],
        dropout: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let mut x = self.embed(tape, vars, bos, tgt_prefix, dropout, rng)?;
        for layer in &self.dec_layers {
            x = layer.forward(tape, vars, x, enc, dropout, rng)?;
        }
        let x = self.dec_ln.forward(tape, vars, x)?;
        let logits = tape.matmul(x, vars[self.w_out.0])?;
        tape.add_row_bias(logits, vars[self.b_out.0])
    }

    /// Row-softmax of decode logits, computed off-tape: the prediction
    /// matrix whose rows are next-token distributions.
    pub fn prediction_matrix(&self, tape: &Tape, logits: Var) -> Result<Tensor> {
        ops::softmax(tape.value(logits), 1)
    }
}
