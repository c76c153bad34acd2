//! Sub-layer building blocks: attention, feed-forward, and the pre-norm
//! residual layers built from them. Each block owns parameter ids and builds
//! its piece of the graph on a caller-provided tape.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Tape, Var};
use crate::transformer::init::Initializer;
use crate::transformer::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum AttnMask {
    /// Every query row attends to all key rows.
    Open,
    /// Query row i attends to key rows 0..=i; requires square scores.
    Causal,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerNormParams {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNormParams {
    pub fn build(ps: &mut ParamStore, init: &mut Initializer, prefix: &str, d: usize) -> Result<Self> {
        Ok(LayerNormParams {
            gamma: ps.add(format!("{prefix}.g"), init.ones_vec(d)?)?,
            beta: ps.add(format!("{prefix}.b"), init.zeros_vec(d))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        tape.layer_norm(x, vars[self.gamma.0], vars[self.beta.0])
    }
}

/// Multi-head attention with per-head projections. Head outputs are mapped
/// back to model width by per-head output matrices and summed, which equals
/// the usual concat-then-project form without a concat primitive.
#[derive(Clone, Debug)]
pub(crate) struct AttentionParams {
    wq: Vec<ParamId>,
    wk: Vec<ParamId>,
    wv: Vec<ParamId>,
    wo: Vec<ParamId>,
    bo: ParamId,
    d_head: usize,
}

impl AttentionParams {
    pub fn build(
        ps: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
    ) -> Result<Self> {
        let d_head = d_model / n_heads;
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        let mut wo = Vec::new();
        for h in 0..n_heads {
            wq.push(ps.add(format!("{prefix}.h{h}.wq"), init.xavier(d_model, d_head)?)?);
            wk.push(ps.add(format!("{prefix}.h{h}.wk"), init.xavier(d_model, d_head)?)?);
            wv.push(ps.add(format!("{prefix}.h{h}.wv"), init.xavier(d_model, d_head)?)?);
            wo.push(ps.add(format!("{prefix}.h{h}.wo"), init.xavier(d_head, d_model)?)?);
        }
        let bo = ps.add(format!("{prefix}.bo"), init.zeros_vec(d_model))?;
        Ok(AttentionParams { wq, wk, wv, wo, bo, d_head })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        queries: Var,
        memory: Var,
        mask: AttnMask,
    ) -> Result<Var> {
        let scale = 1.0 / (self.d_head as f32).sqrt();
        let mut acc: Option<Var> = None;
        for h in 0..self.wq.len() {
            let q = tape.matmul(queries, vars[self.wq[h].0])?;
            let k = tape.matmul(memory, vars[self.wk[h].0])?;
            let v = tape.matmul(memory, vars[self.wv[h].0])?;
            let scores = tape.matmul_nt(q, k)?;
            let scores = tape.scale(scores, scale);
            let attn = match mask {
                AttnMask::Open => tape.softmax(scores, 1)?,
                AttnMask::Causal => tape.causal_softmax_rows(scores)?,
            };
            let ctx = tape.matmul(attn, v)?;
            let out = tape.matmul(ctx, vars[self.wo[h].0])?;
            acc = Some(match acc {
                Some(a) => tape.add(a, out)?,
                None => out,
            });
        }
        tape.add_row_bias(acc.expect("at least one head"), vars[self.bo.0])
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FfnParams {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FfnParams {
    pub fn build(
        ps: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        d_model: usize,
        d_ff: usize,
    ) -> Result<Self> {
        Ok(FfnParams {
            w1: ps.add(format!("{prefix}.w1"), init.xavier(d_model, d_ff)?)?,
            b1: ps.add(format!("{prefix}.b1"), init.zeros_vec(d_ff))?,
            w2: ps.add(format!("{prefix}.w2"), init.xavier(d_ff, d_model)?)?,
            b2: ps.add(format!("{prefix}.b2"), init.zeros_vec(d_model))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[self.w1.0])?;
        let h = tape.add_row_bias(h, vars[self.b1.0])?;
        let h = tape.relu(h);
        let out = tape.matmul(h, vars[self.w2.0])?;
        tape.add_row_bias(out, vars[self.b2.0])
    }
}

/// Pre-norm encoder layer: x + drop(attn(ln(x))), then x + drop(ffn(ln(x))).
#[derive(Clone, Debug)]
pub(crate) struct EncoderLayer {
    ln1: LayerNormParams,
    attn: AttentionParams,
    ln2: LayerNormParams,
    ffn: FfnParams,
}

impl EncoderLayer {
    pub fn build(
        ps: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
    ) -> Result<Self> {
        Ok(EncoderLayer {
            ln1: LayerNormParams::build(ps, init, &format!("{prefix}.ln1"), d_model)?,
            attn: AttentionParams::build(ps, init, &format!("{prefix}.attn"), d_model, n_heads)?,
            ln2: LayerNormParams::build(ps, init, &format!("{prefix}.ln2"), d_model)?,
            ffn: FfnParams::build(ps, init, &format!("{prefix}.ffn"), d_model, d_ff)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        dropout: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let n = self.ln1.forward(tape, vars, x)?;
        let a = self.attn.forward(tape, vars, n, n, AttnMask::Open)?;
        let a = tape.dropout(a, dropout, rng)?;
        let x = tape.add(x, a)?;
        let n = self.ln2.forward(tape, vars, x)?;
        let f = self.ffn.forward(tape, vars, n)?;
        let f = tape.dropout(f, dropout, rng)?;
        tape.add(x, f)
    }
}

/// Pre-norm decoder layer: causal self-attention, cross-attention over the
/// encoder output, then the feed-forward, each behind its own norm and
/// residual.
#[derive(Clone, Debug)]
pub(crate) struct DecoderLayer {
    ln1: LayerNormParams,
    self_attn: AttentionParams,
    ln2: LayerNormParams,
    cross_attn: AttentionParams,
    ln3: LayerNormParams,
    ffn: FfnParams,
}

impl DecoderLayer {
    pub fn build(
        ps: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
    ) -> Result<Self> {
        Ok(DecoderLayer {
            ln1: LayerNormParams::build(ps, init, &format!("{prefix}.ln1"), d_model)?,
            self_attn: AttentionParams::build(ps, init, &format!("{prefix}.self"), d_model, n_heads)?,
            ln2: LayerNormParams::build(ps, init, &format!("{prefix}.ln2"), d_model)?,
            cross_attn: AttentionParams::build(ps, init, &format!("{prefix}.cross"), d_model, n_heads)?,
            ln3: LayerNormParams::build(ps, init, &format!("{prefix}.ln3"), d_model)?,
            ffn: FfnParams::build(ps, init, &format!("{prefix}.ffn"), d_model, d_ff)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        enc: Var,
        dropout: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let n = self.ln1.forward(tape, vars, x)?;
        let a = self.self_attn.forward(tape, vars, n, n, AttnMask::Causal)?;
        let a = tape.dropout(a, dropout, rng)?;
        let x = tape.add(x, a)?;
        let n = self.ln2.forward(tape, vars, x)?;
        let c = self.cross_attn.forward(tape, vars, n, enc, AttnMask::Open)?;
        let c = tape.dropout(c, dropout, rng)?;
        let x = tape.add(x, c)?;
        let n = self.ln3.forward(tape, vars, x)?;
        let f = self.ffn.forward(tape, vars, n)?;
        let f = tape.dropout(f, dropout, rng)?;
        tape.add(x, f)
    }
}
