//! Fire strengths and rule-output combination.

use crate::error::{Error, Result};
use crate::fuzzy_core::delegates::Delegate;
use crate::numerics::tensor::Tensor;
use crate::tokenization::features::cosine;

#[derive(Clone, Debug, PartialEq)]
pub struct FireStrengthVector {
    /// Cosine similarity to each delegate, clamped below at 0.
    pub raw: Vec<f64>,
    /// raw / sum(raw); uniform when every raw strength is 0.
    pub normalized: Vec<f64>,
}

impl FireStrengthVector {
    /// Index of the strongest rule, ties to the smaller index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.normalized.iter().enumerate() {
            if v > self.normalized[best] {
                best = i;
            }
        }
        best
    }
}

pub fn fire_strengths(x: &[f32], delegates: &[Delegate]) -> Result<FireStrengthVector> {
    if delegates.is_empty() {
        return Err(Error::contract("fire strengths over zero rules"));
    }
    let mut raw = Vec::with_capacity(delegates.len());
    for d in delegates {
        if d.feature.len() != x.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![x.len()],
                got: vec![d.feature.len()],
            });
        }
        raw.push(f64::max(cosine(x, &d.feature) as f64, 0.0));
    }
    let sum: f64 = raw.iter().sum();
    let normalized = if sum == 0.0 {
        vec![1.0 / raw.len() as f64; raw.len()]
    } else {
        raw.iter().map(|&v| v / sum).collect()
    };
    Ok(FireStrengthVector { raw, normalized })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineMode {
    /// Per-rule outputs share one coordinate system: weighted average.
    Aligned,
    /// Outputs are not comparable elementwise: take the strongest rule's.
    Unaligned,
}

/// Merges per-rule outputs under the given mode. A one-hot normalized vector
/// makes both modes agree exactly.
pub fn combine(outputs: &[Tensor], fire: &FireStrengthVector, mode: CombineMode) -> Result<Tensor> {
    if outputs.is_empty() {
        return Err(Error::contract("combine over zero outputs"));
    }
    if outputs.len() != fire.normalized.len() {
        return Err(Error::contract(format!(
            "{} outputs but {} fire strengths",
            outputs.len(),
            fire.normalized.len()
        )));
    }
    match mode {
        CombineMode::Unaligned => Ok(outputs[fire.argmax()].clone()),
        CombineMode::Aligned => {
            let shape = outputs[0].shape().to_vec();
            for o in outputs {
                if o.shape() != shape.as_slice() {
                    return Err(Error::ShapeMismatch {
                        expected: shape,
                        got: o.shape().to_vec(),
                    });
                }
            }
            let mut acc = vec![0.0f64; outputs[0].numel()];
            for (o, &w) in outputs.iter().zip(&fire.normalized) {
                for (a, &v) in acc.iter_mut().zip(o.data()) {
                    *a += w * v as f64;
                }
            }
            Tensor::new(shape, acc.into_iter().map(|v| v as f32).collect())
        }
    }
}
