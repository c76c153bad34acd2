//! Adam with bias-corrected first and second moments.

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(lr: f32, beta1: f32, beta2: f32, eps: f32) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate {lr} must be positive")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(eps > 0.0) {
            return Err(Error::config(format!("eps {eps} must be positive")));
        }
        Ok(AdamState { lr, beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn with_defaults(lr: f32) -> Result<Self> {
        AdamState::new(lr, 0.9, 0.999, 1e-8)
    }

    /// One update over a fixed parameter list. The list length and per-slot
    /// shapes must stay identical across calls; moment buffers are allocated
    /// on first use. The step counter increments before bias correction, so
    /// the first call corrects with t = 1.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::contract(format!(
                "{} params but {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} params, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - (self.beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (self.beta2 as f64).powi(self.step as i32);

        for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if param.shape() != grad.shape() {
                return Err(Error::ShapeMismatch {
                    expected: param.shape().to_vec(),
                    got: grad.shape().to_vec(),
                });
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite("gradient"));
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1 as f32;
                let vhat = *vi / bc2 as f32;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Squared-L2 penalty gamma * sum over tensors of sum(p^2), built on the tape
/// so its gradient (2 gamma p) flows into the same backward pass as the loss.
pub fn l2_penalty(tape: &mut Tape, params: &[Var], gamma: f32) -> Result<Var> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("gamma {gamma} must be positive")));
    }
    let mut total: Option<Var> = None;
    for &p in params {
        let sq = tape.mul(p, p)?;
        let s = tape.sum(sq);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    let total = total.ok_or_else(|| Error::contract("l2 penalty over empty parameter list"))?;
    Ok(tape.scale(total, gamma))
}
