//! Reverse-mode automatic differentiation over a define-by-run tape.
//!
//! Each forward pass builds a fresh tape. Node ids are handed out in creation
//! order, which is already a topological order, so backward is a single
//! reverse sweep. A node consumed by several later ops receives its gradient
//! contributions additively.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::tensor::Tensor;

/// Handle to a node on a tape. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    AddRowBias(Var, Var),
    Matmul(Var, Var),
    /// C = A · Bᵀ with B stored untransposed.
    MatmulNT(Var, Var),
    Softmax { x: Var, axis: usize },
    CausalSoftmaxRows(Var),
    Relu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var },
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { x: Var, mask: Vec<f32> },
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, ignore: Option<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor; it participates in gradients only when
    /// marked with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let needs = value.requires_grad;
        self.push(Op::Leaf, value, needs)
    }

    /// Registers a constant input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to node `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                expected: av.shape().to_vec(),
                got: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                expected: av.shape().to_vec(),
                got: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * c).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(Op::Scale(a, c), value, needs)
    }

    /// Adds a length-C bias vector to every row of an R×C matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if self.value(bias).numel() != c {
            return Err(Error::ShapeMismatch {
                expected: vec![c],
                got: self.value(bias).shape().to_vec(),
            });
        }
        let av = self.value(a).data();
        let bv = self.value(bias).data();
        let mut data = av.to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += bv[j];
            }
        }
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddRowBias(a, bias), value, needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul(a, b), value, needs))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::matmul_nt(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatmulNT(a, b), value, needs))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let value = ops::softmax(self.value(x), axis)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Softmax { x, axis }, value, needs))
    }

    pub fn causal_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = ops::causal_softmax_rows(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(Op::CausalSoftmaxRows(x), value, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(Op::Relu(x), value, needs)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let value = ops::layer_norm(self.value(x), self.value(gamma), self.value(beta))?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::LayerNorm { x, gamma, beta }, value, needs))
    }

    /// Gathers rows of `table` by index; row i of the output is table[ids[i]].
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.value(table).dims2()?;
        if ids.is_empty() {
            return Err(Error::contract("embedding of empty index list"));
        }
        let td = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::IndexOutOfBounds { axis: 0, index: id, bound: v });
            }
            data.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        let needs = self.needs(table);
        Ok(self.push(Op::Embedding { table, ids: ids.to_vec() }, value, needs))
    }

    /// Inverted dropout: kept entries are scaled by 1/(1-rate). A rate of 0
    /// is the identity and records nothing.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f32, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let xv = self.value(x);
        let mask: Vec<f32> = (0..xv.numel())
            .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Dropout { x, mask }, value, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        let needs = self.needs(x);
        self.push(Op::Sum(x), Tensor::scalar(total as f32), needs)
    }

    /// Mean cross-entropy of logit rows against integer targets; positions
    /// whose target equals `ignore` are excluded from the mean.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        ignore: Option<usize>,
    ) -> Result<Var> {
        let loss = ops::cross_entropy(self.value(logits), targets, ignore)?;
        let needs = self.needs(logits);
        Ok(self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec(), ignore },
            Tensor::scalar(loss),
            needs,
        ))
    }

    /// Populates gradients of `loss` with respect to every node that needs
    /// one. `loss` must be a finite scalar.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward target must be scalar, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let seed = Tensor::new(lv.shape().to_vec(), vec![1.0])?;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(seed);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                self.grads[id] = None;
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            self.propagate(id, &g)?;
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, id: usize, g: &Tensor) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::Mul(a, b) => {
                let da = elementwise(g, self.value(b), |x, y| x * y)?;
                let db = elementwise(g, self.value(a), |x, y| x * y)?;
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Scale(a, c) => {
                let da = map(g, |x| x * c)?;
                self.accumulate(a, da);
            }
            &Op::AddRowBias(a, bias) => {
                let (r, c) = g.dims2()?;
                let mut db = vec![0.0f32; c];
                for i in 0..r {
                    for j in 0..c {
                        db[j] += g.data()[i * c + j];
                    }
                }
                let bias_shape = self.value(bias).shape().to_vec();
                self.accumulate(a, g.clone());
                self.accumulate(bias, Tensor::new(bias_shape, db)?);
            }
            &Op::Matmul(a, b) => {
                let da = ops::matmul_nt(g, self.value(b))?;
                let db = ops::matmul_tn(self.value(a), g)?;
                self.accumulate(a, reshape_like(da, self.value(a))?);
                self.accumulate(b, reshape_like(db, self.value(b))?);
            }
            &Op::MatmulNT(a, b) => {
                let da = ops::matmul(g, self.value(b))?;
                let db = ops::matmul_tn(g, self.value(a))?;
                self.accumulate(a, reshape_like(da, self.value(a))?);
                self.accumulate(b, reshape_like(db, self.value(b))?);
            }
            &Op::Softmax { x, axis } => {
                let dx = ops::softmax_backward(&self.nodes[id].value, g, axis)?;
                self.accumulate(x, dx);
            }
            &Op::CausalSoftmaxRows(x) => {
                let dx = ops::softmax_backward(&self.nodes[id].value, g, 1)?;
                self.accumulate(x, dx);
            }
            &Op::Relu(x) => {
                let dx = elementwise(g, self.value(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                self.accumulate(x, dx);
            }
            &Op::LayerNorm { x, gamma, beta } => {
                let (dx, dgamma, dbeta) = layer_norm_backward(self.value(x), self.value(gamma), g)?;
                self.accumulate(x, dx);
                self.accumulate(gamma, dgamma);
                self.accumulate(beta, dbeta);
            }
            Op::Embedding { table, ids } => {
                let (table, ids) = (*table, ids.clone());
                let (v, d) = self.value(table).dims2()?;
                let mut dt = vec![0.0f32; v * d];
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g.data()[i * d + j];
                    }
                }
                let shape = self.value(table).shape().to_vec();
                self.accumulate(table, Tensor::new(shape, dt)?);
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                let dx = Tensor::new(g.shape().to_vec(), data)?;
                self.accumulate(x, dx);
            }
            &Op::Sum(x) => {
                let gv = g.item()?;
                let dx = map(self.value(x), |_| gv)?;
                self.accumulate(x, dx);
            }
            Op::CrossEntropy { logits, targets, ignore } => {
                let (logits, targets, ignore) = (*logits, targets.clone(), *ignore);
                let lv = self.value(logits);
                let (r, c) = lv.dims2()?;
                let count = targets.iter().filter(|&&t| Some(t) != ignore).count();
                let mut dx = vec![0.0f32; r * c];
                if count > 0 {
                    let scale = g.item()? / count as f32;
                    let probs = ops::softmax(lv, lv.shape().len() - 1)?;
                    for (i, &t) in targets.iter().enumerate() {
                        if Some(t) == ignore {
                            continue;
                        }
                        for j in 0..c {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            dx[i * c + j] = (probs.data()[i * c + j] - onehot) * scale;
                        }
                    }
                }
                let shape = lv.shape().to_vec();
                self.accumulate(logits, Tensor::new(shape, dx)?);
            }
        }
        Ok(())
    }
}

fn map(t: &Tensor, f: impl Fn(f32) -> f32) -> Result<Tensor> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

/// Matmul kernels return 2-d tensors; restore a 1-d operand's shape.
fn reshape_like(t: Tensor, like: &Tensor) -> Result<Tensor> {
    if t.shape() == like.shape() {
        Ok(t)
    } else {
        Tensor::new(like.shape().to_vec(), t.data().to_vec())
    }
}

fn layer_norm_backward(x: &Tensor, gamma: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (r, c) = x.dims2()?;
    let mut dx = vec![0.0f32; r * c];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    let gd = gamma.data();
    for i in 0..r {
        let row = &x.data()[i * c..(i + 1) * c];
        let grow = &g.data()[i * c..(i + 1) * c];
        let (mean, rstd) = ops::row_moments(row);
        let mut sum_ggam = 0.0f64;
        let mut sum_ggam_xhat = 0.0f64;
        for j in 0..c {
            let xhat = (row[j] - mean) * rstd;
            let ggam = grow[j] * gd[j];
            sum_ggam += ggam as f64;
            sum_ggam_xhat += (ggam * xhat) as f64;
            dgamma[j] += grow[j] * xhat;
            dbeta[j] += grow[j];
        }
        let m1 = (sum_ggam / c as f64) as f32;
        let m2 = (sum_ggam_xhat / c as f64) as f32;
        for j in 0..c {
            let xhat = (row[j] - mean) * rstd;
            dx[i * c + j] = rstd * (grow[j] * gd[j] - m1 - xhat * m2);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(gamma.shape().to_vec(), dgamma)?,
        Tensor::new(gamma.shape().to_vec(), dbeta)?,
    ))
}
