//! Value-level kernels shared by the tape and by inference paths.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// C = A · B for matrices (1-d operands are treated as single rows).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::MatmulInnerMismatch { lhs_k: k, rhs_k: k2 });
    }
    let mut out = vec![0.0f32; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// C = A · Bᵀ, with B given untransposed (n × k).
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    if k != k2 {
        return Err(Error::MatmulInnerMismatch { lhs_k: k, rhs_k: k2 });
    }
    let mut out = vec![0.0f32; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// C = Aᵀ · B, with A given untransposed (k × m).
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::MatmulInnerMismatch { lhs_k: k, rhs_k: k2 });
    }
    let mut out = vec![0.0f32; m * n];
    let ad = a.data();
    let bd = b.data();
    for p in 0..k {
        let arow = &ad[p * m..(p + 1) * m];
        let brow = &bd[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Iterates the (outer, inner) stride decomposition for a reduction axis.
fn axis_strides(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if shape.is_empty() || axis >= shape.len() {
        return Err(Error::contract(format!(
            "axis {axis} invalid for shape {shape:?}"
        )));
    }
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    Ok((outer, extent, inner))
}

/// Numerically stable softmax along `axis`; each slice sums to 1.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, extent, inner) = axis_strides(x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![0.0f32; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            let mut max = f32::NEG_INFINITY;
            for e in 0..extent {
                max = max.max(xd[base + e * inner]);
            }
            let mut sum = 0.0f64;
            for e in 0..extent {
                let v = (xd[base + e * inner] - max).exp();
                out[base + e * inner] = v;
                sum += v as f64;
            }
            let norm = 1.0 / sum.max(1e-300) as f32;
            for e in 0..extent {
                out[base + e * inner] *= norm;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Softmax gradient: dx = y ⊙ (g − Σ g⊙y along axis).
pub(crate) fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, extent, inner) = axis_strides(y.shape(), axis)?;
    let yd = y.data();
    let gd = g.data();
    let mut out = vec![0.0f32; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            let mut dot = 0.0f64;
            for e in 0..extent {
                let idx = base + e * inner;
                dot += (gd[idx] * yd[idx]) as f64;
            }
            for e in 0..extent {
                let idx = base + e * inner;
                out[idx] = yd[idx] * (gd[idx] - dot as f32);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), out)
}

/// Row-wise softmax over a square matrix where row i only sees columns 0..=i.
/// Columns past the diagonal are exactly zero in the output.
pub fn causal_softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    if r != c {
        return Err(Error::contract(format!(
            "causal softmax needs a square matrix, got {r}x{c}"
        )));
    }
    let xd = x.data();
    let mut out = vec![0.0f32; xd.len()];
    for i in 0..r {
        let row = &xd[i * c..i * c + i + 1];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out[i * c + j] = e;
            sum += e as f64;
        }
        let norm = 1.0 / sum.max(1e-300) as f32;
        for j in 0..=i {
            out[i * c + j] *= norm;
        }
    }
    Tensor::new(vec![r, c], out)
}

pub(crate) const LAYER_NORM_EPS: f32 = 1e-5;

/// Per-row layer normalization with learned gain and bias.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    if gamma.numel() != c || beta.numel() != c {
        return Err(Error::ShapeMismatch {
            expected: vec![c],
            got: vec![gamma.numel(), beta.numel()],
        });
    }
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let mut out = vec![0.0f32; xd.len()];
    for i in 0..r {
        let row = &xd[i * c..(i + 1) * c];
        let (mean, rstd) = row_moments(row);
        for j in 0..c {
            out[i * c + j] = (row[j] - mean) * rstd * gd[j] + bd[j];
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn row_moments(row: &[f32]) -> (f32, f32) {
    let n = row.len() as f64;
    let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = row
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let rstd = 1.0 / (var + LAYER_NORM_EPS as f64).sqrt();
    (mean as f32, rstd as f32)
}

/// Mean cross-entropy between logit rows and integer targets.
///
/// Positions whose target equals `ignore` are excluded from the mean; when
/// every position is ignored the loss is 0. Accumulation is in f64.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], ignore: Option<usize>) -> Result<f32> {
    let (r, c) = logits.dims2()?;
    if targets.len() != r {
        return Err(Error::ShapeMismatch {
            expected: vec![r],
            got: vec![targets.len()],
        });
    }
    let xd = logits.data();
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (i, &t) in targets.iter().enumerate() {
        if Some(t) == ignore {
            continue;
        }
        if t >= c {
            return Err(Error::IndexOutOfBounds {
                axis: 1,
                index: t,
                bound: c,
            });
        }
        let row = &xd[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        total += max + sum.ln() - row[t] as f64;
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((total / count as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    /// Independent oracle: naive i-j-p triple loop in f64.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Vec<f32> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += a.data()[i * k + p] as f64 * b.data()[p * n + j] as f64;
                }
                out[i * n + j] = acc as f32;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.gen_range(1..8);
            let k = rng.gen_range(1..8);
            let n = rng.gen_range(1..8);
            let a = rand_tensor(&mut rng, vec![m, k]);
            let b = rand_tensor(&mut rng, vec![k, n]);
            let c = matmul(&a, &b).unwrap();
            for (got, want) in c.data().iter().zip(matmul_oracle(&a, &b)) {
                assert!((got - want).abs() <= 1e-4, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn matmul_nt_tn_match_explicit_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let m = rng.gen_range(1..6);
            let k = rng.gen_range(1..6);
            let n = rng.gen_range(1..6);
            let a = rand_tensor(&mut rng, vec![m, k]);
            let b = rand_tensor(&mut rng, vec![n, k]);
            let bt_data: Vec<f32> = (0..k * n)
                .map(|i| b.data()[(i % n) * k + i / n])
                .collect();
            let bt = Tensor::new(vec![k, n], bt_data).unwrap();
            let got = matmul_nt(&a, &b).unwrap();
            let want = matmul(&a, &bt).unwrap();
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() <= 1e-4);
            }

            let at = rand_tensor(&mut rng, vec![k, m]);
            let b2 = rand_tensor(&mut rng, vec![k, n]);
            let a_data: Vec<f32> = (0..m * k)
                .map(|i| at.data()[(i % k) * m + i / k])
                .collect();
            let a2 = Tensor::new(vec![m, k], a_data).unwrap();
            let got = matmul_tn(&at, &b2).unwrap();
            let want = matmul(&a2, &b2).unwrap();
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        assert!(matches!(
            matmul(&a, &b),
            Err(Error::MatmulInnerMismatch { lhs_k: 3, rhs_k: 4 })
        ));
    }

    #[test]
    fn softmax_uniform_and_log_weights() {
        let x = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        for &v in softmax(&x, 0).unwrap().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        let x = Tensor::new(vec![3], vec![1f32.ln(), 2f32.ln(), 3f32.ln()]).unwrap();
        let y = softmax(&x, 0).unwrap();
        let want = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (got, want) in y.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_is_shift_stable() {
        let x = Tensor::new(vec![2], vec![1000.0, 1000.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!(y.is_finite());
        for &v in y.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_slices_sum_to_one_on_both_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = rand_tensor(&mut rng, vec![4, 5]);
        for axis in [0usize, 1] {
            let y = softmax(&x, axis).unwrap();
            let (r, c) = (4, 5);
            if axis == 1 {
                for i in 0..r {
                    let s: f32 = y.data()[i * c..(i + 1) * c].iter().sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            } else {
                for j in 0..c {
                    let s: f32 = (0..r).map(|i| y.data()[i * c + j]).sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
        assert!(softmax(&x, 2).is_err());
    }

    #[test]
    fn causal_softmax_rows_zero_above_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = rand_tensor(&mut rng, vec![5, 5]);
        let y = causal_softmax_rows(&x).unwrap();
        for i in 0..5 {
            let row = &y.data()[i * 5..(i + 1) * 5];
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            for (j, &v) in row.iter().enumerate() {
                if j > i {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(causal_softmax_rows(&rand_tensor(&mut rng, vec![3, 4])).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_vocab() {
        for v in [2usize, 5, 17] {
            let logits = Tensor::zeros(vec![3, v]);
            let loss = cross_entropy(&logits, &[0, 1, v - 1], None).unwrap();
            assert!((loss - (v as f32).ln()).abs() < 1e-6, "v={v}");
        }
    }

    #[test]
    fn cross_entropy_confident_correct_is_near_zero() {
        let mut logits = Tensor::zeros(vec![2, 4]);
        logits.data_mut()[1] = 50.0;
        logits.data_mut()[4 + 2] = 50.0;
        let loss = cross_entropy(&logits, &[1, 2], None).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn cross_entropy_ignores_marked_positions() {
        let mut logits = Tensor::zeros(vec![2, 4]);
        logits.data_mut()[2] = 3.0;
        let full = cross_entropy(&logits, &[2, 1], None).unwrap();
        let masked = cross_entropy(&logits, &[2, 0], Some(0)).unwrap();
        let first_only = cross_entropy(&logits, &[2], None);
        assert!(first_only.is_err(), "row count must match target count");
        let single = Tensor::new(vec![1, 4], logits.data()[..4].to_vec()).unwrap();
        let want = cross_entropy(&single, &[2], None).unwrap();
        assert!((masked - want).abs() < 1e-6);
        assert!(masked < full);
        assert_eq!(cross_entropy(&logits, &[0, 0], Some(0)).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_target() {
        let logits = Tensor::zeros(vec![1, 4]);
        assert!(matches!(
            cross_entropy(&logits, &[4], None),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn layer_norm_rows_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = rand_tensor(&mut rng, vec![3, 8]);
        let gamma = Tensor::new(vec![8], vec![1.0; 8]).unwrap();
        let beta = Tensor::zeros(vec![8]);
        let y = layer_norm(&x, &gamma, &beta).unwrap();
        for i in 0..3 {
            let row = &y.data()[i * 8..(i + 1) * 8];
            let mean: f32 = row.iter().sum::<f32>() / 8.0;
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 8.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
