//! Central finite differences, used to verify analytic gradients.

/// Central-difference gradient of a scalar function at `x` with step `h`.
pub fn central_gradient(mut f: impl FnMut(&[f32]) -> f32, x: &[f32], h: f32) -> Vec<f32> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe) as f64;
        probe[i] = orig - h;
        let fm = f(&probe) as f64;
        probe[i] = orig;
        grad.push(((fp - fm) / (2.0 * h as f64)) as f32);
    }
    grad
}

/// Relative error with the denominator floored at 1.
///
/// A pure relative comparison is not measurable in f32 for near-zero
/// gradients: the central-difference noise floor is about eps*|f|/h, which is
/// ~3e-4 absolute for loss-scale values at h = 1e-3. Flooring at 1 ties the
/// tolerance to loss scale while staying strict for gradients of size >= 1.
pub fn rel_err(analytic: f32, numeric: f32) -> f32 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}
