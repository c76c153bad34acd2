//! Fuzzy c-means clustering.
//!
//! Internal state is f64 so membership rows sum to 1 well inside 1e-9 and the
//! objective sequence is cleanly monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct FcmConfig {
    pub k: usize,
    /// Fuzzifier exponent, > 1.
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig { k: 2, m: 2.0, tol: 1e-6, max_iter: 300 }
    }
}

impl FcmConfig {
    pub fn with_k(k: usize) -> Self {
        FcmConfig { k, ..FcmConfig::default() }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::config(format!("k = {} with {n} samples", self.k)));
        }
        if !(self.m > 1.0) {
            return Err(Error::config(format!("fuzzifier m = {} must exceed 1", self.m)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FcmState {
    pub centers: Vec<Vec<f64>>,
    /// n rows, k columns; each row sums to 1.
    pub memberships: Vec<Vec<f64>>,
    /// Objective value recorded once per iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Membership row for one point given current centers; handles the
/// zero-distance singularity by assigning the point fully to that center.
fn membership_row(point: &[f64], centers: &[Vec<f64>], m: f64) -> Vec<f64> {
    let d2: Vec<f64> = centers.iter().map(|c| squared_distance(point, c)).collect();
    if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
        let mut row = vec![0.0; centers.len()];
        row[hit] = 1.0;
        return row;
    }
    // u_k = 1 / sum_j (d_k / d_j)^(2/(m-1)) with d the Euclidean distance,
    // computed on squared distances with exponent 1/(m-1).
    let exp = 1.0 / (m - 1.0);
    let mut row = Vec::with_capacity(centers.len());
    for &dk in &d2 {
        let denom: f64 = d2.iter().map(|&dj| (dk / dj).powf(exp)).sum();
        row.push(1.0 / denom);
    }
    row
}

fn objective(points: &[Vec<f64>], centers: &[Vec<f64>], memberships: &[Vec<f64>], m: f64) -> f64 {
    let mut total = 0.0;
    for (point, row) in points.iter().zip(memberships) {
        for (center, &u) in centers.iter().zip(row) {
            total += u.powf(m) * squared_distance(point, center);
        }
    }
    total
}

/// Nudges exact-duplicate centers apart so memberships stay well defined.
fn separate_duplicates(centers: &mut [Vec<f64>], tol: f64) {
    let dim = centers[0].len();
    for i in 1..centers.len() {
        for j in 0..i {
            if centers[i] == centers[j] {
                centers[i][i % dim] += tol * (i + 1) as f64;
            }
        }
    }
}

pub fn fcm(features: &[Vec<f32>], cfg: FcmConfig, seed: u64) -> Result<FcmState> {
    let n = features.len();
    cfg.validate(n)?;
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::contract("zero-dimensional features"));
    }
    let mut points = Vec::with_capacity(n);
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::ShapeMismatch { expected: vec![dim], got: vec![f.len()] });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fcm feature"));
        }
        let _ = i;
        points.push(f.iter().map(|&v| v as f64).collect::<Vec<f64>>());
    }

    // Seeded first draw, then farthest-point seeding: every further center
    // is the sample with maximum distance to its nearest chosen center
    // (ties break to the smaller index). Spreading the starts this way
    // keeps two initial centers out of the same tight group, which random
    // draws do not.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = vec![rng.gen_range(0..n)];
    while chosen.len() < cfg.k {
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (j, p) in points.iter().enumerate() {
            let d = chosen
                .iter()
                .map(|&c| squared_distance(p, &points[c]))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = j;
            }
        }
        chosen.push(best);
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    separate_duplicates(&mut centers, cfg.tol);

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let memberships: Vec<Vec<f64>> = points
            .iter()
            .map(|p| membership_row(p, &centers, cfg.m))
            .collect();
        history.push(objective(&points, &centers, &memberships, cfg.m));

        let mut moved: f64 = 0.0;
        let mut next = vec![vec![0.0; dim]; cfg.k];
        for (k, center) in next.iter_mut().enumerate() {
            let mut weight = 0.0;
            for (point, row) in points.iter().zip(&memberships) {
                let um = row[k].powf(cfg.m);
                weight += um;
                for (c, &x) in center.iter_mut().zip(point) {
                    *c += um * x;
                }
            }
            if weight > 0.0 {
                for c in center.iter_mut() {
                    *c /= weight;
                }
            } else {
                *center = centers[k].clone();
            }
            moved = moved.max(squared_distance(center, &centers[k]).sqrt());
        }
        separate_duplicates(&mut next, cfg.tol);
        centers = next;
        if moved < cfg.tol {
            converged = true;
            break;
        }
    }

    // Final memberships are consistent with the final centers.
    let memberships: Vec<Vec<f64>> = points
        .iter()
        .map(|p| membership_row(p, &centers, cfg.m))
        .collect();
    Ok(FcmState { centers, memberships, objective_history: history, iterations, converged })
}
