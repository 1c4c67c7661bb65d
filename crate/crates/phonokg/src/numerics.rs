//! Minimal numeric substrate: seeded RNG streams, Adam, a central-difference
//! gradient checker, and the small dense linear algebra the probes and PCA
//! need. Everything here is deterministic given its inputs.

use crate::error::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a per-stage seed from a master seed and a stage tag.
///
/// All randomness in the pipeline flows from one top-level seed; each stage
/// (split, init, training, probes, ...) gets its own stream so that changing
/// one stage's draws cannot shift another's.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, mixed with the master seed, then splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ master.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded RNG used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }

    /// One Adam update. `params` and `grads` must match the state shape.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam step: params {} grads {} state {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Central-difference gradient estimate, error O(eps^2) for smooth f.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&probe);
        probe[i] = orig - eps;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Relative L2 error between two vectors, safe against zero norms.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Numerically stable log(sigmoid(x)).
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Stable softmax; returns weights summing to 1. Empty input gives empty output.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------------
// Small dense linear algebra (row-major, d is tiny: embedding dims <= 64).
// ---------------------------------------------------------------------------

/// Cholesky factorization of a symmetric positive-definite d x d matrix.
/// Returns the lower factor L (row-major). Fails on non-positive pivots.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Shape(format!(
                        "cholesky: non-positive pivot {sum:.3e} at {i}"
                    )));
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Solve A X = B for symmetric positive-definite A (d x d) and B (d x k),
/// via Cholesky. B and the result are row-major d x k.
pub fn cholesky_solve(a: &[f64], b: &[f64], d: usize, k: usize) -> Result<Vec<f64>> {
    let l = cholesky(a, d)?;
    let mut x = b.to_vec();
    // Forward: L y = b, column by column.
    for c in 0..k {
        for i in 0..d {
            let mut sum = x[i * k + c];
            for j in 0..i {
                sum -= l[i * d + j] * x[j * k + c];
            }
            x[i * k + c] = sum / l[i * d + i];
        }
        // Backward: L^T x = y.
        for i in (0..d).rev() {
            let mut sum = x[i * k + c];
            for j in (i + 1)..d {
                sum -= l[j * d + i] * x[j * k + c];
            }
            x[i * k + c] = sum / l[i * d + i];
        }
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric d x d matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue;
/// eigenvector i is stored as row i of the returned matrix.
pub fn jacobi_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), d * d);
    let mut m = a.to_vec();
    let mut vecs = vec![0.0; d * d];
    for i in 0..d {
        vecs[i * d + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[i * d + j] * m[i * d + j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() <= tol / (d as f64) {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = vecs[p * d + k];
                    let vkq = vecs[q * d + k];
                    vecs[p * d + k] = c * vkp - s * vkq;
                    vecs[q * d + k] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        m[j * d + j]
            .partial_cmp(&m[i * d + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = Vec::with_capacity(d);
    let mut sorted_vecs = vec![0.0; d * d];
    for (rank, &idx) in order.iter().enumerate() {
        vals.push(m[idx * d + idx]);
        sorted_vecs[rank * d..(rank + 1) * d].copy_from_slice(&vecs[idx * d..(idx + 1) * d]);
    }
    (vals, sorted_vecs)
}
