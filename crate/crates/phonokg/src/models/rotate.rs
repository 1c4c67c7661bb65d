//! Rotation model: entities are complex vectors, relations are phase
//! vectors applied as elementwise rotations. Storing relations as angles
//! keeps the rotation modulus at exactly one.

use crate::graph::Triple;
use crate::numerics::seeded_rng;
use rand::Rng;
use std::f64::consts::PI;

/// Entities hold `dim` reals interpreted as `dim/2` interleaved complex
/// pairs; relations hold `dim/2` phase angles.
#[derive(Debug, Clone)]
pub struct RotatEParams {
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub data: Vec<f64>,
}

impl RotatEParams {
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Self {
        assert_eq!(dim % 2, 0);
        let mut rng = seeded_rng(seed);
        let half = dim / 2;
        let mut data = vec![0.0; n_entities * dim + n_relations * half];
        let scale = 0.5 / (dim as f64).sqrt();
        for v in data[..n_entities * dim].iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        for v in data[n_entities * dim..].iter_mut() {
            *v = rng.gen_range(-PI..PI);
        }
        Self {
            dim,
            n_entities,
            n_relations,
            data,
        }
    }

    pub fn entity(&self, e: usize) -> &[f64] {
        &self.data[e * self.dim..(e + 1) * self.dim]
    }

    pub fn phases(&self, r: usize) -> &[f64] {
        let half = self.dim / 2;
        let base = self.n_entities * self.dim + r * half;
        &self.data[base..base + half]
    }

    fn phase_offset(&self, r: usize) -> usize {
        self.n_entities * self.dim + r * self.dim / 2
    }

    /// score = -|| h o r - t ||_2 with o the elementwise complex product.
    pub fn score(&self, t: Triple) -> f64 {
        let h = self.entity(t.head);
        let tail = self.entity(t.tail);
        let phases = self.phases(t.relation);
        let mut sq = 0.0;
        for (j, &theta) in phases.iter().enumerate() {
            let (a, b) = (h[2 * j], h[2 * j + 1]);
            let (e, f) = (tail[2 * j], tail[2 * j + 1]);
            let (cos, sin) = (theta.cos(), theta.sin());
            let re = a * cos - b * sin - e;
            let im = a * sin + b * cos - f;
            sq += re * re + im * im;
        }
        -sq.sqrt()
    }

    pub(super) fn accumulate_score_grad(&self, t: Triple, factor: f64, grads: &mut [f64]) {
        let h = self.entity(t.head);
        let tail = self.entity(t.tail);
        let phases = self.phases(t.relation);
        let half = self.dim / 2;
        let mut residual = vec![0.0; self.dim];
        let mut sq = 0.0;
        for j in 0..half {
            let theta = phases[j];
            let (a, b) = (h[2 * j], h[2 * j + 1]);
            let (e, f) = (tail[2 * j], tail[2 * j + 1]);
            let (cos, sin) = (theta.cos(), theta.sin());
            let re = a * cos - b * sin - e;
            let im = a * sin + b * cos - f;
            residual[2 * j] = re;
            residual[2 * j + 1] = im;
            sq += re * re + im * im;
        }
        let norm = sq.sqrt();
        if norm == 0.0 {
            return;
        }
        let ho = t.head * self.dim;
        let to = t.tail * self.dim;
        let ro = self.phase_offset(t.relation);
        for j in 0..half {
            let theta = phases[j];
            let (a, b) = (h[2 * j], h[2 * j + 1]);
            let (cos, sin) = (theta.cos(), theta.sin());
            // score = -norm: d(score)/d(re) = -re / norm.
            let dre = factor * (-residual[2 * j] / norm);
            let dim_ = factor * (-residual[2 * j + 1] / norm);
            grads[ho + 2 * j] += dre * cos + dim_ * sin;
            grads[ho + 2 * j + 1] += -dre * sin + dim_ * cos;
            grads[to + 2 * j] += -dre;
            grads[to + 2 * j + 1] += -dim_;
            grads[ro + j] += dre * (-a * sin - b * cos) + dim_ * (a * cos - b * sin);
        }
    }
}
