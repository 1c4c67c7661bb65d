//! Bilinear complex model: score = Re(sum_k h_k * r_k * conj(t_k)).

use crate::graph::Triple;
use crate::numerics::seeded_rng;
use rand::Rng;

/// Entities and relations both hold `dim` reals as `dim/2` interleaved
/// complex pairs.
#[derive(Debug, Clone)]
pub struct ComplExParams {
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub data: Vec<f64>,
}

impl ComplExParams {
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Self {
        assert_eq!(dim % 2, 0);
        let mut rng = seeded_rng(seed);
        let mut data = vec![0.0; (n_entities + n_relations) * dim];
        let scale = 0.5 / (dim as f64).sqrt();
        for v in data.iter_mut() {
            *v = rng.gen_range(-scale..scale);
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

    pub fn relation(&self, r: usize) -> &[f64] {
        let base = (self.n_entities + r) * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn score(&self, t: Triple) -> f64 {
        let h = self.entity(t.head);
        let r = self.relation(t.relation);
        let tl = self.entity(t.tail);
        let mut total = 0.0;
        for j in 0..self.dim / 2 {
            let (a, b) = (h[2 * j], h[2 * j + 1]);
            let (c, d) = (r[2 * j], r[2 * j + 1]);
            let (e, f) = (tl[2 * j], tl[2 * j + 1]);
            // Re((a+bi)(c+di)(e-fi)) = (ac - bd) e + (ad + bc) f
            total += (a * c - b * d) * e + (a * d + b * c) * f;
        }
        total
    }

    pub(super) fn accumulate_score_grad(&self, t: Triple, factor: f64, grads: &mut [f64]) {
        let h = self.entity(t.head);
        let r = self.relation(t.relation);
        let tl = self.entity(t.tail);
        let ho = t.head * self.dim;
        let ro = (self.n_entities + t.relation) * self.dim;
        let to = t.tail * self.dim;
        for j in 0..self.dim / 2 {
            let (a, b) = (h[2 * j], h[2 * j + 1]);
            let (c, d) = (r[2 * j], r[2 * j + 1]);
            let (e, f) = (tl[2 * j], tl[2 * j + 1]);
            grads[ho + 2 * j] += factor * (c * e + d * f);
            grads[ho + 2 * j + 1] += factor * (-d * e + c * f);
            grads[ro + 2 * j] += factor * (a * e + b * f);
            grads[ro + 2 * j + 1] += factor * (-b * e + a * f);
            grads[to + 2 * j] += factor * (a * c - b * d);
            grads[to + 2 * j + 1] += factor * (a * d + b * c);
        }
    }
}
