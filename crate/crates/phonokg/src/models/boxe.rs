//! Box embedding model.
//!
//! Every entity carries a position vector and a translational bump; every
//! relation carries one hyper-rectangle per argument slot. A triple holds
//! when each entity, bumped by its partner, lands inside the slot's box.
//! Boxes are stored as two free corner vectors with min/max applied, so
//! they are well-formed by construction.

use crate::graph::Triple;
use crate::numerics::seeded_rng;
use rand::Rng;

/// Argument slot of a relation: one box for the head side, one for the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head,
    Tail,
}

/// Effective box corners with `l <= u` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCorners {
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl BoxCorners {
    pub fn center(&self) -> Vec<f64> {
        self.l
            .iter()
            .zip(&self.u)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Width plus one, the softening factor of the distance.
    pub fn width_plus_one(&self) -> Vec<f64> {
        self.l.iter().zip(&self.u).map(|(l, u)| u - l + 1.0).collect()
    }
}

/// Per-dimension point-to-box distance.
///
/// Inside the box the distance is |t - c| / w; outside it is
/// |t - c| * w - 0.5 * (w - 1) * (w - 1/w), with c the center and
/// w the width plus one. The two branches agree at the border.
pub fn box_distance(tau: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
    tau.iter()
        .zip(l.iter().zip(u))
        .map(|(&t, (&l, &u))| dim_distance(t, l, u).0)
        .collect()
}

fn dim_distance(tau: f64, l: f64, u: f64) -> (f64, bool) {
    let c = 0.5 * (l + u);
    let w = u - l + 1.0;
    let a = (tau - c).abs();
    if tau >= l && tau <= u {
        (a / w, true)
    } else {
        (a * w - 0.5 * (w - 1.0) * (w - 1.0 / w), false)
    }
}

/// Distance plus partial derivatives with respect to the point and the
/// effective corners: (dist, d/dtau, d/dl, d/du).
pub fn box_distance_grad(tau: f64, l: f64, u: f64) -> (f64, f64, f64, f64) {
    let c = 0.5 * (l + u);
    let w = u - l + 1.0;
    let diff = tau - c;
    let a = diff.abs();
    let s = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    if tau >= l && tau <= u {
        let dist = a / w;
        let dtau = s / w;
        let dl = (-0.5 * s * w + a) / (w * w);
        let du = (-0.5 * s * w - a) / (w * w);
        (dist, dtau, dl, du)
    } else {
        let kappa = 0.5 * (w - 1.0) * (w - 1.0 / w);
        let dist = a * w - kappa;
        let dkappa_dw = 0.5 * ((w - 1.0 / w) + (w - 1.0) * (1.0 + 1.0 / (w * w)));
        let dtau = s * w;
        let dl = -0.5 * s * w - a + dkappa_dw;
        let du = -0.5 * s * w + a - dkappa_dw;
        (dist, dtau, dl, du)
    }
}

/// Parameter block: entity positions, entity bumps, and two free corner
/// vectors per relation slot, all flattened into one buffer.
#[derive(Debug, Clone)]
pub struct BoxEParams {
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub data: Vec<f64>,
}

impl BoxEParams {
    /// Entity vectors start uniform in (-0.5/sqrt(d), 0.5/sqrt(d)); box
    /// corners uniform in (-1, 1).
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let n = 2 * n_entities * dim + 4 * n_relations * dim;
        let mut data = vec![0.0; n];
        let scale = 0.5 / (dim as f64).sqrt();
        for v in data[..2 * n_entities * dim].iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        for v in data[2 * n_entities * dim..].iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        Self {
            dim,
            n_entities,
            n_relations,
            data,
        }
    }

    pub fn position_offset(&self, entity: usize) -> usize {
        entity * self.dim
    }

    pub fn bump_offset(&self, entity: usize) -> usize {
        (self.n_entities + entity) * self.dim
    }

    fn corner_offsets(&self, relation: usize, slot: Slot) -> (usize, usize) {
        let base = 2 * self.n_entities * self.dim + relation * 4 * self.dim;
        match slot {
            Slot::Head => (base, base + self.dim),
            Slot::Tail => (base + 2 * self.dim, base + 3 * self.dim),
        }
    }

    pub fn position(&self, entity: usize) -> &[f64] {
        let o = self.position_offset(entity);
        &self.data[o..o + self.dim]
    }

    pub fn bump(&self, entity: usize) -> &[f64] {
        let o = self.bump_offset(entity);
        &self.data[o..o + self.dim]
    }

    /// Overwrite one slot's corners, e.g. when reloading a checkpoint.
    pub fn set_corners(&mut self, relation: usize, slot: Slot, p: &[f64], q: &[f64]) {
        let (po, qo) = self.corner_offsets(relation, slot);
        self.data[po..po + self.dim].copy_from_slice(p);
        self.data[qo..qo + self.dim].copy_from_slice(q);
    }

    /// Effective box of one relation slot: corners sorted elementwise.
    pub fn effective_box(&self, relation: usize, slot: Slot) -> BoxCorners {
        let (po, qo) = self.corner_offsets(relation, slot);
        let p = &self.data[po..po + self.dim];
        let q = &self.data[qo..qo + self.dim];
        let mut l = vec![0.0; self.dim];
        let mut u = vec![0.0; self.dim];
        for k in 0..self.dim {
            l[k] = p[k].min(q[k]);
            u[k] = p[k].max(q[k]);
        }
        BoxCorners { l, u }
    }

    /// The two bumped target points of a triple: head position plus tail
    /// bump, and tail position plus head bump.
    pub fn target_points(&self, triple: Triple) -> (Vec<f64>, Vec<f64>) {
        let tau1 = self
            .position(triple.head)
            .iter()
            .zip(self.bump(triple.tail))
            .map(|(e, b)| e + b)
            .collect();
        let tau2 = self
            .position(triple.tail)
            .iter()
            .zip(self.bump(triple.head))
            .map(|(e, b)| e + b)
            .collect();
        (tau1, tau2)
    }

    /// Negative sum of the L2 norms of the two per-slot distance vectors;
    /// zero (the maximum) when both target points sit at their box centers.
    pub fn score(&self, triple: Triple) -> f64 {
        -(self.slot_norm(triple, Slot::Head) + self.slot_norm(triple, Slot::Tail))
    }

    fn slot_norm(&self, triple: Triple, slot: Slot) -> f64 {
        let (pos, bmp) = match slot {
            Slot::Head => (triple.head, triple.tail),
            Slot::Tail => (triple.tail, triple.head),
        };
        let (po, qo) = self.corner_offsets(triple.relation, slot);
        let e = self.position(pos);
        let b = self.bump(bmp);
        let mut sq = 0.0;
        for k in 0..self.dim {
            let tau = e[k] + b[k];
            let p = self.data[po + k];
            let q = self.data[qo + k];
            let (d, _) = dim_distance(tau, p.min(q), p.max(q));
            sq += d * d;
        }
        sq.sqrt()
    }

    pub(super) fn accumulate_score_grad(&self, triple: Triple, factor: f64, grads: &mut [f64]) {
        self.slot_grad(triple, Slot::Head, factor, grads);
        self.slot_grad(triple, Slot::Tail, factor, grads);
    }

    fn slot_grad(&self, triple: Triple, slot: Slot, factor: f64, grads: &mut [f64]) {
        let (pos, bmp) = match slot {
            Slot::Head => (triple.head, triple.tail),
            Slot::Tail => (triple.tail, triple.head),
        };
        let (po, qo) = self.corner_offsets(triple.relation, slot);
        let e = self.position(pos);
        let b = self.bump(bmp);
        let mut per_dim = Vec::with_capacity(self.dim);
        let mut sq = 0.0;
        for k in 0..self.dim {
            let tau = e[k] + b[k];
            let p = self.data[po + k];
            let q = self.data[qo + k];
            let p_is_lower = p <= q;
            let (l, u) = if p_is_lower { (p, q) } else { (q, p) };
            let g = box_distance_grad(tau, l, u);
            per_dim.push((g, p_is_lower));
            sq += g.0 * g.0;
        }
        let norm = sq.sqrt();
        if norm == 0.0 {
            return;
        }
        let eo = self.position_offset(pos);
        let bo = self.bump_offset(bmp);
        for (k, ((dist, dtau, dl, du), p_is_lower)) in per_dim.into_iter().enumerate() {
            // score = -norm, so d(score)/d(dist_k) = -dist_k / norm.
            let coeff = factor * (-dist / norm);
            grads[eo + k] += coeff * dtau;
            grads[bo + k] += coeff * dtau;
            if p_is_lower {
                grads[po + k] += coeff * dl;
                grads[qo + k] += coeff * du;
            } else {
                grads[qo + k] += coeff * dl;
                grads[po + k] += coeff * du;
            }
        }
    }
}
