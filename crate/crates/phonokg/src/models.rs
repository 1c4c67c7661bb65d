//! Embedding models: scoring, initialization, and analytic gradients.

mod boxe;
mod complex;
mod rotate;

pub use boxe::{box_distance, box_distance_grad, BoxCorners, BoxEParams, Slot};
pub use complex::ComplExParams;
pub use rotate::RotatEParams;

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::numerics::log_sigmoid;

/// Which model family a parameter block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BoxE,
    RotatE,
    ComplEx,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BoxE => "boxe",
            ModelKind::RotatE => "rotate",
            ModelKind::ComplEx => "complex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boxe" => Ok(ModelKind::BoxE),
            "rotate" => Ok(ModelKind::RotatE),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Trainable parameters of one model over a fixed entity/relation registry.
#[derive(Debug, Clone)]
pub enum ModelParams {
    BoxE(BoxEParams),
    RotatE(RotatEParams),
    ComplEx(ComplExParams),
}

impl ModelParams {
    pub fn init(
        kind: ModelKind,
        n_entities: usize,
        n_relations: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_entities == 0 || n_relations == 0 || dim == 0 {
            return Err(Error::Invalid("model init: sizes must be positive".into()));
        }
        Ok(match kind {
            ModelKind::BoxE => ModelParams::BoxE(BoxEParams::init(n_entities, n_relations, dim, seed)),
            ModelKind::RotatE => {
                if dim % 2 != 0 {
                    return Err(Error::Invalid("rotate requires an even dimension".into()));
                }
                ModelParams::RotatE(RotatEParams::init(n_entities, n_relations, dim, seed))
            }
            ModelKind::ComplEx => {
                if dim % 2 != 0 {
                    return Err(Error::Invalid("complex requires an even dimension".into()));
                }
                ModelParams::ComplEx(ComplExParams::init(n_entities, n_relations, dim, seed))
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::BoxE(_) => ModelKind::BoxE,
            ModelParams::RotatE(_) => ModelKind::RotatE,
            ModelParams::ComplEx(_) => ModelKind::ComplEx,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelParams::BoxE(p) => p.dim,
            ModelParams::RotatE(p) => p.dim,
            ModelParams::ComplEx(p) => p.dim,
        }
    }

    pub fn n_entities(&self) -> usize {
        match self {
            ModelParams::BoxE(p) => p.n_entities,
            ModelParams::RotatE(p) => p.n_entities,
            ModelParams::ComplEx(p) => p.n_entities,
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            ModelParams::BoxE(p) => &p.data,
            ModelParams::RotatE(p) => &p.data,
            ModelParams::ComplEx(p) => &p.data,
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            ModelParams::BoxE(p) => &mut p.data,
            ModelParams::RotatE(p) => &mut p.data,
            ModelParams::ComplEx(p) => &mut p.data,
        }
    }

    pub fn n_params(&self) -> usize {
        self.data().len()
    }

    /// Plausibility score; higher means more plausible.
    pub fn score(&self, triple: Triple) -> f64 {
        match self {
            ModelParams::BoxE(p) => p.score(triple),
            ModelParams::RotatE(p) => p.score(triple),
            ModelParams::ComplEx(p) => p.score(triple),
        }
    }

    /// Accumulate d(score)/d(params) scaled by `factor` into `grads`.
    fn accumulate_score_grad(&self, triple: Triple, factor: f64, grads: &mut [f64]) {
        match self {
            ModelParams::BoxE(p) => p.accumulate_score_grad(triple, factor, grads),
            ModelParams::RotatE(p) => p.accumulate_score_grad(triple, factor, grads),
            ModelParams::ComplEx(p) => p.accumulate_score_grad(triple, factor, grads),
        }
    }

    /// The per-entity vector exported for downstream analyses. For the box
    /// model this is the position; the bump is exposed separately.
    pub fn entity_vector(&self, entity: usize) -> &[f64] {
        match self {
            ModelParams::BoxE(p) => p.position(entity),
            ModelParams::RotatE(p) => p.entity(entity),
            ModelParams::ComplEx(p) => p.entity(entity),
        }
    }

    /// The translational bump for the box model; other models fall back
    /// to their single entity vector, making the two flavors interchangeable
    /// for callers.
    pub fn bump_vector(&self, entity: usize) -> &[f64] {
        match self {
            ModelParams::BoxE(p) => p.bump(entity),
            ModelParams::RotatE(p) => p.entity(entity),
            ModelParams::ComplEx(p) => p.entity(entity),
        }
    }
}

/// Positive items push their score up, negative items push it down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

/// One weighted term of the batch loss.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem {
    pub triple: Triple,
    pub label: Label,
    pub weight: f64,
}

/// Loss of one item at a given score, with the margin folded in:
/// positives contribute -log s(margin + score), negatives
/// -log s(-margin - score). Weights are treated as constants.
fn item_loss(score: f64, label: Label, margin: f64) -> f64 {
    match label {
        Label::Positive => -log_sigmoid(margin + score),
        Label::Negative => -log_sigmoid(-margin - score),
    }
}

fn item_dloss_dscore(score: f64, label: Label, margin: f64) -> f64 {
    let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
    match label {
        Label::Positive => sigma(margin + score) - 1.0,
        Label::Negative => 1.0 - sigma(-margin - score),
    }
}

/// Weighted batch loss; the finite-difference oracle in the tests probes
/// exactly this function.
pub fn batch_loss(params: &ModelParams, items: &[BatchItem], margin: f64) -> f64 {
    items
        .iter()
        .map(|it| it.weight * item_loss(params.score(it.triple), it.label, margin))
        .sum()
}

/// Analytic gradient of [`batch_loss`] with respect to every parameter.
/// Parameters not touched by the batch receive zero.
pub fn batch_grads(params: &ModelParams, items: &[BatchItem], margin: f64) -> Vec<f64> {
    let mut grads = vec![0.0; params.n_params()];
    accumulate_batch_grads(params, items, margin, &mut grads);
    grads
}

/// Gradient accumulation into a caller-owned buffer (zeroed by the caller).
pub fn accumulate_batch_grads(
    params: &ModelParams,
    items: &[BatchItem],
    margin: f64,
    grads: &mut [f64],
) {
    for it in items {
        if it.weight == 0.0 {
            continue;
        }
        let s = params.score(it.triple);
        let factor = it.weight * item_dloss_dscore(s, it.label, margin);
        params.accumulate_score_grad(it.triple, factor, grads);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff, relative_error, seeded_rng};
    use rand::Rng;

    pub(crate) fn random_triples(
        n_entities: usize,
        n_chars: usize,
        n_relations: usize,
        count: usize,
        seed: u64,
    ) -> Vec<Triple> {
        let mut rng = seeded_rng(seed);
        (0..count)
            .map(|_| Triple {
                head: rng.gen_range(0..n_chars),
                relation: rng.gen_range(0..n_relations),
                tail: rng.gen_range(n_chars..n_entities),
            })
            .collect()
    }

    fn random_batch(params_seed: u64, kind: ModelKind) -> (ModelParams, Vec<BatchItem>) {
        let (n_entities, n_chars, n_rel, d) = (12, 6, 3, 8);
        let params = ModelParams::init(kind, n_entities, n_rel, d, params_seed).unwrap();
        let triples = random_triples(n_entities, n_chars, n_rel, 6, params_seed ^ 0xabc);
        let mut rng = seeded_rng(params_seed ^ 0x55);
        let items: Vec<BatchItem> = triples
            .iter()
            .enumerate()
            .map(|(i, &t)| BatchItem {
                triple: t,
                label: if i % 3 == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                },
                weight: rng.gen_range(0.05..1.0),
            })
            .collect();
        (params, items)
    }

    #[test]
    fn gradients_match_finite_differences_for_all_models() {
        for kind in [ModelKind::BoxE, ModelKind::RotatE, ModelKind::ComplEx] {
            for seed in 0..4 {
                let (mut params, items) = random_batch(1000 + seed, kind);
                let margin = 6.0;
                let analytic = batch_grads(&params, &items, margin);
                let base = params.data().to_vec();
                let numeric = finite_diff(
                    |x| {
                        params.data_mut().copy_from_slice(x);
                        batch_loss(&params, &items, margin)
                    },
                    &base,
                    1e-5,
                );
                params.data_mut().copy_from_slice(&base);
                let err = relative_error(&analytic, &numeric);
                assert!(err < 1e-4, "{:?} seed {seed}: rel err {err}", kind);
            }
        }
    }

    #[test]
    fn zero_weight_batch_has_zero_gradient() {
        let (params, mut items) = random_batch(7, ModelKind::BoxE);
        for it in &mut items {
            it.weight = 0.0;
        }
        let grads = batch_grads(&params, &items, 6.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn untouched_entities_have_zero_gradient() {
        let (params, items) = random_batch(9, ModelKind::BoxE);
        let touched: std::collections::HashSet<usize> = items
            .iter()
            .flat_map(|it| [it.triple.head, it.triple.tail])
            .collect();
        let grads = batch_grads(&params, &items, 6.0);
        if let ModelParams::BoxE(ref p) = params {
            for e in 0..p.n_entities {
                if touched.contains(&e) {
                    continue;
                }
                let pos = &grads[p.position_offset(e)..p.position_offset(e) + p.dim];
                let bump = &grads[p.bump_offset(e)..p.bump_offset(e) + p.dim];
                assert!(pos.iter().chain(bump).all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn scores_are_finite_under_random_stress() {
        let mut rng = seeded_rng(31);
        for kind in [ModelKind::BoxE, ModelKind::RotatE, ModelKind::ComplEx] {
            let mut params = ModelParams::init(kind, 10, 3, 8, 77).unwrap();
            for v in params.data_mut() {
                *v = rng.gen_range(-50.0..50.0);
            }
            for t in random_triples(10, 5, 3, 50, 123) {
                assert!(params.score(t).is_finite());
            }
        }
    }
}
