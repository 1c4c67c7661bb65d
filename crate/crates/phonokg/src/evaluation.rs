//! Rank-based link prediction metrics over tail batches: hits@k and MRR,
//! filtered by default.
//!
//! Candidate pools are restricted to the relation's category; scoring a
//! final against tone candidates would be meaningless in this graph.
//! Ties rank at their expected position so a constant scorer gains
//! nothing.

use crate::dataset::Category;
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::models::ModelParams;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, Serialize, Default)]
pub struct RelationMetrics {
    pub hits_at_1: f64,
    pub hits_at_5: f64,
    pub hits_at_10: f64,
    pub mrr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub hits_at_1: f64,
    pub hits_at_5: f64,
    pub hits_at_10: f64,
    pub mrr: f64,
    pub n: usize,
    pub per_relation: BTreeMap<String, RelationMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Which side of the evaluated triples gets ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSide {
    Tail,
    Head,
}

/// Rank of the true tail among all components of the relation's category.
///
/// Filtered mode drops candidates that form a known-true triple other
/// than the one under evaluation. Rank = 1 + (strictly higher scores)
/// + ceil(equal/2), counting only surviving candidates.
pub fn rank_tail(
    model: &ModelParams,
    triple: Triple,
    kg: &KnowledgeGraph,
    known: &HashSet<Triple>,
    filtered: bool,
) -> Result<usize> {
    rank_side(model, triple, kg, known, filtered, RankSide::Tail)
}

/// Head-side rank (candidates are all characters); diagnostics only.
pub fn rank_head(
    model: &ModelParams,
    triple: Triple,
    kg: &KnowledgeGraph,
    known: &HashSet<Triple>,
    filtered: bool,
) -> Result<usize> {
    rank_side(model, triple, kg, known, filtered, RankSide::Head)
}

fn rank_side(
    model: &ModelParams,
    triple: Triple,
    kg: &KnowledgeGraph,
    known: &HashSet<Triple>,
    filtered: bool,
    side: RankSide,
) -> Result<usize> {
    if triple.relation >= kg.relations.len() {
        return Err(Error::UnknownRelation(triple.relation));
    }
    let category: Category = kg.relations[triple.relation].category;
    let head_pool: Vec<usize>;
    let candidates: &[usize] = match side {
        RankSide::Tail => kg.pool(category),
        RankSide::Head => {
            head_pool = kg.character_ids().collect();
            &head_pool
        }
    };
    let truth = model.score(triple);
    let mut higher = 0usize;
    let mut equal = 0usize;
    for &cand in candidates {
        let probe = match side {
            RankSide::Tail => Triple {
                tail: cand,
                ..triple
            },
            RankSide::Head => Triple {
                head: cand,
                ..triple
            },
        };
        if probe == triple {
            continue;
        }
        if filtered && known.contains(&probe) {
            continue;
        }
        let s = model.score(probe);
        if s > truth {
            higher += 1;
        } else if s == truth {
            equal += 1;
        }
    }
    Ok(1 + higher + (equal + 1) / 2)
}

fn aggregate(ranks: &[usize]) -> RelationMetrics {
    let n = ranks.len();
    if n == 0 {
        return RelationMetrics::default();
    }
    let count = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
    RelationMetrics {
        hits_at_1: count(1),
        hits_at_5: count(5),
        hits_at_10: count(10),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n as f64,
        n,
    }
}

/// Evaluate a triple set. The rank of each triple is computed
/// independently (in parallel, order-preserving), then aggregated into
/// overall and per-relation metrics.
pub fn evaluate(
    model: &ModelParams,
    triples: &[Triple],
    kg: &KnowledgeGraph,
    filtered: bool,
    side: RankSide,
) -> Result<MetricsReport> {
    if triples.is_empty() {
        return Err(Error::Invalid("evaluate: no triples".into()));
    }
    let known = kg.triple_set();
    let ranks: Vec<usize> = triples
        .par_iter()
        .map(|&t| rank_side(model, t, kg, &known, filtered, side))
        .collect::<Result<Vec<usize>>>()?;
    let overall = aggregate(&ranks);
    let mut by_relation: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (t, &r) in triples.iter().zip(&ranks) {
        by_relation
            .entry(kg.relations[t.relation].label())
            .or_default()
            .push(r);
    }
    let per_relation = by_relation
        .into_iter()
        .map(|(label, ranks)| (label, aggregate(&ranks)))
        .collect();
    Ok(MetricsReport {
        hits_at_1: overall.hits_at_1,
        hits_at_5: overall.hits_at_5,
        hits_at_10: overall.hits_at_10,
        mrr: overall.mrr,
        n: overall.n,
        per_relation,
    })
}
