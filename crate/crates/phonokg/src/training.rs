//! Negative sampling, self-adversarial loss, the epoch loop, and
//! checkpoint files.

use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, SplitAssignment, Triple};
use crate::models::{
    accumulate_batch_grads, BatchItem, Label, ModelKind, ModelParams, Slot,
};
use crate::numerics::{derive_seed, log_sigmoid, seeded_rng, softmax, Adam};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

/// Which argument of a positive triple gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    TailOnly,
    Both,
}

impl CorruptionMode {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionMode::TailOnly => "tail",
            CorruptionMode::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(CorruptionMode::TailOnly),
            "both" => Ok(CorruptionMode::Both),
            other => Err(Error::Config(format!("unknown corruption mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives per positive.
    pub negatives: usize,
    /// Margin gamma of the logistic ranking loss.
    pub margin: f64,
    /// Self-adversarial softmax temperature alpha.
    pub adversarial_temperature: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub corruption: CorruptionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 2000,
            batch_size: 512,
            negatives: 16,
            margin: 12.0,
            adversarial_temperature: 1.0,
            learning_rate: 1e-3,
            seed: 42,
            corruption: CorruptionMode::TailOnly,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Invalid("train: epochs must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::Invalid("train: negatives must be >= 1".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Invalid("train: margin must be positive".into()));
        }
        if self.adversarial_temperature < 0.0 {
            return Err(Error::Invalid(
                "train: adversarial temperature must be >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("train: batch size must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Invalid("train: dimension must be positive".into()));
        }
        Ok(())
    }
}

/// Trained parameters plus the loss trace; registries stay with the graph
/// the model was trained on.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

const FILTER_RETRIES: usize = 32;

/// Draw `k` corrupted triples for one positive.
///
/// Tail corruption replaces the tail with a uniform draw from the
/// components of the relation's category; in `Both` mode each negative
/// corrupts head or tail by coin flip, head candidates being all
/// characters. Corruptions that form a known-true triple are rejected
/// and redrawn a bounded number of times, after which the draw is
/// accepted unfiltered.
pub fn sample_negatives(
    kg: &KnowledgeGraph,
    known: &HashSet<Triple>,
    positive: Triple,
    k: usize,
    mode: CorruptionMode,
    rng: &mut ChaCha8Rng,
) -> Vec<Triple> {
    let category = kg.relations[positive.relation].category;
    let tail_pool = kg.pool(category);
    let head_pool: Vec<usize> = kg.character_ids().collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let corrupt_head = match mode {
            CorruptionMode::TailOnly => false,
            CorruptionMode::Both => rng.gen::<bool>(),
        };
        let mut candidate = positive;
        for _ in 0..=FILTER_RETRIES {
            if corrupt_head {
                candidate.head = head_pool[rng.gen_range(0..head_pool.len())];
            } else {
                candidate.tail = tail_pool[rng.gen_range(0..tail_pool.len())];
            }
            if !known.contains(&candidate) {
                break;
            }
        }
        out.push(candidate);
    }
    out
}

/// Self-adversarial ranking loss for one positive and its negatives.
///
/// loss = -log s(margin + pos) - sum_j w_j log s(-margin - neg_j), with
/// w = softmax(alpha * neg scores). Returns the loss and the weights,
/// which always sum to one and are treated as constants by the gradient.
pub fn nssa_loss(
    pos_score: f64,
    neg_scores: &[f64],
    margin: f64,
    alpha: f64,
) -> (f64, Vec<f64>) {
    let scaled: Vec<f64> = neg_scores.iter().map(|s| alpha * s).collect();
    let weights = softmax(&scaled);
    let mut loss = -log_sigmoid(margin + pos_score);
    for (w, s) in weights.iter().zip(neg_scores) {
        loss -= w * log_sigmoid(-margin - s);
    }
    (loss, weights)
}

/// Run the training loop: shuffled batches per epoch, self-adversarial
/// negatives, analytic gradients, one Adam step per batch. Fully
/// deterministic under a fixed config.
pub fn train(
    kg: &KnowledgeGraph,
    split: &SplitAssignment,
    config: &TrainConfig,
    kind: ModelKind,
) -> Result<TrainedModel> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Invalid("train: empty training split".into()));
    }
    let stats = kg.stats();
    let mut params = ModelParams::init(
        kind,
        stats.n_entities,
        stats.n_relations,
        config.dim,
        derive_seed(config.seed, "init"),
    )?;
    let mut adam = Adam::new(params.n_params(), config.learning_rate);
    let mut rng = seeded_rng(derive_seed(config.seed, "train"));
    let known = kg.triple_set();

    let mut order: Vec<usize> = split.train.clone();
    let mut grads = vec![0.0; params.n_params()];
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut items: Vec<BatchItem> = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            items.clear();
            let inv_b = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let positive = kg.triples[idx];
                let negatives = sample_negatives(
                    kg,
                    &known,
                    positive,
                    config.negatives,
                    config.corruption,
                    &mut rng,
                );
                let pos_score = params.score(positive);
                let neg_scores: Vec<f64> = negatives.iter().map(|&t| params.score(t)).collect();
                let (loss, weights) = nssa_loss(
                    pos_score,
                    &neg_scores,
                    config.margin,
                    config.adversarial_temperature,
                );
                batch_loss += loss * inv_b;
                items.push(BatchItem {
                    triple: positive,
                    label: Label::Positive,
                    weight: inv_b,
                });
                for (&neg, w) in negatives.iter().zip(&weights) {
                    items.push(BatchItem {
                        triple: neg,
                        label: Label::Negative,
                        weight: w * inv_b,
                    });
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                });
            }
            grads.fill(0.0);
            accumulate_batch_grads(&params, &items, config.margin, &mut grads);
            adam.step(params.data_mut(), &grads)?;
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        loss_trace.push(epoch_loss / n_batches as f64);
    }
    Ok(TrainedModel { params, loss_trace })
}

// ---------------------------------------------------------------------------
// Checkpoint files
// ---------------------------------------------------------------------------

fn fmt_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\t")
}

/// Write a checkpoint directory: `params.tsv` with per-entity vectors
/// (positions and bumps for the box model), `boxes.tsv` or
/// `relations.tsv` with relation parameters, `trace.csv` with the loss
/// trace, and `config.snapshot` with the resolved configuration.
pub fn save_checkpoint(
    dir: &Path,
    model: &TrainedModel,
    kg: &KnowledgeGraph,
    snapshot: &BTreeMap<String, String>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = &model.params;
    let dim = params.dim();

    let mut out = String::from("entity_label\tkind");
    for k in 1..=dim {
        out.push_str(&format!("\te_{k}"));
    }
    if params.kind() == ModelKind::BoxE {
        for k in 1..=dim {
            out.push_str(&format!("\tb_{k}"));
        }
    }
    out.push('\n');
    for e in &kg.entities {
        let kind = if e.is_character() { "character" } else { "component" };
        out.push_str(&format!("{}\t{kind}", e.label()));
        out.push('\t');
        out.push_str(&fmt_row(params.entity_vector(e.id)));
        if let ModelParams::BoxE(p) = params {
            out.push('\t');
            out.push_str(&fmt_row(p.bump(e.id)));
        }
        out.push('\n');
    }
    write_atomic(&dir.join("params.tsv"), out.as_bytes())?;

    match params {
        ModelParams::BoxE(p) => {
            let mut out = String::from("relation_label\tslot");
            for k in 1..=dim {
                out.push_str(&format!("\tl_{k}"));
            }
            for k in 1..=dim {
                out.push_str(&format!("\tu_{k}"));
            }
            out.push('\n');
            for r in &kg.relations {
                for (slot, name) in [(Slot::Head, "head"), (Slot::Tail, "tail")] {
                    let bx = p.effective_box(r.id, slot);
                    out.push_str(&format!(
                        "{}\t{name}\t{}\t{}\n",
                        r.label(),
                        fmt_row(&bx.l),
                        fmt_row(&bx.u)
                    ));
                }
            }
            write_atomic(&dir.join("boxes.tsv"), out.as_bytes())?;
        }
        ModelParams::RotatE(p) => {
            let mut out = String::from("relation_label\tvalues\n");
            for r in &kg.relations {
                out.push_str(&format!("{}\t{}\n", r.label(), fmt_row(p.phases(r.id))));
            }
            write_atomic(&dir.join("relations.tsv"), out.as_bytes())?;
        }
        ModelParams::ComplEx(p) => {
            let mut out = String::from("relation_label\tvalues\n");
            for r in &kg.relations {
                out.push_str(&format!("{}\t{}\n", r.label(), fmt_row(p.relation(r.id))));
            }
            write_atomic(&dir.join("relations.tsv"), out.as_bytes())?;
        }
    }

    let mut trace = String::from("epoch,mean_loss\n");
    for (i, loss) in model.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{},{}\n", i + 1, loss));
    }
    write_atomic(&dir.join("trace.csv"), trace.as_bytes())?;

    let mut snap = String::new();
    for (k, v) in snapshot {
        snap.push_str(&format!("{k} = {v}\n"));
    }
    write_atomic(&dir.join("config.snapshot"), snap.as_bytes())
}

fn parse_floats(cells: &[&str]) -> Result<Vec<f64>> {
    cells
        .iter()
        .map(|c| {
            c.parse::<f64>()
                .map_err(|_| Error::Ingest(format!("bad float '{c}' in checkpoint")))
        })
        .collect()
}

/// Reload model parameters from a checkpoint directory, matching rows to
/// the given graph's registries by label.
pub fn load_checkpoint(dir: &Path, kg: &KnowledgeGraph, kind: ModelKind, dim: usize) -> Result<ModelParams> {
    let stats = kg.stats();
    let mut params = ModelParams::init(kind, stats.n_entities, stats.n_relations, dim, 0)?;

    let entity_ids: HashMap<String, usize> = kg
        .entities
        .iter()
        .map(|e| (e.label(), e.id))
        .collect();
    let params_path = dir.join("params.tsv");
    let text = fs::read_to_string(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let mut lines = text.lines();
    lines.next(); // header
    let mut filled = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let id = *entity_ids.get(cells[0]).ok_or_else(|| {
            Error::Ingest(format!("checkpoint entity '{}' not in graph", cells[0]))
        })?;
        let expected = if kind == ModelKind::BoxE { 2 + 2 * dim } else { 2 + dim };
        if cells.len() != expected {
            return Err(Error::Ingest(format!(
                "{}: expected {expected} columns, found {}",
                params_path.display(),
                cells.len()
            )));
        }
        let values = parse_floats(&cells[2..])?;
        match &mut params {
            ModelParams::BoxE(p) => {
                let (eo, bo) = (p.position_offset(id), p.bump_offset(id));
                p.data[eo..eo + dim].copy_from_slice(&values[..dim]);
                p.data[bo..bo + dim].copy_from_slice(&values[dim..]);
            }
            ModelParams::RotatE(p) => {
                p.data[id * dim..(id + 1) * dim].copy_from_slice(&values);
            }
            ModelParams::ComplEx(p) => {
                p.data[id * dim..(id + 1) * dim].copy_from_slice(&values);
            }
        }
        filled += 1;
    }
    if filled != stats.n_entities {
        return Err(Error::Ingest(format!(
            "checkpoint covers {filled} of {} entities",
            stats.n_entities
        )));
    }

    let relation_ids: HashMap<String, usize> = kg
        .relations
        .iter()
        .map(|r| (r.label(), r.id))
        .collect();
    match &mut params {
        ModelParams::BoxE(p) => {
            let path = dir.join("boxes.tsv");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lines = text.lines();
            lines.next();
            for line in lines {
                if line.is_empty() {
                    continue;
                }
                let cells: Vec<&str> = line.split('\t').collect();
                if cells.len() != 2 + 2 * dim {
                    return Err(Error::Ingest(format!(
                        "{}: expected {} columns, found {}",
                        path.display(),
                        2 + 2 * dim,
                        cells.len()
                    )));
                }
                let rel = *relation_ids.get(cells[0]).ok_or_else(|| {
                    Error::Ingest(format!("checkpoint relation '{}' not in graph", cells[0]))
                })?;
                let slot = match cells[1] {
                    "head" => Slot::Head,
                    "tail" => Slot::Tail,
                    other => return Err(Error::Ingest(format!("unknown box slot '{other}'"))),
                };
                let values = parse_floats(&cells[2..])?;
                p.set_corners(rel, slot, &values[..dim], &values[dim..]);
            }
        }
        ModelParams::RotatE(p) => {
            load_relation_rows(&dir.join("relations.tsv"), &relation_ids, dim / 2, |rel, values| {
                let base = p.n_entities * p.dim + rel * (dim / 2);
                p.data[base..base + dim / 2].copy_from_slice(values);
            })?;
        }
        ModelParams::ComplEx(p) => {
            load_relation_rows(&dir.join("relations.tsv"), &relation_ids, dim, |rel, values| {
                let base = (p.n_entities + rel) * dim;
                p.data[base..base + dim].copy_from_slice(values);
            })?;
        }
    }
    Ok(params)
}

fn load_relation_rows(
    path: &Path,
    relation_ids: &HashMap<String, usize>,
    width: usize,
    mut fill: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    lines.next();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 1 + width {
            return Err(Error::Ingest(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                1 + width,
                cells.len()
            )));
        }
        let rel = *relation_ids.get(cells[0]).ok_or_else(|| {
            Error::Ingest(format!("checkpoint relation '{}' not in graph", cells[0]))
        })?;
        let values = parse_floats(&cells[1..])?;
        fill(rel, &values);
    }
    Ok(())
}
