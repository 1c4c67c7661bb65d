//! The bipartite character–component knowledge graph and its
//! constrained train/valid/test split.
//!
//! Characters and component values are the two node classes; an edge
//! type is a (dialect, category) pair. Component identity is
//! (category, value): the same string under two categories is two
//! distinct nodes, while the same (category, value) across dialects is
//! one shared node. Registries are ordered by first occurrence, so
//! entity and relation ids are reproducible from the same input.

use crate::dataset::{write_atomic, Category, PronunciationTable};
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;
use rand::Rng;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityKind {
    Character { char_id: String },
    Component { category: Category, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: usize,
    pub kind: EntityKind,
}

impl Entity {
    pub fn is_character(&self) -> bool {
        matches!(self.kind, EntityKind::Character { .. })
    }

    pub fn label(&self) -> String {
        match &self.kind {
            EntityKind::Character { char_id } => format!("char:{char_id}"),
            EntityKind::Component { category, value } => format!("{category}:/{value}/"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationType {
    pub id: usize,
    pub dialect: String,
    pub category: Category,
}

impl RelationType {
    pub fn label(&self) -> String {
        format!("{}-{}", self.dialect, self.category)
    }
}

/// Head is always a character entity, tail always a component entity
/// whose category matches the relation's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphStats {
    pub n_characters: usize,
    pub n_dialects: usize,
    pub n_initials: usize,
    pub n_finals: usize,
    pub n_tones: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    pub entities: Vec<Entity>,
    pub relations: Vec<RelationType>,
    pub triples: Vec<Triple>,
    char_index: HashMap<String, usize>,
    component_index: HashMap<(Category, String), usize>,
    relation_index: HashMap<(String, Category), usize>,
    /// Component entity ids per category, in registry order.
    pools: [Vec<usize>; 3],
}

impl KnowledgeGraph {
    /// Build the graph from a (deduplicated) pronunciation table: one
    /// triple per record, registries in first-occurrence order.
    pub fn build(table: &PronunciationTable) -> Self {
        let mut kg = KnowledgeGraph::default();
        let mut seen = HashSet::new();
        for r in &table.records {
            let head = kg.intern_character(&r.char_id);
            let tail = kg.intern_component(r.category, &r.value);
            let relation = kg.intern_relation(&r.dialect, r.category);
            let triple = Triple {
                head,
                relation,
                tail,
            };
            if seen.insert(triple) {
                kg.triples.push(triple);
            }
        }
        debug_assert!(kg.check_bipartite().is_ok());
        kg
    }

    fn intern_character(&mut self, char_id: &str) -> usize {
        if let Some(&id) = self.char_index.get(char_id) {
            return id;
        }
        let id = self.entities.len();
        self.entities.push(Entity {
            id,
            kind: EntityKind::Character {
                char_id: char_id.to_string(),
            },
        });
        self.char_index.insert(char_id.to_string(), id);
        id
    }

    fn intern_component(&mut self, category: Category, value: &str) -> usize {
        if let Some(&id) = self.component_index.get(&(category, value.to_string())) {
            return id;
        }
        let id = self.entities.len();
        self.entities.push(Entity {
            id,
            kind: EntityKind::Component {
                category,
                value: value.to_string(),
            },
        });
        self.component_index
            .insert((category, value.to_string()), id);
        self.pools[category.index()].push(id);
        id
    }

    fn intern_relation(&mut self, dialect: &str, category: Category) -> usize {
        if let Some(&id) = self.relation_index.get(&(dialect.to_string(), category)) {
            return id;
        }
        let id = self.relations.len();
        self.relations.push(RelationType {
            id,
            dialect: dialect.to_string(),
            category,
        });
        self.relation_index.insert((dialect.to_string(), category), id);
        id
    }

    pub fn character_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entities
            .iter()
            .filter(|e| e.is_character())
            .map(|e| e.id)
    }

    /// Component entity ids whose category matches, in registry order.
    pub fn pool(&self, category: Category) -> &[usize] {
        &self.pools[category.index()]
    }

    pub fn triple_set(&self) -> HashSet<Triple> {
        self.triples.iter().copied().collect()
    }

    pub fn stats(&self) -> GraphStats {
        let mut dialects = HashSet::new();
        for r in &self.relations {
            dialects.insert(r.dialect.as_str());
        }
        GraphStats {
            n_characters: self.char_index.len(),
            n_dialects: dialects.len(),
            n_initials: self.pools[0].len(),
            n_finals: self.pools[1].len(),
            n_tones: self.pools[2].len(),
            n_entities: self.entities.len(),
            n_relations: self.relations.len(),
            n_triples: self.triples.len(),
        }
    }

    /// Every triple must run from a character to a component of the
    /// relation's category.
    pub fn check_bipartite(&self) -> Result<()> {
        for t in &self.triples {
            let rel = &self.relations[t.relation];
            if !self.entities[t.head].is_character() {
                return Err(Error::Invalid(format!(
                    "triple head {} is not a character",
                    t.head
                )));
            }
            match &self.entities[t.tail].kind {
                EntityKind::Component { category, .. } if *category == rel.category => {}
                _ => {
                    return Err(Error::Invalid(format!(
                        "triple tail {} does not match relation category {}",
                        t.tail, rel.category
                    )))
                }
            }
        }
        Ok(())
    }

    /// Export triples as TSV: `head_label relation_label tail_label`.
    pub fn write_triples(&self, path: &Path) -> Result<()> {
        let mut out = String::from("head\trelation\ttail\n");
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.entities[t.head].label(),
                self.relations[t.relation].label(),
                self.entities[t.tail].label()
            ));
        }
        write_atomic(path, out.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        }
    }
}

/// Disjoint train/valid/test partition of the triple indices. For every
/// character and every category in which it has at least one triple, at
/// least one such triple sits in train.
#[derive(Debug, Clone)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    /// Achieved (train, valid, test) fractions.
    pub achieved: (f64, f64, f64),
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn part(&self, p: Partition) -> &[usize] {
        match p {
            Partition::Train => &self.train,
            Partition::Valid => &self.valid,
            Partition::Test => &self.test,
        }
    }

    /// Export as TSV: `triple_index partition`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let n = self.len();
        let mut parts = vec![Partition::Train; n];
        for &i in &self.valid {
            parts[i] = Partition::Valid;
        }
        for &i in &self.test {
            parts[i] = Partition::Test;
        }
        let mut out = String::from("triple_index\tpartition\n");
        for (i, p) in parts.iter().enumerate() {
            out.push_str(&format!("{i}\t{}\n", p.name()));
        }
        write_atomic(path, out.as_bytes())
    }

    /// Read back the TSV written by [`write_tsv`].
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingest(format!("{}: empty file", path.display())))?;
        if header != "triple_index\tpartition" {
            return Err(Error::Ingest(format!(
                "{}: unexpected split header '{header}'",
                path.display()
            )));
        }
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (idx, part) = line
                .split_once('\t')
                .ok_or_else(|| Error::Ingest(format!("{}: bad split line", path.display())))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Ingest(format!("{}: bad triple index '{idx}'", path.display())))?;
            match part {
                "train" => train.push(idx),
                "valid" => valid.push(idx),
                "test" => test.push(idx),
                other => {
                    return Err(Error::Ingest(format!(
                        "{}: unknown partition '{other}'",
                        path.display()
                    )))
                }
            }
        }
        let n = (train.len() + valid.len() + test.len()).max(1) as f64;
        let achieved = (
            train.len() as f64 / n,
            valid.len() as f64 / n,
            test.len() as f64 / n,
        );
        Ok(Self {
            train,
            valid,
            test,
            seed: 0,
            ratios: (0.0, 0.0, 0.0),
            achieved,
        })
    }
}

/// Split the graph's triples into train/valid/test.
///
/// One uniformly chosen triple per (character, category) group is pinned
/// to train so that no character loses all of its information for a
/// category it has data in. The remaining triples are assigned by a
/// seeded uniform draw whose probabilities are adjusted for the pinned
/// mass, so the achieved proportions track the requested ratios whenever
/// that is feasible; when the constraint forces more mass into train than
/// requested, the surplus stays in train and valid/test shrink
/// proportionally.
pub fn split(kg: &KnowledgeGraph, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(Error::Invalid("split ratios must be positive".into()));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "split ratios must sum to 1, got {}",
            rt + rv + rs
        )));
    }
    let n = kg.triples.len();
    let mut rng = seeded_rng(seed);

    // Group triple indices by (head character, relation category), in
    // first-occurrence order.
    let mut group_of: HashMap<(usize, Category), usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, t) in kg.triples.iter().enumerate() {
        let key = (t.head, kg.relations[t.relation].category);
        let g = *group_of.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let mut pinned = vec![false; n];
    for members in &groups {
        let pick = members[rng.gen_range(0..members.len())];
        pinned[pick] = true;
    }

    // Residual draw probabilities that keep the overall expectation at
    // the requested ratios: pinned mass counts toward train.
    let g = groups.len() as f64;
    let total = n as f64;
    let rest = total - g;
    let (pt, pv) = if rest <= 0.0 {
        (1.0, 0.0)
    } else if rt * total >= g {
        ((rt * total - g) / rest, rv * total / rest)
    } else {
        // Constraint already over-fills train; valid/test share the
        // remainder in their requested proportion.
        (0.0, rv / (rv + rs))
    };
    let pv = pv.min(1.0 - pt);

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        if pinned[i] {
            train.push(i);
            continue;
        }
        let u: f64 = rng.gen();
        if u < pt {
            train.push(i);
        } else if u < pt + pv {
            valid.push(i);
        } else {
            test.push(i);
        }
    }
    let achieved = (
        train.len() as f64 / total,
        valid.len() as f64 / total,
        test.len() as f64 / total,
    );
    Ok(SplitAssignment {
        train,
        valid,
        test,
        seed,
        ratios,
        achieved,
    })
}

/// Audit a split against its graph: partitions disjoint and exhaustive,
/// and every (character, category with data) group has a train triple.
pub fn audit_split(kg: &KnowledgeGraph, split: &SplitAssignment) -> Result<()> {
    let n = kg.triples.len();
    let mut seen = vec![0u8; n];
    for part in [&split.train, &split.valid, &split.test] {
        for &i in part {
            if i >= n {
                return Err(Error::Invalid(format!("split index {i} out of range")));
            }
            seen[i] += 1;
        }
    }
    if seen.iter().any(|&c| c != 1) {
        return Err(Error::Invalid("split is not a partition".into()));
    }
    let mut covered: HashSet<(usize, Category)> = HashSet::new();
    for &i in &split.train {
        let t = kg.triples[i];
        covered.insert((t.head, kg.relations[t.relation].category));
    }
    for t in &kg.triples {
        let key = (t.head, kg.relations[t.relation].category);
        if !covered.contains(&key) {
            return Err(Error::Invalid(format!(
                "character entity {} has no train triple for category {}",
                key.0, key.1
            )));
        }
    }
    Ok(())
}
