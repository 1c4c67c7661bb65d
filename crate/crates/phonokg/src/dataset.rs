//! Pronunciation-table ingestion and the synthetic test corpus.
//!
//! The canonical internal format is long: one record per (character,
//! dialect, component category). Wide survey tables are converted at
//! ingestion through an explicit per-dialect column map; tone-type
//! columns are never mapped and so never enter the data. Component
//! values are opaque strings compared exactly.

use crate::error::{Error, Result};
use crate::numerics::seeded_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// The three compositional parts of a Sinitic syllable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Initial,
    Final,
    Tone,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Initial, Category::Final, Category::Tone];

    pub fn index(self) -> usize {
        match self {
            Category::Initial => 0,
            Category::Final => 1,
            Category::Tone => 2,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Initial => "initial",
            Category::Final => "final",
            Category::Tone => "tone",
        };
        f.write_str(s)
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(Category::Initial),
            "final" => Ok(Category::Final),
            "tone" => Ok(Category::Tone),
            other => Err(Error::Ingest(format!("unknown category '{other}'"))),
        }
    }
}

/// One observed component of one character's reading in one dialect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PronunciationRecord {
    pub char_id: String,
    pub dialect: String,
    pub category: Category,
    pub value: String,
}

/// The cleaned survey data in long format. `dialects` and `chars` are the
/// ordered (first-occurrence) sets appearing in `records`.
#[derive(Debug, Clone, Default)]
pub struct PronunciationTable {
    pub records: Vec<PronunciationRecord>,
    pub dialects: Vec<String>,
    pub chars: Vec<String>,
}

impl PronunciationTable {
    pub fn from_records(records: Vec<PronunciationRecord>) -> Self {
        let mut dialects = Vec::new();
        let mut chars = Vec::new();
        let mut seen_d = HashSet::new();
        let mut seen_c = HashSet::new();
        for r in &records {
            if seen_d.insert(r.dialect.clone()) {
                dialects.push(r.dialect.clone());
            }
            if seen_c.insert(r.char_id.clone()) {
                chars.push(r.char_id.clone());
            }
        }
        Self {
            records,
            dialects,
            chars,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Write the canonical long TSV: `char_id dialect category value`.
    pub fn write_canonical(&self, path: &Path) -> Result<()> {
        let mut out = String::from("char_id\tdialect\tcategory\tvalue\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.char_id, r.dialect, r.category, r.value
            ));
        }
        write_atomic(path, out.as_bytes())
    }

    /// Read the canonical long TSV written by [`write_canonical`].
    pub fn read_canonical(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingest(format!("{}: empty file", path.display())))?;
        if header != "char_id\tdialect\tcategory\tvalue" {
            return Err(Error::Ingest(format!(
                "{}: unexpected canonical header '{header}'",
                path.display()
            )));
        }
        let mut records = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Ingest(format!(
                    "{}: line {}: expected 4 columns, found {}",
                    path.display(),
                    no + 2,
                    cols.len()
                )));
            }
            records.push(PronunciationRecord {
                char_id: cols[0].to_string(),
                dialect: cols[1].to_string(),
                category: cols[2].parse()?,
                value: cols[3].to_string(),
            });
        }
        Ok(Self::from_records(records))
    }
}

/// Maps wide-table column names to component categories, per dialect,
/// in a fixed dialect order. Tone-type columns are simply not listed.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    /// (dialect, per-category column name). `None` means the dialect has
    /// no column for that category.
    pub dialects: Vec<(String, [Option<String>; 3])>,
}

impl ColumnMap {
    pub fn set(&mut self, dialect: &str, category: Category, column: &str) {
        if let Some((_, cols)) = self.dialects.iter_mut().find(|(d, _)| d == dialect) {
            cols[category.index()] = Some(column.to_string());
        } else {
            let mut cols: [Option<String>; 3] = [None, None, None];
            cols[category.index()] = Some(column.to_string());
            self.dialects.push((dialect.to_string(), cols));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dialects.is_empty()
    }
}

/// Ingest a wide UTF-8 TSV (header row, first column `char_id`) into the
/// long canonical format. One record per non-empty mapped cell; empty
/// cells emit nothing; row order is preserved.
pub fn ingest_wide(path: &Path, column_map: &ColumnMap) -> Result<PronunciationTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Ingest(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.first() != Some(&"char_id") {
        return Err(Error::Ingest(format!(
            "{}: first header column must be 'char_id', found '{}'",
            path.display(),
            columns.first().unwrap_or(&"")
        )));
    }
    let col_index: HashMap<&str, usize> = columns
        .iter()
        .enumerate()
        .map(|(i, name)| (*name, i))
        .collect();

    // Resolve the map to column indices, rejecting unknown or doubly
    // assigned columns up front.
    let mut assigned: HashMap<usize, (String, Category)> = HashMap::new();
    let mut resolved: Vec<(String, [Option<usize>; 3])> = Vec::new();
    for (dialect, cols) in &column_map.dialects {
        let mut idxs: [Option<usize>; 3] = [None, None, None];
        for cat in Category::ALL {
            if let Some(name) = &cols[cat.index()] {
                let idx = *col_index.get(name.as_str()).ok_or_else(|| {
                    Error::Ingest(format!(
                        "{}: column '{name}' ({dialect} {cat}) not in header",
                        path.display()
                    ))
                })?;
                if let Some((d2, c2)) = assigned.get(&idx) {
                    return Err(Error::Ingest(format!(
                        "column '{name}' assigned twice: {d2} {c2} and {dialect} {cat}"
                    )));
                }
                assigned.insert(idx, (dialect.clone(), cat));
                idxs[cat.index()] = Some(idx);
            }
        }
        resolved.push((dialect.clone(), idxs));
    }

    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let char_id = cells[0].trim();
        if char_id.is_empty() {
            continue;
        }
        for (dialect, idxs) in &resolved {
            for cat in Category::ALL {
                if let Some(idx) = idxs[cat.index()] {
                    let value = cells.get(idx).map(|s| s.trim()).unwrap_or("");
                    if !value.is_empty() {
                        records.push(PronunciationRecord {
                            char_id: char_id.to_string(),
                            dialect: dialect.clone(),
                            category: cat,
                            value: value.to_string(),
                        });
                    }
                }
            }
        }
    }
    Ok(PronunciationTable::from_records(records))
}

/// Keep, for each (char_id, dialect, category), only the record from the
/// earliest input row; output order is stable. Extra readings of
/// polyphonic characters are dropped this way.
pub fn dedup_first(table: &PronunciationTable) -> PronunciationTable {
    let mut seen = HashSet::new();
    let records: Vec<PronunciationRecord> = table
        .records
        .iter()
        .filter(|r| seen.insert((r.char_id.clone(), r.dialect.clone(), r.category)))
        .cloned()
        .collect();
    PronunciationTable::from_records(records)
}

/// The six proto-language label tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Grade,
    Voice,
    Tone,
    She,
    Initial,
    Mu,
}

impl LabelKind {
    pub const ALL: [LabelKind; 6] = [
        LabelKind::Grade,
        LabelKind::Voice,
        LabelKind::Tone,
        LabelKind::She,
        LabelKind::Initial,
        LabelKind::Mu,
    ];

    pub fn index(self) -> usize {
        match self {
            LabelKind::Grade => 0,
            LabelKind::Voice => 1,
            LabelKind::Tone => 2,
            LabelKind::She => 3,
            LabelKind::Initial => 4,
            LabelKind::Mu => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelKind::Grade => "grade",
            LabelKind::Voice => "voice",
            LabelKind::Tone => "tone",
            LabelKind::She => "she",
            LabelKind::Initial => "initial",
            LabelKind::Mu => "mu",
        }
    }
}

/// Per-character categorical labels from the reference dictionary.
/// A `None` entry means the character is excluded from that task.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    pub entries: Vec<(String, [Option<String>; 6])>,
    index: HashMap<String, usize>,
}

impl LabelTable {
    pub fn new(entries: Vec<(String, [Option<String>; 6])>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, (char_id, _)) in entries.iter().enumerate() {
            if index.insert(char_id.clone(), i).is_some() {
                return Err(Error::Ingest(format!(
                    "duplicate char_id '{char_id}' in label table"
                )));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, char_id: &str, kind: LabelKind) -> Option<&str> {
        self.index
            .get(char_id)
            .and_then(|&i| self.entries[i].1[kind.index()].as_deref())
    }

    /// Distinct classes of one task, in first-occurrence order.
    pub fn classes(&self, kind: LabelKind) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (_, labels) in &self.entries {
            if let Some(v) = &labels[kind.index()] {
                if seen.insert(v.clone()) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("char_id\tgrade\tvoice\ttone\tshe\tinitial\tmu\n");
        for (char_id, labels) in &self.entries {
            out.push_str(char_id);
            for l in labels {
                out.push('\t');
                out.push_str(l.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Read a label TSV with header `char_id grade voice tone she initial mu`.
/// Empty cells leave the character unlabeled for that task; duplicate
/// char_id rows are an error.
pub fn ingest_labels(path: &Path) -> Result<LabelTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Ingest(format!("{}: empty file", path.display())))?;
    if header != "char_id\tgrade\tvoice\ttone\tshe\tinitial\tmu" {
        return Err(Error::Ingest(format!(
            "{}: unexpected label header '{header}'",
            path.display()
        )));
    }
    let mut entries = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Ingest(format!(
                "{}: line {}: expected 7 columns, found {}",
                path.display(),
                no + 2,
                cols.len()
            )));
        }
        let mut labels: [Option<String>; 6] = Default::default();
        for (i, cell) in cols[1..].iter().enumerate() {
            let cell = cell.trim();
            if !cell.is_empty() {
                labels[i] = Some(cell.to_string());
            }
        }
        entries.push((cols[0].trim().to_string(), labels));
    }
    LabelTable::new(entries)
}

/// Parameters of the synthetic proto-language corpus generator.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_chars: usize,
    pub n_dialects: usize,
    pub n_initials: usize,
    pub n_finals: usize,
    pub n_tones: usize,
    /// Fraction of proto classes each dialect merges onto a neighbor.
    pub merger_rate: f64,
    /// Fraction of (char, dialect, category) cells dropped.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_chars: 500,
            n_dialects: 4,
            n_initials: 40,
            n_finals: 60,
            n_tones: 30,
            merger_rate: 0.2,
            missing_rate: 0.2,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_chars == 0 || self.n_dialects == 0 {
            return Err(Error::Invalid("synthetic: counts must be positive".into()));
        }
        if self.n_initials == 0 || self.n_finals == 0 || self.n_tones == 0 {
            return Err(Error::Invalid(
                "synthetic: inventory sizes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.merger_rate) {
            return Err(Error::Invalid("synthetic: merger_rate must be in [0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Invalid("synthetic: missing_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Generate a synthetic corpus with known proto-language ground truth.
///
/// Every character draws a proto (initial, final, tone) class uniformly.
/// Each dialect realizes a class through a deterministic class-to-surface
/// map in which a seeded `merger_rate` fraction of classes collapse onto
/// their lower neighbor (resolved transitively, so merged classes share a
/// surface). Surface names are shared across dialects, which makes
/// inventories overlap exactly as merged classes coincide. The label
/// table records the proto classes.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(PronunciationTable, LabelTable)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let sizes = [spec.n_initials, spec.n_finals, spec.n_tones];
    let prefixes = ["i", "f", "t"];

    // Proto class per character and category.
    let assignments: Vec<[usize; 3]> = (0..spec.n_chars)
        .map(|_| {
            [
                rng.gen_range(0..sizes[0]),
                rng.gen_range(0..sizes[1]),
                rng.gen_range(0..sizes[2]),
            ]
        })
        .collect();

    // Per dialect and category: class -> surface class index, after
    // resolving neighbor mergers downward (class 0 never merges).
    let mut surface_maps: Vec<[Vec<usize>; 3]> = Vec::with_capacity(spec.n_dialects);
    for _ in 0..spec.n_dialects {
        let mut maps: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (ci, &n) in sizes.iter().enumerate() {
            let n_merged = ((spec.merger_rate * n as f64).floor() as usize).min(n - 1);
            let mut eligible: Vec<usize> = (1..n).collect();
            eligible.shuffle(&mut rng);
            let merged: HashSet<usize> = eligible.into_iter().take(n_merged).collect();
            let mut map = vec![0usize; n];
            for class in 0..n {
                let mut target = class;
                while merged.contains(&target) {
                    target -= 1;
                }
                map[class] = target;
            }
            maps[ci] = map;
        }
        surface_maps.push(maps);
    }

    let width = spec.n_chars.to_string().len().max(4);
    let char_ids: Vec<String> = (1..=spec.n_chars)
        .map(|i| format!("{i:0width$}"))
        .collect();
    let dialect_names: Vec<String> = (1..=spec.n_dialects).map(|i| format!("D{i}")).collect();

    let mut records = Vec::new();
    for (c, char_id) in char_ids.iter().enumerate() {
        for (d, dialect) in dialect_names.iter().enumerate() {
            for cat in Category::ALL {
                if spec.missing_rate > 0.0 && rng.gen::<f64>() < spec.missing_rate {
                    continue;
                }
                let proto = assignments[c][cat.index()];
                let surface = surface_maps[d][cat.index()][proto];
                records.push(PronunciationRecord {
                    char_id: char_id.clone(),
                    dialect: dialect.clone(),
                    category: cat,
                    value: format!("{}{}", prefixes[cat.index()], surface),
                });
            }
        }
    }

    let entries: Vec<(String, [Option<String>; 6])> = char_ids
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let [ini, fin, ton] = assignments[c];
            let labels = [
                Some(format!("G{}", fin % 4)),
                Some(format!("V{}", ini % 4)),
                Some(format!("T{ton}")),
                Some(format!("S{}", fin % 16)),
                Some(format!("I{ini}")),
                Some(format!("M{fin}")),
            ];
            (id.clone(), labels)
        })
        .collect();

    Ok((
        PronunciationTable::from_records(records),
        LabelTable::new(entries)?,
    ))
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
